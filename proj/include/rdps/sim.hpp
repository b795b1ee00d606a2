#ifndef RDPS_SIM_HPP_
#define RDPS_SIM_HPP_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rdps/dataset.hpp"
#include "rdps/eval.hpp"
#include "rdps/full.hpp"
#include "rdps/split.hpp"

namespace rdps {

// ---------------------------------------------------------------------------
// Data generators
// ---------------------------------------------------------------------------

struct SimSetting {
  enum class Kind { linear, nonlinear };
  Kind kind = Kind::linear;
  int n = 100;
};

struct GeneratedInstance {
  Dataset train;             // n samples
  Eigen::RowVectorXd x_new;  // held-out covariate
  double y_new;              // held-out outcome
};

// Linear setting: X ~ N(0,1), Y ~ N(X, 1). Draws n+1 iid pairs; the last is
// held out.
GeneratedInstance gen_linear(int n, uint64_t seed);

// Nonlinear setting: X ~ Uniform(0,10), Y = 2X + 5 sin(X) + eta with
// eta ~ N(0, (x/5)^2).
GeneratedInstance gen_nonlinear(int n, uint64_t seed);

GeneratedInstance generate(const SimSetting& setting, uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

// KRR tuned per replication: bandwidth from the median heuristic on the
// replication's training data, lambda by 5-fold cross-validation on an
// independently generated sample of the same size.
struct AutoKrr {};

using BackendChoice = std::variant<RegressorSpec, AutoKrr>;

struct SplitCpsMethod {
  int estimation_count;
  BackendChoice backend;
  ResidualTransform transform;
};

struct FullCpsMethod {
  BackendChoice backend;
  ConformityKind kind = ConformityKind::studentised;
};

struct FullRdpsMethod {
  BackendChoice backend;
  double trim_fraction = 0.0;  // 0 disables deletion
  FullStrategy strategy = GridStrategy{};
};

struct MethodSpec {
  std::string name;
  std::variant<SplitCpsMethod, FullCpsMethod, FullRdpsMethod> op;
};

struct LevelGrid {
  std::vector<double> levels;
  static LevelGrid defaults();  // 0.50, 0.55, ..., 0.95
};

struct ExperimentConfig {
  SimSetting setting;
  std::vector<MethodSpec> methods;
  int replications = 1000;
  LevelGrid levels = LevelGrid::defaults();
  uint64_t master_seed = 42;
  int threads = 0;  // 0 = auto (RDPS_THREADS env or the OpenMP default)
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct LevelCell {
  double level;
  bool covered;
  double width;
  double score;
};

struct ReplicationCell {
  bool failed = false;
  std::string reason;
  double thickness = 0.0;
  std::vector<LevelCell> levels;
};

struct ExperimentResult {
  std::vector<std::string> method_names;
  std::vector<double> levels;
  std::vector<std::vector<ReplicationCell>> cells;  // [method][replication]

  double failure_fraction() const;

  // Equality over the numeric payload (failure reasons are not compared).
  bool operator==(const ExperimentResult& other) const;
};

// Parallel runner (OpenMP over replications; per-replication seeds make the
// result independent of scheduling) and the serial reference loop.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment_serial(const ExperimentConfig& cfg);

struct SummaryRow {
  std::string method;
  double level;
  double coverage;
  double mean_width;
  double mean_score;
  double defective_fraction;
  double median_thickness;
};

std::vector<SummaryRow> summarize(const ExperimentResult& result);

// ---------------------------------------------------------------------------
// CSV persistence (UTF-8, LF, 17 significant digits)
// ---------------------------------------------------------------------------

// Long format: method,replication,level,covered,width,interval_score,thickness
void emit_csv(const ExperimentResult& result, const std::string& path);
ExperimentResult parse_csv(const std::string& path);

void emit_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path);

// y,lower,upper rows over the given grid.
void emit_bounds_csv(const PredictiveSystem& system,
                     const std::vector<double>& y_grid, const std::string& path);

std::string format_full(double v);  // %.17g

// ---------------------------------------------------------------------------
// Config files and canned profiles
// ---------------------------------------------------------------------------

// Flat key = value text; see README for the schema.
ExperimentConfig load_config(const std::string& path);

// The four-method benchmark (studentised least-squares and kernel-ridge
// prediction machines, deleted residual-distribution systems on both
// backends) for one simulation setting.
ExperimentConfig reproduce_config(SimSetting::Kind kind, int replications,
                                  uint64_t seed);

struct ReproduceProfile {
  bool smoke = false;  // 100 replications instead of 1000
  uint64_t seed = 42;
  int threads = 0;
  std::string out_dir = ".";
};

struct ReproduceOutput {
  std::vector<std::string> paths;
  double failure_fraction;
};

ReproduceOutput run_reproduce(const ReproduceProfile& profile);

}  // namespace rdps

#endif  // RDPS_SIM_HPP_
