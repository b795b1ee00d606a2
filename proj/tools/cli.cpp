// Command-line front end: simulation experiments, bound curves, one-shot
// intervals, and monotonicity diagnostics for predictive systems built from
// regression residuals.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdps/errors.hpp"
#include "rdps/full.hpp"
#include "rdps/rng.hpp"
#include "rdps/sim.hpp"
#include "rdps/split.hpp"

namespace {

using namespace rdps;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailures = 2;

// Simple numeric CSV: all columns but the last are covariates, the last is
// the outcome. A non-numeric first row is treated as a header.
Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw std::runtime_error("non-numeric data row in " + path);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged csv row in " + path);
    rows.push_back(row);
  }
  if (rows.empty() || rows.front().size() < 2)
    throw std::runtime_error("dataset csv needs at least two columns and one row");
  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(rows.front().size()) - 1;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rows[i][j];
    y(i) = rows[i][p];
  }
  return Dataset(x, y);
}

struct MethodFlags {
  std::string method = "lspm";
  double q = 0.05;
  int grid_points = 512;
  int estimation = 0;  // 0: n/2 for split methods
};

// Named method -> builder against a concrete dataset. auto-krr resolution
// here uses the dataset itself for both the bandwidth heuristic and the
// cross-validated penalty (no independent sample outside the runner).
PredictiveSystem build_named_system(const MethodFlags& flags, const Dataset& data,
                                    const Eigen::RowVectorXd& x_new,
                                    uint64_t seed) {
  const auto krr_spec = [&]() {
    const double gamma = median_heuristic_gamma(data);
    const double lambda = cross_validate_lambda(
        data, gamma, {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}, 5, derive_seed(seed, 3));
    return KrrSpec{gamma, lambda};
  };
  GridStrategy grid;
  grid.points = flags.grid_points;

  const std::string& m = flags.method;
  if (m == "lspm") return full_cps(data, OlsSpec{}, ConformityKind::studentised, x_new);
  if (m == "lspm-plain") return full_cps(data, OlsSpec{}, ConformityKind::plain, x_new);
  if (m == "krrpm")
    return full_cps(data, krr_spec(), ConformityKind::studentised, x_new);
  if (m == "rdps-ols")
    return flags.q > 0.0 ? full_rdps_deleted(data, OlsSpec{}, flags.q, x_new, grid)
                         : full_rdps(data, OlsSpec{}, x_new, LinearExactStrategy{});
  if (m == "rdps-krr") {
    const KrrSpec k = krr_spec();
    return flags.q > 0.0 ? full_rdps_deleted(data, k, flags.q, x_new, grid)
                         : full_rdps(data, k, x_new, LinearExactStrategy{});
  }
  if (m == "split-ols" || m == "split-krr") {
    const int est = flags.estimation > 0 ? flags.estimation : data.size() / 2;
    const RegressorSpec spec =
        m == "split-ols" ? RegressorSpec(OlsSpec{}) : RegressorSpec(krr_spec());
    return split_system(data, SplitConfig{est, spec, ResidualTransform::identity()},
                        x_new);
  }
  throw CLI::ValidationError("unknown method: " + m);
}

int cmd_simulate(const std::string& config_path, const std::string& records_path,
                 const std::string& summary_path, int threads) {
  ExperimentConfig cfg = load_config(config_path);
  if (threads >= 0) cfg.threads = threads;
  const ExperimentResult result = run_experiment(cfg);
  emit_csv(result, records_path);
  if (!summary_path.empty()) emit_summary_csv(summarize(result), summary_path);
  const double failures = result.failure_fraction();
  std::printf("replications: %d  methods: %zu  failures: %.4f\n",
              cfg.replications, cfg.methods.size(), failures);
  std::printf("records: %s\n", records_path.c_str());
  if (!summary_path.empty()) std::printf("summary: %s\n", summary_path.c_str());
  return failures > 0.01 ? kExitFailures : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "predictive systems with out-of-sample calibration guarantees, built "
      "from point regression residuals"};
  app.require_subcommand(1);

  // --- simulate ---
  std::string cfg_path, records_path = "records.csv", summary_path = "summary.csv";
  int sim_threads = -1;
  auto* simulate = app.add_subcommand("simulate", "run an experiment from a config file");
  simulate->add_option("--config", cfg_path, "config file (key = value lines)")
      ->required();
  simulate->add_option("--out", records_path, "records csv path")
      ->capture_default_str();
  simulate->add_option("--summary", summary_path, "summary csv path ('' to skip)")
      ->capture_default_str();
  simulate->add_option("--threads", sim_threads,
                       "worker threads (0 = auto, overrides config)")
      ->capture_default_str();

  // --- reproduce ---
  bool smoke = false;
  uint64_t rep_seed = 42;
  int rep_threads = 0;
  std::string out_dir = ".";
  auto* reproduce = app.add_subcommand(
      "reproduce",
      "canned linear and nonlinear experiments with the four benchmark methods");
  reproduce->add_flag("--smoke", smoke, "100 replications instead of 1000");
  reproduce->add_option("--seed", rep_seed, "master seed (default 42)")
      ->capture_default_str();
  reproduce->add_option("--threads", rep_threads, "worker threads (0 = auto)")
      ->capture_default_str();
  reproduce->add_option("--out-dir", out_dir, "output directory")
      ->capture_default_str();

  // --- bounds ---
  std::string setting = "linear";
  uint64_t bounds_seed = 42;
  int bounds_n = 100;
  MethodFlags bounds_flags;
  bounds_flags.method = "rdps-ols";
  std::string bounds_out = "bounds.csv";
  double bounds_x = 0.0;
  bool bounds_x_set = false;
  int bounds_grid = 401;
  auto* bounds = app.add_subcommand(
      "bounds", "emit one system's lower/upper bound curves over a y grid");
  bounds->add_option("--setting", setting, "linear|nonlinear")
      ->capture_default_str();
  bounds->add_option("--seed", bounds_seed, "data seed")
      ->capture_default_str();
  bounds->add_option("--n", bounds_n, "training size")
      ->capture_default_str();
  bounds->add_option("--method", bounds_flags.method,
                     "lspm|lspm-plain|krrpm|rdps-ols|rdps-krr|split-ols|split-krr")
      ->capture_default_str();
  bounds->add_option("--q", bounds_flags.q, "deleted trim fraction (0 disables)")
      ->capture_default_str();
  bounds->add_option("--points", bounds_flags.grid_points, "candidate grid size")
      ->capture_default_str();
  bounds->add_option("--x", bounds_x, "covariate (defaults to the held-out draw)")
      ->trigger_on_parse();
  bounds->callback([&] { bounds_x_set = bounds->count("--x") > 0; });
  bounds->add_option("--grid", bounds_grid, "output y-grid size")
      ->capture_default_str();
  bounds->add_option("--out", bounds_out, "output csv")
      ->capture_default_str();

  // --- interval ---
  std::string data_path;
  MethodFlags interval_flags;
  double level = 0.9;
  std::vector<double> xs;
  uint64_t interval_seed = 42;
  auto* interval = app.add_subcommand(
      "interval", "one-shot central prediction interval from a csv dataset");
  interval->add_option("--data", data_path, "csv: covariate columns then outcome")
      ->required();
  interval->add_option("--method", interval_flags.method, "method name")
      ->capture_default_str();
  interval->add_option("--q", interval_flags.q, "deleted trim fraction")
      ->capture_default_str();
  interval->add_option("--estimation", interval_flags.estimation,
                       "estimation count for split methods")
      ->capture_default_str();
  interval->add_option("--level", level, "interval level in (0,1)")
      ->capture_default_str();
  interval->add_option("--x", xs, "covariate coordinates of the new point")
      ->required();
  interval->add_option("--seed", interval_seed, "seed for seeded methods")
      ->capture_default_str();

  // --- check-monotonicity ---
  std::string mono_setting = "linear", mono_backend = "ols", mono_kind = "plain";
  std::string mono_data;
  uint64_t mono_seed = 42;
  int mono_n = 30, mono_grid = 201;
  double mono_x = 0.0;
  bool mono_x_given = false;
  auto* mono = app.add_subcommand("check-monotonicity",
                                  "grid diagnostic of the conformity monotonicity");
  mono->add_option("--setting", mono_setting, "linear|nonlinear (ignored with --data)")
      ->capture_default_str();
  mono->add_option("--data", mono_data, "csv dataset instead of simulated data");
  mono->add_option("--seed", mono_seed, "data seed")
      ->capture_default_str();
  mono->add_option("--n", mono_n, "training size")
      ->capture_default_str();
  mono->add_option("--backend", mono_backend, "ols|krr")
      ->capture_default_str();
  mono->add_option("--kind", mono_kind, "plain|studentised")
      ->capture_default_str();
  mono->add_option("--grid", mono_grid, "grid size")
      ->capture_default_str();
  mono->add_option("--x", mono_x, "covariate of the new point");
  mono->callback([&] { mono_x_given = mono->count("--x") > 0; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      return cmd_simulate(cfg_path, records_path, summary_path, sim_threads);

    if (reproduce->parsed()) {
      ReproduceProfile profile;
      profile.smoke = smoke;
      profile.seed = rep_seed;
      profile.threads = rep_threads;
      profile.out_dir = out_dir;
      const ReproduceOutput out = run_reproduce(profile);
      for (const auto& p : out.paths) std::printf("wrote %s\n", p.c_str());
      return out.failure_fraction > 0.01 ? kExitFailures : kExitOk;
    }

    if (bounds->parsed()) {
      const SimSetting sim{setting == "nonlinear" ? SimSetting::Kind::nonlinear
                                                  : SimSetting::Kind::linear,
                           bounds_n};
      GeneratedInstance inst = generate(sim, derive_seed(bounds_seed, 1));
      if (bounds_x_set) inst.x_new(0) = bounds_x;
      const PredictiveSystem sys =
          build_named_system(bounds_flags, inst.train, inst.x_new, bounds_seed);
      const double lo = inst.train.outcomes().minCoeff();
      const double hi = inst.train.outcomes().maxCoeff();
      const double pad = 0.25 * (hi - lo);
      std::vector<double> grid(bounds_grid);
      for (int i = 0; i < bounds_grid; ++i)
        grid[i] = lo - pad + (hi - lo + 2 * pad) * i / (bounds_grid - 1.0);
      emit_bounds_csv(sys, grid, bounds_out);
      std::printf("wrote %s (thickness %s)\n", bounds_out.c_str(),
                  format_full(thickness(sys)).c_str());
      return kExitOk;
    }

    if (interval->parsed()) {
      if (!(level > 0.0 && level < 1.0))
        throw CLI::ValidationError("--level must lie in (0,1)");
      const Dataset data = read_dataset_csv(data_path);
      Eigen::RowVectorXd x_new(data.dim());
      if (static_cast<int>(xs.size()) != data.dim())
        throw CLI::ValidationError("--x needs one value per covariate column");
      for (int j = 0; j < data.dim(); ++j) x_new(j) = xs[j];
      const PredictiveSystem sys =
          build_named_system(interval_flags, data, x_new, interval_seed);
      const PredictionInterval iv = central_interval(sys, 1.0 - level);
      std::printf("level %g interval [%s, %s]%s\n", level,
                  format_full(iv.lo).c_str(), format_full(iv.hi).c_str(),
                  iv.defective ? " (defective)" : "");
      return kExitOk;
    }

    if (mono->parsed()) {
      Dataset data = [&] {
        if (!mono_data.empty()) return read_dataset_csv(mono_data);
        const SimSetting sim{mono_setting == "nonlinear"
                                 ? SimSetting::Kind::nonlinear
                                 : SimSetting::Kind::linear,
                             mono_n};
        return generate(sim, derive_seed(mono_seed, 1)).train;
      }();
      Eigen::RowVectorXd x_new(data.dim());
      x_new.setZero();
      if (mono_x_given) x_new(0) = mono_x;
      const RegressorSpec spec =
          mono_backend == "krr"
              ? RegressorSpec(KrrSpec{median_heuristic_gamma(data), 0.1})
              : RegressorSpec(OlsSpec{});
      const ConformityKind kind = mono_kind == "studentised"
                                      ? ConformityKind::studentised
                                      : ConformityKind::plain;
      const double lo = data.outcomes().minCoeff();
      const double hi = data.outcomes().maxCoeff();
      const double span = hi > lo ? hi - lo : 1.0;
      std::vector<double> grid(mono_grid);
      for (int i = 0; i < mono_grid; ++i)
        grid[i] = lo - 2 * span + (4 * span + span) * i / (mono_grid - 1.0);
      const MonotonicityReport report =
          monotonicity_check(data, spec, kind, x_new, grid);
      if (report.ok()) {
        std::printf("no violations across %d grid points\n", mono_grid);
      } else {
        std::printf("%zu violation(s):\n", report.violations.size());
        for (const auto& v : report.violations)
          std::printf("  sample %d on (%s, %s): drop %s\n", v.sample,
                      format_full(v.y_lo).c_str(), format_full(v.y_hi).c_str(),
                      format_full(v.drop).c_str());
      }
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
