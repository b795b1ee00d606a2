#ifndef RDPS_FULL_HPP_
#define RDPS_FULL_HPP_

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "rdps/dataset.hpp"
#include "rdps/regress.hpp"
#include "rdps/system.hpp"

namespace rdps {

// ---------------------------------------------------------------------------
// Strategies for the full-conformal sup/inf over candidate outcomes
// ---------------------------------------------------------------------------

// Brute-force profile over a finite candidate grid, with analytic limit
// profiles appended when the backend's predictions are affine in the
// candidate outcome. `parallel = false` runs the plain serial reference loop.
struct GridStrategy {
  int points = 512;
  double span_mult = 3.0;  // grid spans [min(y) - mult*range, max(y) + mult*range]
  std::optional<std::pair<double, double>> range;  // explicit override
  bool parallel = true;
};

// Exact bounds via the crossing points of the indicator functions; requires
// predictions affine in the candidate outcome.
struct LinearExactStrategy {};

// Two evaluations at the analytic candidate limits; requires every
// prediction difference to be nondecreasing in the candidate outcome.
struct MonotoneLimitsStrategy {};

using FullStrategy =
    std::variant<GridStrategy, LinearExactStrategy, MonotoneLimitsStrategy>;

// Conformity score used by the conformal predictive system: the augmented-fit
// residual, optionally studentised by sqrt(1 - leverage).
enum class ConformityKind { plain, studentised };

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Full conformal predictive system from rank counts of the conformity scores
// (plain: LSPM-style; studentised: the studentised LSPM / KRRPM). The backend
// must expose augmented linear coefficients. Throws monotonicity_error when
// the assembled bounds would decrease somewhere (possible for the plain kind).
PredictiveSystem full_cps(const Dataset& data, const RegressorSpec& spec,
                          ConformityKind kind, const Eigen::RowVectorXd& x_new);

struct MonotonicityViolation {
  int sample;     // index i whose score difference decreased
  double y_lo;    // between these consecutive grid points
  double y_hi;
  double drop;
};

struct MonotonicityReport {
  std::vector<MonotonicityViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Diagnostic: evaluates y -> A(x_new, y) - A(x_i, y_i) under the augmented
// fit at each grid point (honest refits) and reports every decrease beyond
// numerical noise.
MonotonicityReport monotonicity_check(const Dataset& data,
                                      const RegressorSpec& spec,
                                      ConformityKind kind,
                                      const Eigen::RowVectorXd& x_new,
                                      const std::vector<double>& y_grid);

// Residual-distribution predictive system in the full conformal setting:
// pointwise inf/sup over candidate outcomes of the residual-dressed forecast
// refit on the augmented data.
PredictiveSystem full_rdps(const Dataset& data, const RegressorSpec& spec,
                           const Eigen::RowVectorXd& x_new,
                           const FullStrategy& strategy);

// Deleted variant: every candidate fit first drops the largest-|residual|
// samples of the augmented data and refits (grid strategy only; deletion
// breaks the affine structure).
PredictiveSystem full_rdps_deleted(const Dataset& data, const BaseSpec& inner,
                                   double trim_fraction,
                                   const Eigen::RowVectorXd& x_new,
                                   const GridStrategy& strategy = {});

// Per-sample inf/sup of the prediction difference over all candidate
// outcomes. An infinite entry means the corresponding system bound is
// uninformative in a tail.
struct EnvelopeRow {
  double inf_diff;
  double sup_diff;
};

struct InformativenessReport {
  std::vector<EnvelopeRow> rows;
  bool informative;  // every row finite
  bool approximate;  // grid-sampled rather than analytic
};

InformativenessReport informativeness_envelope(const Dataset& data,
                                               const RegressorSpec& spec,
                                               const Eigen::RowVectorXd& x_new);

// Fast full RDPS for the subgradient quantile backend: the final parameters
// depend on the candidate outcome only through one indicator, so two forced
// runs (indicator pinned to 0 and to 1, consistently across passes) yield the
// exact bounds up to the per-branch handling of the candidate's own atom.
PredictiveSystem quantile_sgd_full_rdps(const Dataset& data,
                                        const QuantileSgdSpec& spec,
                                        const Eigen::RowVectorXd& x_new);

// Candidate outcomes used by GridStrategy for a dataset.
std::vector<double> default_y_grid(const Dataset& data, const GridStrategy& g);

// Candidate where the i-th rank indicator flips: (y - btilde) / (a_new - a_i).
double crossing_candidate(double a_new, double a_i, double btilde, double y);

}  // namespace rdps

#endif  // RDPS_FULL_HPP_
