#ifndef RDPS_REGRESS_HPP_
#define RDPS_REGRESS_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "rdps/dataset.hpp"

namespace rdps {

// ---------------------------------------------------------------------------
// Backend specifications
// ---------------------------------------------------------------------------

// Ordinary least squares on the design [1 | X]. Intercept-only fits are
// expressed as a dataset with p = 0.
struct OlsSpec {
  bool operator==(const OlsSpec&) const = default;
};

// Kernel ridge regression with the Laplacian kernel exp(-||x-x'||/gamma).
struct KrrSpec {
  double gamma;
  double lambda;
  bool operator==(const KrrSpec&) const = default;
};

// Linear quantile regression fit by randomized subgradient passes with step
// size step_scale/sqrt(t); an intercept coordinate is appended to x. When
// n_passes > 1 the per-pass final parameters are averaged. step_scale
// defaults to 0.5 * sd(y) when unset.
struct QuantileSgdSpec {
  double tau = 0.5;
  std::optional<double> step_scale;
  int n_passes = 10;
  uint64_t seed = 0;
  bool operator==(const QuantileSgdSpec&) const = default;
};

// Exponentially weighted average of the (optionally trimmed) outcomes,
// weights exp(-||x - x_j||/bandwidth), self-weight included. Outcomes are
// clipped to [trim_lo, trim_hi] before averaging when trimming is enabled.
struct KernelSmootherSpec {
  double bandwidth = 1.0;
  std::optional<double> trim_lo;  // lower cutoff t2
  std::optional<double> trim_hi;  // upper cutoff t1
  bool clipping() const { return trim_lo.has_value() || trim_hi.has_value(); }
  bool operator==(const KernelSmootherSpec&) const = default;
};

using BaseSpec = std::variant<OlsSpec, KrrSpec, QuantileSgdSpec, KernelSmootherSpec>;

// Fit the inner backend, drop the ceil(trim_fraction * n) samples with the
// largest absolute residuals, refit on the survivors. Wrapping another
// DeletedSpec is ruled out by construction.
struct DeletedSpec {
  BaseSpec inner;
  double trim_fraction = 0.05;
  bool operator==(const DeletedSpec&) const = default;
};

using RegressorSpec = std::variant<OlsSpec, KrrSpec, QuantileSgdSpec,
                                   KernelSmootherSpec, DeletedSpec>;

// ---------------------------------------------------------------------------
// Fitted models
// ---------------------------------------------------------------------------

namespace detail {
class FitImpl;
}

// A fitted point-prediction model. Immutable and cheap to copy; safe to share
// across threads.
class FittedRegressor {
 public:
  explicit FittedRegressor(std::shared_ptr<const detail::FitImpl> impl);

  double predict(const Eigen::RowVectorXd& x) const;
  Eigen::VectorXd predict_all(const Eigen::MatrixXd& xs) const;

  // In-sample predictions and residuals y_i - yhat_i over the fit's dataset.
  const Eigen::VectorXd& fitted() const;
  const Eigen::VectorXd& residuals() const;

  // Hat (OLS) or smoother (KRR, untrimmed kernel smoother) matrix over the
  // training set. Throws capability_error when the backend has none.
  bool has_hat_matrix() const;
  const Eigen::MatrixXd& hat_matrix() const;

 private:
  std::shared_ptr<const detail::FitImpl> impl_;
};

FittedRegressor fit(const RegressorSpec& spec, const Dataset& data);
FittedRegressor fit(const BaseSpec& spec, const Dataset& data);

FittedRegressor fit_ols(const Dataset& data);
FittedRegressor fit_krr(const Dataset& data, double gamma, double lambda);
FittedRegressor fit_quantile_sgd(const Dataset& data, const QuantileSgdSpec& spec);
FittedRegressor fit_kernel_smoother(const Dataset& data, const KernelSmootherSpec& spec);
FittedRegressor deleted_fit(const Dataset& data, const BaseSpec& inner,
                            double trim_fraction);

// Indices kept by the deletion rule: the ceil(trim_fraction * n) samples with
// the largest |residual| are dropped, later-indexed samples going first among
// exact ties. Returned sorted ascending.
std::vector<int> deletion_survivors(const Eigen::VectorXd& residuals,
                                    double trim_fraction);

// Chooses the candidate with the smallest mean squared out-of-fold error;
// ties break toward the larger lambda. Deterministic given the seed.
double cross_validate_lambda(const Dataset& data, double gamma,
                             const std::vector<double>& candidates, int k_folds,
                             uint64_t seed);

// Median pairwise covariate distance; 1.0 when degenerate.
double median_heuristic_gamma(const Dataset& data);

// ---------------------------------------------------------------------------
// Augmented-fit linear structure
// ---------------------------------------------------------------------------

// For backends whose prediction is affine in the observations: when the model
// is fit to (x_1,y_1),...,(x_n,y_n),(x_new,y'), the prediction for sample i
// is a[i]*y' + b[i] (i = n is the new point itself). leverage holds the
// diagonal of the augmented hat/smoother matrix.
struct LinearCoefficients {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd leverage;
};

bool has_linear_coefficients(const RegressorSpec& spec);

// Throws capability_error for QuantileSgd, Deleted, and smoothers with
// trimming enabled (the prediction is then not affine in y').
LinearCoefficients linear_coefficients(const RegressorSpec& spec,
                                       const Dataset& data,
                                       const Eigen::RowVectorXd& x_new);

// ---------------------------------------------------------------------------
// Residual transforms
// ---------------------------------------------------------------------------

// The strictly increasing residual map f_x. Identity uses f_x(t) = t; Scale
// uses f_x(t) = t / sigma(x). When no explicit sigma is supplied, Scale is
// realized by an absolute-residual companion regression of the same backend
// kind, floored at 1e-6.
struct ResidualTransform {
  enum class Kind { identity, scale };
  Kind kind = Kind::identity;
  std::function<double(const Eigen::RowVectorXd&)> sigma;

  static ResidualTransform identity() { return {}; }
  static ResidualTransform scale() { return {Kind::scale, nullptr}; }
  static ResidualTransform scale_with(
      std::function<double(const Eigen::RowVectorXd&)> fn) {
    return {Kind::scale, std::move(fn)};
  }
};

// Materialized sigma-hat for a Scale transform (nullptr for Identity):
// the explicit function if given, else the companion fit to |residuals| of
// `fitted` over `training`.
std::function<double(const Eigen::RowVectorXd&)> make_scale_fn(
    const ResidualTransform& transform, const RegressorSpec& spec,
    const Dataset& training, const FittedRegressor& fitted);

// ---------------------------------------------------------------------------
// Subgradient quantile core (shared with the fast full-conformal path)
// ---------------------------------------------------------------------------

struct QuantileSgdRun {
  Eigen::VectorXd beta;             // averaged final parameters
  std::vector<double> thresholds;   // per pass: beta^T x at the tracked row,
                                    // taken just before its update
};

// Runs the randomized subgradient passes over the rows of `design` (which
// already carry the intercept coordinate). If tracked >= 0, the indicator of
// that row's update is pinned to forced_value instead of being computed from
// y, and the decision threshold is recorded per pass. The sample order per
// pass depends only on (seed, pass, row count).
QuantileSgdRun run_quantile_sgd(const Eigen::MatrixXd& design,
                                const Eigen::VectorXd& y, double tau,
                                double step_scale, int n_passes, uint64_t seed,
                                int tracked = -1, int forced_value = 0);

}  // namespace rdps

#endif  // RDPS_REGRESS_HPP_
