#ifndef RDPS_SPLIT_HPP_
#define RDPS_SPLIT_HPP_

#include "rdps/dataset.hpp"
#include "rdps/regress.hpp"
#include "rdps/step_fn.hpp"
#include "rdps/system.hpp"

namespace rdps {

// Split-conformal configuration: the regressor is fit on the first
// estimation_count samples, the remaining samples form the calibration set.
// The split is positional; shuffle beforehand if needed.
struct SplitConfig {
  int estimation_count;  // N, with 1 <= N < n
  RegressorSpec spec;
  ResidualTransform transform;
};

// The residual-dressing forecast: atoms at
// yhat(x_new) + f_{x_new}^{-1}(f_i(residual_i)) over the calibration
// residuals, each with mass 1/(n-N).
ForecastDistribution split_forecast(const Dataset& data, const SplitConfig& cfg,
                                    const Eigen::RowVectorXd& x_new);

// Predictive system with bounds
//   lower(y) = #{A_i <  A(x_new,y)} / (n-N+1)
//   upper(y) = (1 + #{A_i <= A(x_new,y)}) / (n-N+1)
// over the calibration scores A_i. Thickness is exactly 1/(n-N+1).
PredictiveSystem split_system(const Dataset& data, const SplitConfig& cfg,
                              const Eigen::RowVectorXd& x_new);

// The same system assembled directly from conformity-score comparisons.
// Exists as an independent construction of split_system: the two must agree
// bit-for-bit on the normalized step representation.
PredictiveSystem split_cps_via_conformity(const Dataset& data,
                                          const SplitConfig& cfg,
                                          const Eigen::RowVectorXd& x_new);

}  // namespace rdps

#endif  // RDPS_SPLIT_HPP_
