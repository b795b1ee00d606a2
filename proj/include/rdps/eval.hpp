#ifndef RDPS_EVAL_HPP_
#define RDPS_EVAL_HPP_

#include <vector>

#include "rdps/dataset.hpp"
#include "rdps/regress.hpp"
#include "rdps/step_fn.hpp"
#include "rdps/system.hpp"

namespace rdps {

// Central-interval score at miscoverage alpha = 1 - level:
//   (hi - lo) + (2/alpha)(lo - y) 1{y < lo} + (2/alpha)(y - hi) 1{y > hi}.
// Infinite endpoints yield an infinite score; callers track those through
// the defective flag rather than clipping them away.
double interval_score(const PredictionInterval& iv, double y);

struct ScoreRecord {
  double level;
  bool covered;
  double width;           // may be +inf
  double interval_score;  // may be +inf
};

ScoreRecord score_interval(const PredictionInterval& iv, double y);

// Aggregates over records (callers group by level): coverage and mean score
// are plain means; mean width skips infinite widths, whose share is reported
// separately as the defective fraction.
double coverage(const std::vector<ScoreRecord>& records);
double mean_width(const std::vector<ScoreRecord>& records);
double mean_score(const std::vector<ScoreRecord>& records);
double defective_fraction(const std::vector<ScoreRecord>& records);

// ---------------------------------------------------------------------------
// Calibration diagnostics
// ---------------------------------------------------------------------------

struct CalibrationRow {
  double alpha;
  double frac_le;       // fraction{ G_i(y_i) <= alpha }
  double frac_left_lt;  // fraction{ G_i(y_i-) < alpha }
  bool pass;            // frac_le <= alpha + slack and frac_left_lt >= alpha - slack
};

struct CalibrationReport {
  std::vector<CalibrationRow> rows;
  double slack;
  bool all_pass;
};

// Probabilistic-calibration sandwich of forecasts against outcomes at each
// alpha, within the given slack.
CalibrationReport probcal_check(const std::vector<ForecastDistribution>& forecasts,
                                const std::vector<double>& outcomes,
                                const std::vector<double>& alphas, double slack);

// In-sample check of the residual-dressing forecaster: builds the forecast
// for every training point from the same fit (residuals transformed when a
// Scale transform is given) and requires the sandwich to hold with zero
// slack -- the property is exact for this construction.
CalibrationReport insample_check(const RegressorSpec& spec, const Dataset& data,
                                 const std::vector<double>& alphas,
                                 const ResidualTransform& transform =
                                     ResidualTransform::identity());

// Alpha grid for insample_check: percentiles plus every attainable rank k/n.
std::vector<double> insample_alpha_grid(int n);

struct SystemCalibrationRow {
  double alpha;
  double frac_upper_le;      // fraction{ upper(Y) <= alpha }
  double frac_lower_left_lt; // fraction{ lower(Y-) < alpha }
  double slack;              // 3 * sqrt(alpha (1-alpha) / R)
  bool pass;
};

struct SystemCalibrationReport {
  std::vector<SystemCalibrationRow> rows;
  bool all_pass;
};

// Monte Carlo check of the out-of-sample guarantee over (system, outcome)
// pairs. A system containing a calibrated forecast G inherits the sandwich
// outward: upper >= G forces P(upper(Y) <= alpha) <= alpha, and lower <= G
// forces P(lower(Y-) < alpha) >= alpha. Checked within binomial noise.
SystemCalibrationReport system_calibration_check(
    const std::vector<PredictiveSystem>& systems,
    const std::vector<double>& outcomes, const std::vector<double>& alphas);

}  // namespace rdps

#endif  // RDPS_EVAL_HPP_
