#include "rdps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rdps {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double interval_score(const PredictionInterval& iv, double y) {
  const double alpha = 1.0 - iv.level;
  if (std::isinf(iv.lo) || std::isinf(iv.hi)) return kInf;
  double s = iv.hi - iv.lo;
  if (y < iv.lo) s += 2.0 / alpha * (iv.lo - y);
  if (y > iv.hi) s += 2.0 / alpha * (y - iv.hi);
  return s;
}

ScoreRecord score_interval(const PredictionInterval& iv, double y) {
  return ScoreRecord{iv.level, iv.lo <= y && y <= iv.hi, iv.hi - iv.lo,
                     interval_score(iv, y)};
}

double coverage(const std::vector<ScoreRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records");
  double covered = 0.0;
  for (const auto& r : records) covered += r.covered ? 1.0 : 0.0;
  return covered / static_cast<double>(records.size());
}

double mean_width(const std::vector<ScoreRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records");
  double total = 0.0;
  int finite = 0;
  for (const auto& r : records) {
    if (std::isinf(r.width)) continue;
    total += r.width;
    ++finite;
  }
  return finite > 0 ? total / finite : kInf;
}

double mean_score(const std::vector<ScoreRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records");
  double total = 0.0;
  for (const auto& r : records) total += r.interval_score;
  return total / static_cast<double>(records.size());
}

double defective_fraction(const std::vector<ScoreRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records");
  double bad = 0.0;
  for (const auto& r : records) bad += std::isinf(r.width) ? 1.0 : 0.0;
  return bad / static_cast<double>(records.size());
}

namespace {

CalibrationReport sandwich_report(const std::vector<double>& pit,
                                  const std::vector<double>& pit_left,
                                  const std::vector<double>& alphas,
                                  double slack) {
  const double n = static_cast<double>(pit.size());
  CalibrationReport report;
  report.slack = slack;
  report.all_pass = true;
  for (double alpha : alphas) {
    double le = 0.0, lt = 0.0;
    for (std::size_t i = 0; i < pit.size(); ++i) {
      if (pit[i] <= alpha) le += 1.0;
      if (pit_left[i] < alpha) lt += 1.0;
    }
    CalibrationRow row;
    row.alpha = alpha;
    row.frac_le = le / n;
    row.frac_left_lt = lt / n;
    row.pass = row.frac_le <= alpha + slack && row.frac_left_lt >= alpha - slack;
    report.all_pass = report.all_pass && row.pass;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace

CalibrationReport probcal_check(const std::vector<ForecastDistribution>& forecasts,
                                const std::vector<double>& outcomes,
                                const std::vector<double>& alphas, double slack) {
  if (forecasts.size() != outcomes.size())
    throw std::invalid_argument("forecast/outcome length mismatch");
  if (forecasts.empty()) throw std::invalid_argument("no forecasts");

  std::vector<double> pit(forecasts.size()), pit_left(forecasts.size());
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    pit[i] = forecasts[i](outcomes[i]);
    pit_left[i] = forecasts[i].left_limit(outcomes[i]);
  }
  return sandwich_report(pit, pit_left, alphas, slack);
}

std::vector<double> insample_alpha_grid(int n) {
  std::vector<double> alphas;
  for (int j = 1; j <= 99; ++j) alphas.push_back(static_cast<double>(j) / 100.0);
  for (int k = 1; k < n; ++k)
    alphas.push_back(static_cast<double>(k) / static_cast<double>(n));
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  return alphas;
}

CalibrationReport insample_check(const RegressorSpec& spec, const Dataset& data,
                                 const std::vector<double>& alphas,
                                 const ResidualTransform& transform) {
  const FittedRegressor model = fit(spec, data);
  const auto sigma = make_scale_fn(transform, spec, data, model);
  const int n = data.size();

  // The forecast for sample i has atoms at yhat_i + f_i^{-1}(f_k(eps_k)), so
  // G_i(y_i) is the rank of the i-th transformed residual among all of them.
  // The rank is counted in score space: mapping scores into outcome space and
  // back would round y_i off its own atom and break the exactness this check
  // is asserting.
  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i)
    scores[i] = sigma ? model.residuals()(i) / sigma(data.covariate(i))
                      : model.residuals()(i);
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> pit(n), pit_left(n);
  for (int i = 0; i < n; ++i) {
    const auto le = std::upper_bound(sorted.begin(), sorted.end(), scores[i]);
    const auto lt = std::lower_bound(sorted.begin(), sorted.end(), scores[i]);
    pit[i] = static_cast<double>(le - sorted.begin()) / n;
    pit_left[i] = static_cast<double>(lt - sorted.begin()) / n;
  }
  return sandwich_report(pit, pit_left, alphas, 0.0);
}

SystemCalibrationReport system_calibration_check(
    const std::vector<PredictiveSystem>& systems,
    const std::vector<double>& outcomes, const std::vector<double>& alphas) {
  if (systems.size() != outcomes.size())
    throw std::invalid_argument("system/outcome length mismatch");
  if (systems.empty()) throw std::invalid_argument("no systems");

  const double r = static_cast<double>(systems.size());
  std::vector<double> up(systems.size()), low_left(systems.size());
  for (std::size_t i = 0; i < systems.size(); ++i) {
    up[i] = systems[i].upper()(outcomes[i]);
    low_left[i] = systems[i].lower().left_limit(outcomes[i]);
  }

  SystemCalibrationReport report;
  report.all_pass = true;
  for (double alpha : alphas) {
    SystemCalibrationRow row;
    row.alpha = alpha;
    row.slack = 3.0 * std::sqrt(alpha * (1.0 - alpha) / r);
    double le = 0.0, lt = 0.0;
    for (std::size_t i = 0; i < systems.size(); ++i) {
      if (up[i] <= alpha) le += 1.0;
      if (low_left[i] < alpha) lt += 1.0;
    }
    row.frac_upper_le = le / r;
    row.frac_lower_left_lt = lt / r;
    row.pass = row.frac_upper_le <= alpha + row.slack &&
               row.frac_lower_left_lt >= alpha - row.slack;
    report.all_pass = report.all_pass && row.pass;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace rdps
