#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "rdps/eval.hpp"
#include "rdps/rng.hpp"
#include "rdps/sim.hpp"

using namespace rdps;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

PredictionInterval iv(double level, double lo, double hi) {
  return PredictionInterval{level, lo, hi, std::isinf(lo) || std::isinf(hi)};
}
}  // namespace

TEST_SUITE("eval") {

TEST_CASE("interval score formula") {
  CHECK(interval_score(iv(0.8, 0.0, 1.0), 0.5) == 1.0);  // inside: the width
  CHECK(interval_score(iv(0.8, 0.0, 1.0), 1.5) ==
        doctest::Approx(6.0).epsilon(1e-12));  // 1 + 10 * 0.5
  CHECK(interval_score(iv(0.8, 0.0, 1.0), -0.2) ==
        doctest::Approx(3.0).epsilon(1e-12));  // 1 + 10 * 0.2
  CHECK(interval_score(iv(0.9, 2.0, 2.0), 2.0) == 0.0);
  CHECK(interval_score(iv(0.8, 0.0, kInf), 0.5) == kInf);
}

TEST_CASE("interval score dominates the width") {
  Rng rng(30);
  for (int k = 0; k < 200; ++k) {
    const double lo = rng.next_uniform(-2.0, 0.0);
    const double hi = lo + rng.next_uniform(0.0, 3.0);
    const double y = rng.next_uniform(-4.0, 4.0);
    const double s = interval_score(iv(0.8, lo, hi), y);
    CHECK(s >= hi - lo - 1e-12);
    if (lo <= y && y <= hi) CHECK(s == hi - lo);
    else CHECK(s > hi - lo);
  }
}

TEST_CASE("central interval minimizes the expected interval score") {
  // Sample outcomes, compare the central 80% interval of their ecdf with
  // shifted quantile pairs.
  Rng rng(31);
  std::vector<double> sample(400);
  for (auto& v : sample) v = rng.next_normal();
  const StepFn f = ecdf(sample).cdf();

  const auto mean_score_for = [&](double lo_tau, double hi_tau) {
    const PredictionInterval probe =
        iv(0.8, quantile(f, lo_tau), quantile(f, hi_tau));
    double total = 0.0;
    for (double y : sample) total += interval_score(probe, y);
    return total / static_cast<double>(sample.size());
  };
  const double central = mean_score_for(0.1, 0.9);
  for (double shift : {-0.06, -0.03, 0.03, 0.06})
    CHECK(central <= mean_score_for(0.1 + shift, 0.9 + shift) + 1e-12);
}

TEST_CASE("record aggregation") {
  std::vector<ScoreRecord> records;
  for (int i = 0; i < 10; ++i)
    records.push_back({0.8, i % 2 == 0, static_cast<double>(i % 3 + 1), 1.0});
  CHECK(coverage(records) == 0.5);

  const std::vector<ScoreRecord> widths{{0.8, true, 1.0, 1.0},
                                        {0.8, true, 2.0, 2.0},
                                        {0.8, true, 3.0, 3.0}};
  CHECK(mean_width(widths) == 2.0);
  CHECK(mean_score(widths) == 2.0);
  CHECK(defective_fraction(widths) == 0.0);

  std::vector<ScoreRecord> with_inf = widths;
  with_inf.push_back({0.8, true, kInf, kInf});
  CHECK(mean_width(with_inf) == 2.0);  // infinite widths excluded
  CHECK(defective_fraction(with_inf) == 0.25);
  CHECK(mean_score(with_inf) == kInf);

  const std::vector<ScoreRecord> all_covered{{0.8, true, 1.0, 1.0}};
  CHECK(coverage(all_covered) == 1.0);
  CHECK_THROWS_AS(coverage({}), std::invalid_argument);
}

TEST_CASE("probabilistic calibration of the oracle forecaster") {
  // Forecasting with the true data distribution passes the sandwich within
  // Monte Carlo slack.
  Rng rng(32);
  std::vector<double> pool(2000);
  for (auto& v : pool) v = rng.next_normal();
  const ForecastDistribution truth = ecdf(pool);

  const int n = 1000;
  std::vector<ForecastDistribution> forecasts(n, truth);
  std::vector<double> outcomes(n);
  for (auto& v : outcomes) v = rng.next_normal();

  std::vector<double> alphas;
  for (double a = 0.05; a < 0.96; a += 0.05) alphas.push_back(a);
  CHECK(probcal_check(forecasts, outcomes, alphas, 0.05).all_pass);
}

TEST_CASE("point mass at the outcome is perfectly calibrated") {
  std::vector<ForecastDistribution> forecasts;
  std::vector<double> outcomes;
  for (double y : {0.3, -1.0, 2.0}) {
    forecasts.push_back(ecdf({y}));
    outcomes.push_back(y);
  }
  const auto report = probcal_check(forecasts, outcomes, {0.1, 0.5, 0.9}, 0.0);
  CHECK(report.all_pass);
  for (const auto& row : report.rows) {
    CHECK(row.frac_le == 0.0);       // G(y) = 1 > alpha
    CHECK(row.frac_left_lt == 1.0);  // G(y-) = 0 < alpha
  }
}

TEST_CASE("a forecast far above the outcomes fails") {
  std::vector<ForecastDistribution> forecasts;
  std::vector<double> outcomes;
  for (double y : {0.0, 1.0, 2.0}) {
    forecasts.push_back(ecdf({y + 100.0}));
    outcomes.push_back(y);
  }
  const auto report = probcal_check(forecasts, outcomes, {0.5}, 0.0);
  CHECK(!report.all_pass);
  CHECK(report.rows[0].frac_le == 1.0);  // G(y) = 0 <= alpha always
}

TEST_CASE("in-sample calibration of the residual forecaster is exact") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_below(40));
    const GeneratedInstance inst = gen_linear(n, rng.next_u64());
    const auto alphas = insample_alpha_grid(n);
    CHECK(insample_check(OlsSpec{}, inst.train, alphas).all_pass);
    CHECK(insample_check(KrrSpec{1.0, 0.5}, inst.train, alphas).all_pass);
    CHECK(insample_check(OlsSpec{}, inst.train, alphas,
                         ResidualTransform::scale())
              .all_pass);
  }
}

TEST_CASE("in-sample calibration with a single sample") {
  Eigen::MatrixXd x(1, 1);
  x(0, 0) = 0.7;
  const Dataset data(x, Eigen::VectorXd::Constant(1, 3.0));
  KernelSmootherSpec sm;
  sm.bandwidth = 1.0;
  CHECK(insample_check(RegressorSpec(sm), data, {0.25, 0.5, 0.75}).all_pass);
}

TEST_CASE("system calibration check tracks the two-sided sandwich") {
  Rng rng(34);
  const int reps = 400;
  std::vector<double> alphas;
  for (double a = 0.1; a < 0.95; a += 0.1) alphas.push_back(a);

  // Vacuous bounds (lower 0, upper 1) pass trivially: the upper bound never
  // dips to alpha and the lower bound always sits below it.
  std::vector<PredictiveSystem> vacuous;
  std::vector<double> outcomes;
  for (int r = 0; r < reps; ++r) {
    vacuous.emplace_back(StepFn(0.0), StepFn(1.0));
    outcomes.push_back(rng.next_normal());
  }
  const auto vacuous_report = system_calibration_check(vacuous, outcomes, alphas);
  CHECK(vacuous_report.all_pass);
  CHECK(vacuous_report.rows[0].frac_upper_le == 0.0);
  CHECK(vacuous_report.rows[0].frac_lower_left_lt == 1.0);

  // A fixed distribution that ignores a strong covariate signal fails: both
  // bounds equal the marginal ecdf of one covariate slice.
  std::vector<PredictiveSystem> wrong;
  std::vector<double> strong;
  const StepFn fixed = ecdf({-0.1, -0.05, 0.0, 0.05, 0.1}).cdf();
  for (int r = 0; r < reps; ++r) {
    wrong.emplace_back(fixed, fixed);
    strong.push_back(10.0 * rng.next_normal());  // far wider than the forecast
  }
  CHECK(!system_calibration_check(wrong, strong, alphas).all_pass);

  // Split systems from exchangeable draws pass it.
  std::vector<PredictiveSystem> good;
  std::vector<double> ys;
  for (int r = 0; r < reps; ++r) {
    const GeneratedInstance inst = gen_linear(30, derive_seed(4242, r));
    const SplitConfig cfg{15, RegressorSpec(OlsSpec{}),
                          ResidualTransform::identity()};
    good.push_back(split_system(inst.train, cfg, inst.x_new));
    ys.push_back(inst.y_new);
  }
  CHECK(system_calibration_check(good, ys, alphas).all_pass);
}

}  // TEST_SUITE
