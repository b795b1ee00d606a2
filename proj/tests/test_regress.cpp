#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "rdps/dataset.hpp"
#include "rdps/errors.hpp"
#include "rdps/regress.hpp"
#include "rdps/rng.hpp"

using namespace rdps;

namespace {

Dataset make_1d(const std::vector<double>& x, const std::vector<double>& y) {
  Eigen::MatrixXd xm(x.size(), 1);
  Eigen::VectorXd yv(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm(i, 0) = x[i];
    yv(i) = y[i];
  }
  return Dataset(xm, yv);
}

Dataset intercept_only(const std::vector<double>& y) {
  Eigen::MatrixXd xm(y.size(), 0);
  Eigen::VectorXd yv(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) yv(i) = y[i];
  return Dataset(xm, yv);
}

Dataset random_1d(int n, Rng& rng) {
  std::vector<double> x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.next_normal();
    y[i] = 0.5 * x[i] + rng.next_normal();
  }
  return make_1d(x, y);
}

Eigen::RowVectorXd point(double v) {
  Eigen::RowVectorXd x(1);
  x(0) = v;
  return x;
}

}  // namespace

TEST_SUITE("regress") {

TEST_CASE("ols recovers an exact line") {
  const Dataset data = make_1d({0.0, 1.0, 2.0}, {0.0, 1.0, 2.0});
  const FittedRegressor m = fit_ols(data);
  CHECK(m.predict(point(3.0)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m.residuals().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("intercept-only hat matrix is the averaging projector") {
  const Dataset data = intercept_only({1.0, 4.0, -2.0});
  const FittedRegressor m = fit_ols(data);
  const Eigen::MatrixXd& h = m.hat_matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(h(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("ols residuals orthogonal to the covariate column") {
  Rng rng(10);
  const Dataset data = random_1d(20, rng);
  const FittedRegressor m = fit_ols(data);
  // Normal equations: X^T (y - X beta) = 0.
  const double dot = (data.covariates().col(0).array() * m.residuals().array()).sum();
  CHECK(std::abs(dot) < 1e-8);
  CHECK(std::abs(m.residuals().sum()) < 1e-8);
}

TEST_CASE("ols hat matrix properties") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Dataset data = random_1d(15, rng);
    const FittedRegressor m = fit_ols(data);
    const Eigen::MatrixXd& h = m.hat_matrix();
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((h * h - h).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(h.trace() == doctest::Approx(2.0).epsilon(1e-8));
    for (int i = 0; i < 15; ++i) {
      CHECK(h(i, i) >= -1e-12);
      CHECK(h(i, i) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("ols rejects rank-deficient designs") {
  // Covariate column constant: collinear with the intercept.
  const Dataset data = make_1d({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0});
  CHECK_THROWS_WITH_AS(fit_ols(data),
                       doctest::Contains("rank-deficient"), numeric_error);
}

TEST_CASE("krr single point closed form") {
  const Dataset data = make_1d({0.0}, {5.0});
  for (double lambda : {0.1, 1.0, 7.5}) {
    const FittedRegressor m = fit_krr(data, 1.0, lambda);
    CHECK(m.predict(point(0.0)) ==
          doctest::Approx(5.0 / (1.0 + lambda)).epsilon(1e-12));
  }
}

TEST_CASE("krr shrinks to zero for large lambda") {
  Rng rng(12);
  const Dataset data = random_1d(10, rng);
  const FittedRegressor m = fit_krr(data, 1.0, 1e9);
  for (double v : {-1.0, 0.0, 2.0})
    CHECK(std::abs(m.predict(point(v))) < 1e-6);
}

TEST_CASE("krr matches a direct dense solve") {
  Rng rng(13);
  const Dataset data = random_1d(10, rng);
  const double gamma = 0.8, lambda = 0.3;
  const FittedRegressor m = fit_krr(data, gamma, lambda);

  Eigen::MatrixXd k(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      k(i, j) = std::exp(-std::abs(data.covariate(i)(0) - data.covariate(j)(0)) / gamma);
  const Eigen::VectorXd alpha =
      (k + lambda * Eigen::MatrixXd::Identity(10, 10)).fullPivLu().solve(data.outcomes());
  for (double v : {-1.5, 0.1, 0.9}) {
    double expected = 0.0;
    for (int j = 0; j < 10; ++j)
      expected += std::exp(-std::abs(v - data.covariate(j)(0)) / gamma) * alpha(j);
    CHECK(m.predict(point(v)) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("cross validation picks the right lambda") {
  // Noiseless linear data: the smallest penalty wins by a wide margin.
  std::vector<double> x(30), y(30);
  Rng rng(14);
  for (int i = 0; i < 30; ++i) {
    x[i] = rng.next_uniform(-2.0, 2.0);
    y[i] = 1.5 * x[i];
  }
  const Dataset data = make_1d(x, y);
  CHECK(cross_validate_lambda(data, 1.0, {1e-6, 1e3}, 5, 7) == 1e-6);

  // Brute-force oracle for the same fold layout.
  const std::vector<double> cands{1e-3, 1e-1, 10.0};
  const double chosen = cross_validate_lambda(data, 1.0, cands, 5, 7);
  double best_err = 1e300, best = cands[0];
  const std::vector<int> shuffled = Rng(7).permutation(30);
  for (double lambda : cands) {
    double total = 0.0;
    for (int f = 0; f < 5; ++f) {
      const int lo = f * 30 / 5, hi = (f + 1) * 30 / 5;
      std::vector<int> tr, te;
      for (int i = 0; i < 30; ++i) (i >= lo && i < hi ? te : tr).push_back(shuffled[i]);
      const FittedRegressor m = fit_krr(data.subset(tr), 1.0, lambda);
      for (int i : te) {
        const double e = data.outcome(i) - m.predict(data.covariate(i));
        total += e * e;
      }
    }
    const double err = total / 30.0;
    if (err < best_err || (err == best_err && lambda > best)) {
      best_err = err;
      best = lambda;
    }
  }
  CHECK(chosen == best);

  // Single candidate short-circuits.
  CHECK(cross_validate_lambda(data, 1.0, {0.25}, 5, 1) == 0.25);

  // Exact ties break toward the larger lambda.
  const Dataset zeros = make_1d(x, std::vector<double>(30, 0.0));
  CHECK(cross_validate_lambda(zeros, 1.0, {1e-3, 1e-1, 10.0}, 5, 7) == 10.0);
}

TEST_CASE("quantile sgd single update matches the rule by hand") {
  const Dataset data = make_1d({1.0}, {1.0});
  QuantileSgdSpec spec;
  spec.tau = 0.5;
  spec.step_scale = 0.1;
  spec.n_passes = 1;
  spec.seed = 3;
  const FittedRegressor m = fit_quantile_sgd(data, spec);
  // beta_1 = -0.1 * (0.5 - 1) * [1, 1] = [0.05, 0.05]; prediction at x is
  // 0.05 + 0.05 x.
  CHECK(m.predict(point(0.0)) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(m.predict(point(1.0)) == doctest::Approx(0.10).epsilon(1e-15));
}

TEST_CASE("quantile sgd zero steps and determinism") {
  Rng rng(15);
  const Dataset data = random_1d(12, rng);
  QuantileSgdSpec spec;
  spec.step_scale = 0.0;
  const FittedRegressor frozen = fit_quantile_sgd(data, spec);
  CHECK(frozen.predict(point(3.0)) == 0.0);

  QuantileSgdSpec live;
  live.seed = 42;
  const FittedRegressor a = fit_quantile_sgd(data, live);
  const FittedRegressor b = fit_quantile_sgd(data, live);
  CHECK(a.predict(point(0.7)) == b.predict(point(0.7)));
  CHECK(a.fitted() == b.fitted());
}

TEST_CASE("kernel smoother basics") {
  const Dataset one = make_1d({0.0}, {3.0});
  KernelSmootherSpec spec;
  spec.bandwidth = 2.0;
  CHECK(fit_kernel_smoother(one, spec).predict(point(5.0)) == doctest::Approx(3.0));

  const Dataset two = make_1d({-1.0, 1.0}, {0.0, 2.0});
  CHECK(fit_kernel_smoother(two, spec).predict(point(0.0)) ==
        doctest::Approx(1.0).epsilon(1e-12));

  KernelSmootherSpec trimmed;
  trimmed.bandwidth = 1.0;
  trimmed.trim_hi = 1.0;
  const Dataset fives = make_1d({0.0, 1.0}, {5.0, 5.0});
  CHECK(fit_kernel_smoother(fives, trimmed).predict(point(0.5)) == doctest::Approx(1.0));
}

TEST_CASE("deleted fit removes the gross outlier") {
  // q = 0 reproduces the inner fit.
  Rng rng(16);
  const Dataset data = random_1d(10, rng);
  const FittedRegressor plain = fit_ols(data);
  const FittedRegressor del0 = deleted_fit(data, OlsSpec{}, 0.0);
  CHECK((plain.fitted() - del0.fitted()).cwiseAbs().maxCoeff() < 1e-12);

  // Nine collinear points plus one far-off sample: trimming one point
  // recovers the line exactly.
  std::vector<double> x, y;
  for (int i = 0; i < 9; ++i) {
    x.push_back(i);
    y.push_back(2.0 * i + 1.0);
  }
  x.push_back(4.5);
  y.push_back(100.0);
  const FittedRegressor m = deleted_fit(make_1d(x, y), OlsSpec{}, 0.1);
  CHECK(m.predict(point(20.0)) == doctest::Approx(41.0).epsilon(1e-9));
  // Reported residuals cover the full original dataset.
  CHECK(m.residuals().size() == 10);
  CHECK(std::abs(m.residuals()(9) - (100.0 - 10.0)) < 1e-9);
}

TEST_CASE("deletion tie rule keeps earlier-indexed samples") {
  // Residuals all equal in magnitude: trimming a 0.2 fraction of five drops
  // exactly one sample, the latest-indexed among the ties.
  Eigen::VectorXd res(5);
  res << 1.0, -1.0, 1.0, -1.0, 1.0;
  CHECK(deletion_survivors(res, 0.2) == std::vector<int>{0, 1, 2, 3});
  // ceil(0.2 * 5) must be 1 despite the product rounding just above 1.
  CHECK(deletion_survivors(res, 0.2).size() == 4);
}

TEST_CASE("deleted fit is permutation invariant on generic data") {
  Rng rng(17);
  const Dataset data = random_1d(14, rng);
  const FittedRegressor base = deleted_fit(data, OlsSpec{}, 0.2);
  const std::vector<int> order = Rng(5).permutation(14);
  const FittedRegressor perm = deleted_fit(data.permuted(order), OlsSpec{}, 0.2);
  for (double v = -2.0; v <= 2.0; v += 0.25)
    CHECK(base.predict(point(v)) == doctest::Approx(perm.predict(point(v))).epsilon(1e-9));
}

TEST_CASE("residuals always equal outcomes minus fitted") {
  Rng rng(18);
  const Dataset data = random_1d(16, rng);
  KernelSmootherSpec sm;
  sm.bandwidth = 1.0;
  QuantileSgdSpec qs;
  qs.seed = 9;
  const std::vector<RegressorSpec> specs{
      OlsSpec{}, KrrSpec{1.0, 0.5}, qs, sm, DeletedSpec{OlsSpec{}, 0.1}};
  for (const auto& spec : specs) {
    const FittedRegressor m = fit(spec, data);
    const Eigen::VectorXd diff = data.outcomes() - m.fitted() - m.residuals();
    CHECK(diff.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("linear coefficients match explicit augmented refits") {
  Rng rng(19);
  const Dataset data = random_1d(12, rng);
  const Eigen::RowVectorXd x_new = point(0.4);

  KernelSmootherSpec sm;
  sm.bandwidth = 1.5;
  const std::vector<RegressorSpec> specs{OlsSpec{}, KrrSpec{0.9, 0.4},
                                         RegressorSpec(sm)};
  for (const auto& spec : specs) {
    const LinearCoefficients lc = linear_coefficients(spec, data, x_new);
    REQUIRE(lc.a.size() == 13);
    // Finite differences over two explicit refits.
    const FittedRegressor at0 = fit(spec, data.augmented(x_new, 0.0));
    const FittedRegressor at1 = fit(spec, data.augmented(x_new, 1.0));
    for (int i = 0; i <= 12; ++i) {
      CHECK(lc.a(i) == doctest::Approx(at1.fitted()(i) - at0.fitted()(i)).epsilon(1e-8));
      CHECK(lc.b(i) == doctest::Approx(at0.fitted()(i)).epsilon(1e-8));
    }
    // Consistency at random candidate outcomes.
    Rng inner(20);
    for (int k = 0; k < 10; ++k) {
      const double yp = inner.next_uniform(-8.0, 8.0);
      const FittedRegressor at = fit(spec, data.augmented(x_new, yp));
      for (int i = 0; i <= 12; ++i)
        CHECK(lc.a(i) * yp + lc.b(i) ==
              doctest::Approx(at.fitted()(i)).epsilon(1e-8));
    }
  }
}

TEST_CASE("smoother difference slopes obey the triangle inequality") {
  Rng rng(21);
  const Dataset data = random_1d(15, rng);
  KernelSmootherSpec sm;
  sm.bandwidth = 0.7;
  const Eigen::RowVectorXd x_new = point(0.3);
  const LinearCoefficients lc = linear_coefficients(RegressorSpec(sm), data, x_new);
  for (int i = 0; i < 15; ++i) CHECK(lc.a(15) - lc.a(i) >= -1e-15);
}

TEST_CASE("intercept-only augmented slope is the averaging weight") {
  const Dataset data = intercept_only({2.0, -1.0});
  Eigen::RowVectorXd x_new(0);
  const LinearCoefficients lc = linear_coefficients(OlsSpec{}, data, x_new);
  for (int i = 0; i < 3; ++i)
    CHECK(lc.a(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("linear coefficients capability errors") {
  Rng rng(22);
  const Dataset data = random_1d(8, rng);
  const Eigen::RowVectorXd x_new = point(0.0);
  CHECK_THROWS_AS(linear_coefficients(QuantileSgdSpec{}, data, x_new), capability_error);
  CHECK_THROWS_AS(linear_coefficients(DeletedSpec{OlsSpec{}, 0.1}, data, x_new),
                  capability_error);
  KernelSmootherSpec clippy;
  clippy.bandwidth = 1.0;
  clippy.trim_lo = -1.0;
  clippy.trim_hi = 1.0;
  CHECK_THROWS_AS(linear_coefficients(RegressorSpec(clippy), data, x_new),
                  capability_error);
}

TEST_CASE("smoother monotone-difference property over a candidate grid") {
  Rng rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    const Dataset data = random_1d(10, rng);
    const Eigen::RowVectorXd x_new = point(rng.next_uniform(-1.0, 1.0));
    KernelSmootherSpec sm;
    sm.bandwidth = 1.0;
    const double lo = data.outcomes().minCoeff(), hi = data.outcomes().maxCoeff();
    const double range = hi - lo;
    Eigen::VectorXd prev;
    for (int g = 0; g < 100; ++g) {
      const double yp = lo - 3.0 * range + (6.0 * range + range) * g / 99.0;
      const FittedRegressor m = fit_kernel_smoother(data.augmented(x_new, yp), sm);
      Eigen::VectorXd d(10);
      for (int i = 0; i < 10; ++i) d(i) = m.fitted()(10) - m.fitted()(i);
      if (g > 0)
        for (int i = 0; i < 10; ++i) CHECK(d(i) >= prev(i) - 1e-10);
      prev = d;
    }
  }
}

TEST_CASE("quantile sgd two-value property in the candidate outcome") {
  Rng rng(24);
  const Dataset data = random_1d(10, rng);
  const Eigen::RowVectorXd x_new = point(0.2);
  QuantileSgdSpec spec;
  spec.n_passes = 1;     // the single-run algorithm
  spec.step_scale = 0.3; // steps must not depend on the candidate outcome
  spec.seed = 31;

  const double lo = data.outcomes().minCoeff(), hi = data.outcomes().maxCoeff();
  const double range = hi > lo ? hi - lo : 1.0;
  std::vector<std::set<double>> values(10);
  for (int g = 0; g < 60; ++g) {
    const double yp = lo - 10.0 * range + 20.0 * range * g / 59.0;
    const FittedRegressor m = fit_quantile_sgd(data.augmented(x_new, yp), spec);
    for (int i = 0; i < 10; ++i) values[i].insert(m.fitted()(10) - m.fitted()(i));
  }
  for (int i = 0; i < 10; ++i) CHECK(values[i].size() <= 2);
}

TEST_CASE("parameter validation") {
  Rng rng(26);
  const Dataset data = random_1d(8, rng);
  CHECK_THROWS_AS(fit_krr(data, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_krr(data, 1.0, 0.0), std::invalid_argument);
  QuantileSgdSpec bad_tau;
  bad_tau.tau = 1.0;
  CHECK_THROWS_AS(fit_quantile_sgd(data, bad_tau), std::invalid_argument);
  KernelSmootherSpec bad_bw;
  bad_bw.bandwidth = 0.0;
  CHECK_THROWS_AS(fit_kernel_smoother(data, bad_bw), std::invalid_argument);
  KernelSmootherSpec bad_trim;
  bad_trim.bandwidth = 1.0;
  bad_trim.trim_lo = 2.0;
  bad_trim.trim_hi = 1.0;
  CHECK_THROWS_AS(fit_kernel_smoother(data, bad_trim), std::invalid_argument);
  CHECK_THROWS_AS(deleted_fit(data, OlsSpec{}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(deleted_fit(data, OlsSpec{}, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(cross_validate_lambda(data, 1.0, {}, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(cross_validate_lambda(data, 1.0, {0.1, 1.0}, 1, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(cross_validate_lambda(data, 1.0, {0.1, 1.0}, 9, 0),
                  std::invalid_argument);
}

TEST_CASE("scale transform materialization") {
  Rng rng(25);
  const Dataset data = random_1d(12, rng);
  const FittedRegressor m = fit_ols(data);

  CHECK(make_scale_fn(ResidualTransform::identity(), OlsSpec{}, data, m) == nullptr);

  const auto fixed = make_scale_fn(
      ResidualTransform::scale_with([](const Eigen::RowVectorXd&) { return 2.5; }),
      OlsSpec{}, data, m);
  CHECK(fixed(point(0.0)) == 2.5);

  const auto companion = make_scale_fn(ResidualTransform::scale(), OlsSpec{}, data, m);
  REQUIRE(companion != nullptr);
  for (double v : {-1.0, 0.0, 1.0}) CHECK(companion(point(v)) >= 1e-6);
}

}  // TEST_SUITE
