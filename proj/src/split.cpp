#include "rdps/split.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace rdps {

namespace {

struct SplitParts {
  Eigen::VectorXd scores;  // A_i = residual_i / sigma_i over the calibration set
  double yhat_new;
  double sigma_new;        // 1 for the identity transform
};

// Shared preparation: fit on the estimation set, score the calibration set.
// The monotone map from score space back to outcome space is
// y(a) = yhat_new + sigma_new * a.
SplitParts prepare(const Dataset& data, const SplitConfig& cfg,
                   const Eigen::RowVectorXd& x_new) {
  const int n = data.size();
  if (cfg.estimation_count < 1 || cfg.estimation_count >= n)
    throw std::invalid_argument("estimation count must satisfy 1 <= N < n");

  const Dataset est = data.head(cfg.estimation_count);
  const Dataset cal = data.tail_from(cfg.estimation_count);
  const FittedRegressor model = fit(cfg.spec, est);
  const auto sigma = make_scale_fn(cfg.transform, cfg.spec, est, model);

  SplitParts parts;
  parts.yhat_new = model.predict(x_new);
  parts.sigma_new = sigma ? sigma(x_new) : 1.0;
  parts.scores.resize(cal.size());
  for (int i = 0; i < cal.size(); ++i) {
    const double resid = cal.outcome(i) - model.predict(cal.covariate(i));
    parts.scores(i) = sigma ? resid / sigma(cal.covariate(i)) : resid;
  }
  return parts;
}

// Collapses consecutive equal breakpoints (scores distinct in score space can
// collide in outcome space after rounding), keeping the later counts.
void merge_colliding_breaks(std::vector<double>& breaks, std::vector<int>& lo,
                            std::vector<int>& up) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < breaks.size(); ++i) {
    if (w > 0 && breaks[i] == breaks[w - 1]) {
      lo[w] = lo[i + 1];
      up[w] = up[i + 1];
    } else {
      breaks[w] = breaks[i];
      lo[w + 1] = lo[i + 1];
      up[w + 1] = up[i + 1];
      ++w;
    }
  }
  breaks.resize(w);
  lo.resize(w + 1);
  up.resize(w + 1);
}

}  // namespace

ForecastDistribution split_forecast(const Dataset& data, const SplitConfig& cfg,
                                    const Eigen::RowVectorXd& x_new) {
  const SplitParts parts = prepare(data, cfg, x_new);
  std::vector<double> atoms(parts.scores.size());
  for (Eigen::Index i = 0; i < parts.scores.size(); ++i)
    atoms[i] = parts.yhat_new + parts.sigma_new * parts.scores(i);
  return ecdf(atoms);
}

PredictiveSystem split_system(const Dataset& data, const SplitConfig& cfg,
                              const Eigen::RowVectorXd& x_new) {
  const SplitParts parts = prepare(data, cfg, x_new);
  const int m = static_cast<int>(parts.scores.size());

  // Residual-dressing route: sorted atoms with cumulative multiplicities.
  std::vector<double> atoms(parts.scores.size());
  for (Eigen::Index i = 0; i < parts.scores.size(); ++i)
    atoms[i] = parts.yhat_new + parts.sigma_new * parts.scores(i);
  std::sort(atoms.begin(), atoms.end());

  std::vector<double> breaks;
  std::vector<int> lo{0}, up{1};
  for (int i = 0; i < m; ++i) {
    if (i + 1 < m && atoms[i + 1] == atoms[i]) continue;
    breaks.push_back(atoms[i]);
    lo.push_back(i + 1);
    up.push_back(i + 2);
  }
  return PredictiveSystem::from_counts(std::move(breaks), std::move(lo),
                                       std::move(up), m + 1);
}

PredictiveSystem split_cps_via_conformity(const Dataset& data,
                                          const SplitConfig& cfg,
                                          const Eigen::RowVectorXd& x_new) {
  const SplitParts parts = prepare(data, cfg, x_new);
  const int m = static_cast<int>(parts.scores.size());

  // Conformity-count route: the indicator 1{A_i <= A(x_new, y)} flips where
  // A(x_new, y) crosses A_i; counts are taken by comparing scores.
  std::vector<double> sorted(parts.scores.data(), parts.scores.data() + m);
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> breaks;
  std::vector<int> lo, up;
  lo.push_back(static_cast<int>(
      std::lower_bound(sorted.begin(), sorted.end(), sorted.front()) - sorted.begin()));
  up.push_back(1 + lo.front());
  for (int j = 0; j < m; ++j) {
    const double s = sorted[j];
    if (j + 1 < m && sorted[j + 1] == s) continue;
    const int count_le = static_cast<int>(
        std::upper_bound(sorted.begin(), sorted.end(), s) - sorted.begin());
    breaks.push_back(parts.yhat_new + parts.sigma_new * s);
    lo.push_back(count_le);       // strict count just right of the crossing
    up.push_back(1 + count_le);
  }
  merge_colliding_breaks(breaks, lo, up);
  return PredictiveSystem::from_counts(std::move(breaks), std::move(lo),
                                       std::move(up), m + 1);
}

}  // namespace rdps
