#include "rdps/system.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rdps {

namespace {

void check_ordering(const StepFn& lower, const StepFn& upper) {
  if (lower.value_at_minus_inf() != 0.0)
    throw std::invalid_argument("lower bound must vanish at -inf");
  if (upper.value_at_plus_inf() != 1.0)
    throw std::invalid_argument("upper bound must reach 1 at +inf");
  // lower <= upper on every piece of the merged breakpoint grid. Evaluating
  // at each merged breakpoint covers the interval to its right; the leading
  // values cover the left tail.
  if (lower.value_at_minus_inf() > upper.value_at_minus_inf())
    throw std::invalid_argument("bounds out of order at -inf");
  for (double b : lower.breakpoints())
    if (lower(b) > upper(b)) throw std::invalid_argument("bounds cross");
  for (double b : upper.breakpoints())
    if (lower(b) > upper(b)) throw std::invalid_argument("bounds cross");
}

}  // namespace

PredictiveSystem::PredictiveSystem(StepFn lower, StepFn upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  check_ordering(lower_, upper_);
}

PredictiveSystem PredictiveSystem::from_counts(std::vector<double> breaks,
                                               std::vector<int> lower_counts,
                                               std::vector<int> upper_counts,
                                               int denominator) {
  if (denominator < 1) throw std::invalid_argument("denominator must be positive");
  if (lower_counts.size() != breaks.size() + 1 ||
      upper_counts.size() != breaks.size() + 1)
    throw std::invalid_argument("count vectors must have one more entry than breaks");

  const double denom = static_cast<double>(denominator);
  std::vector<double> lo_vals(lower_counts.size()), up_vals(upper_counts.size());
  std::vector<int> gaps(lower_counts.size());
  for (std::size_t i = 0; i < lower_counts.size(); ++i) {
    if (lower_counts[i] > upper_counts[i])
      throw std::invalid_argument("bounds cross");
    lo_vals[i] = static_cast<double>(lower_counts[i]) / denom;
    up_vals[i] = static_cast<double>(upper_counts[i]) / denom;
    gaps[i] = upper_counts[i] - lower_counts[i];
  }
  StepFn lower_fn(breaks, std::move(lo_vals));
  StepFn upper_fn(std::move(breaks), std::move(up_vals));
  PredictiveSystem ps(std::move(lower_fn), std::move(upper_fn));
  ps.counted_ = CountedForm{std::move(gaps), denominator};
  return ps;
}

double thickness(const PredictiveSystem& ps) {
  if (ps.counted_) {
    const auto& c = *ps.counted_;
    const int max_gap = *std::max_element(c.gap_counts.begin(), c.gap_counts.end());
    return static_cast<double>(max_gap) / static_cast<double>(c.denominator);
  }
  // Merged breakpoints; each interval's gap is read off at its left endpoint
  // (right-continuity), the left tail from the -inf values.
  const auto& lb = ps.lower().breakpoints();
  const auto& ub = ps.upper().breakpoints();
  std::vector<double> merged;
  merged.reserve(lb.size() + ub.size());
  std::merge(lb.begin(), lb.end(), ub.begin(), ub.end(), std::back_inserter(merged));
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());

  double best = ps.upper().value_at_minus_inf() - ps.lower().value_at_minus_inf();
  for (double b : merged) best = std::max(best, ps.upper()(b) - ps.lower()(b));
  return best;
}

PredictionInterval central_interval(const PredictiveSystem& ps, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1)");
  const double lo = quantile(ps.upper(), alpha / 2.0);
  const double hi = quantile(ps.lower(), 1.0 - alpha / 2.0);
  return PredictionInterval{1.0 - alpha, lo, hi,
                            std::isinf(lo) || std::isinf(hi)};
}

}  // namespace rdps
