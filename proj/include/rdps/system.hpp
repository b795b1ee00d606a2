#ifndef RDPS_SYSTEM_HPP_
#define RDPS_SYSTEM_HPP_

#include <optional>
#include <vector>

#include "rdps/step_fn.hpp"

namespace rdps {

// A pair of stochastically ordered bound functions delimiting a set of
// predictive distributions: lower <= upper everywhere, lower -> 0 at -inf,
// upper -> 1 at +inf.
//
// The conformal constructions all produce bounds whose step heights are
// integer rank counts over a common denominator. That counted form is kept
// when available so quantities like the bound gap are computed on integers;
// rounding count/denom separately per bound loses up to a couple of ulps,
// which matters where the gap is pinned to an exact rational.
class PredictiveSystem {
 public:
  PredictiveSystem(StepFn lower, StepFn upper);

  // Bounds stepping on a shared breakpoint grid with heights k/denominator.
  // Count vectors have one more entry than breaks (value on each interval).
  static PredictiveSystem from_counts(std::vector<double> breaks,
                                      std::vector<int> lower_counts,
                                      std::vector<int> upper_counts,
                                      int denominator);

  const StepFn& lower() const { return lower_; }
  const StepFn& upper() const { return upper_; }

  bool has_counts() const { return counted_.has_value(); }

  bool operator==(const PredictiveSystem& other) const {
    return lower_ == other.lower_ && upper_ == other.upper_;
  }

  friend double thickness(const PredictiveSystem& ps);

 private:
  struct CountedForm {
    std::vector<int> gap_counts;  // upper - lower on each interval
    int denominator;
  };

  StepFn lower_;
  StepFn upper_;
  std::optional<CountedForm> counted_;
};

// Largest gap upper - lower over the interiors of the open intervals between
// the merged breakpoints of both bounds, including both unbounded tails.
// Values at the (finitely many) breakpoints themselves are excluded.
double thickness(const PredictiveSystem& ps);

// Central prediction interval at a given level.
struct PredictionInterval {
  double level;     // 1 - alpha
  double lo;        // may be -inf
  double hi;        // may be +inf
  bool defective;   // set when an endpoint had to be taken infinite
};

// Interval [quantile(upper, alpha/2), quantile(lower, 1 - alpha/2)] for
// alpha = 1 - level; lo <= hi is guaranteed by the stochastic ordering of
// the bounds.
PredictionInterval central_interval(const PredictiveSystem& ps, double alpha);

}  // namespace rdps

#endif  // RDPS_SYSTEM_HPP_
