#ifndef RDPS_STEP_FN_HPP_
#define RDPS_STEP_FN_HPP_

#include <vector>

namespace rdps {

// Right-continuous nondecreasing step function R -> [0,1]. This is the single
// canonical representation for distribution functions and for the lower/upper
// bounds of predictive systems.
//
// With breakpoints b_0 < ... < b_{k-1} and values v_0 <= ... <= v_k, the
// function equals v_0 on (-inf, b_0), v_{j+1} on [b_j, b_{j+1}), and v_k on
// [b_{k-1}, inf). Construction normalizes the representation: breakpoints
// where no jump occurs are dropped, so two StepFns are equal as functions
// iff their representations compare equal.
class StepFn {
 public:
  // Constant function.
  explicit StepFn(double value);

  // breakpoints strictly increasing and finite; values.size() ==
  // breakpoints.size() + 1, nondecreasing, within [0,1].
  StepFn(std::vector<double> breakpoints, std::vector<double> values);

  double operator()(double y) const;  // right-continuous evaluation

  // Value on the open interval immediately left of y: lim_{z->y-} f(z).
  double left_limit(double y) const;

  double value_at_minus_inf() const { return values_.front(); }
  double value_at_plus_inf() const { return values_.back(); }

  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const StepFn& other) const = default;

 private:
  std::vector<double> breaks_;
  std::vector<double> values_;
};

// Smallest y with f(y) >= tau, for tau in (0,1). Returns -inf when f sits at
// or above tau everywhere, +inf when f never reaches tau (defective bound);
// callers surface the infinite cases through a defective flag.
double quantile(const StepFn& f, double tau);

// A proper distribution function: a StepFn rising from 0 to 1, i.e. finitely
// many atoms with positive mass summing to one.
class ForecastDistribution {
 public:
  explicit ForecastDistribution(StepFn cdf);

  double operator()(double y) const { return cdf_(y); }
  double left_limit(double y) const { return cdf_.left_limit(y); }
  const StepFn& cdf() const { return cdf_; }

  // Atom locations (the breakpoints) and their masses (the jumps).
  const std::vector<double>& locations() const { return cdf_.breakpoints(); }
  std::vector<double> masses() const;

  bool operator==(const ForecastDistribution& other) const = default;

 private:
  StepFn cdf_;
};

// Empirical distribution of a list of values: atoms at the sorted unique
// values, mass proportional to multiplicity. Errors on an empty list.
ForecastDistribution ecdf(const std::vector<double>& values);

}  // namespace rdps

#endif  // RDPS_STEP_FN_HPP_
