#ifndef RDPS_ERRORS_HPP_
#define RDPS_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace rdps {

// A backend was asked for something it cannot provide (leverage, linear
// coefficients, a scale estimate, ...).
class capability_error : public std::runtime_error {
 public:
  explicit capability_error(const std::string& what) : std::runtime_error(what) {}
};

// A linear solve hit a (numerically) singular or rank-deficient matrix.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// Conformity-score bounds came out non-monotone. Carries the first interval
// on which the assembled bound decreases, and the size of the drop.
class monotonicity_error : public std::runtime_error {
 public:
  monotonicity_error(const std::string& what, double interval_lo,
                     double interval_hi, double drop)
      : std::runtime_error(what),
        interval_lo_(interval_lo),
        interval_hi_(interval_hi),
        drop_(drop) {}

  double interval_lo() const { return interval_lo_; }
  double interval_hi() const { return interval_hi_; }
  double drop() const { return drop_; }

 private:
  double interval_lo_;
  double interval_hi_;
  double drop_;
};

}  // namespace rdps

#endif  // RDPS_ERRORS_HPP_
