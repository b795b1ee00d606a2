#include "rdps/step_fn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rdps {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

StepFn::StepFn(double value) : values_{value} {
  if (!(value >= 0.0 && value <= 1.0))
    throw std::invalid_argument("step value outside [0,1]");
}

StepFn::StepFn(std::vector<double> breakpoints, std::vector<double> values)
    : breaks_(std::move(breakpoints)), values_(std::move(values)) {
  if (values_.size() != breaks_.size() + 1)
    throw std::invalid_argument("values must have one more entry than breakpoints");
  for (std::size_t i = 0; i < breaks_.size(); ++i) {
    if (!std::isfinite(breaks_[i])) throw std::invalid_argument("non-finite breakpoint");
    if (i > 0 && !(breaks_[i - 1] < breaks_[i]))
      throw std::invalid_argument("breakpoints must be strictly increasing");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0))
      throw std::invalid_argument("step value outside [0,1]");
    if (i > 0 && values_[i] < values_[i - 1])
      throw std::invalid_argument("step values must be nondecreasing");
  }
  // Drop breakpoints that carry no jump.
  std::size_t w = 0;
  for (std::size_t i = 0; i < breaks_.size(); ++i) {
    if (values_[i + 1] != values_[w]) {
      breaks_[w] = breaks_[i];
      values_[w + 1] = values_[i + 1];
      ++w;
    }
  }
  breaks_.resize(w);
  values_.resize(w + 1);
}

double StepFn::operator()(double y) const {
  const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), y);
  return values_[static_cast<std::size_t>(it - breaks_.begin())];
}

double StepFn::left_limit(double y) const {
  const auto it = std::lower_bound(breaks_.begin(), breaks_.end(), y);
  return values_[static_cast<std::size_t>(it - breaks_.begin())];
}

double quantile(const StepFn& f, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("quantile level must lie in (0,1)");
  const auto& v = f.values();
  const auto it = std::lower_bound(v.begin(), v.end(), tau);
  if (it == v.end()) return kInf;          // never reaches tau
  if (it == v.begin()) return -kInf;       // at or above tau everywhere
  return f.breakpoints()[static_cast<std::size_t>(it - v.begin()) - 1];
}

ForecastDistribution::ForecastDistribution(StepFn cdf) : cdf_(std::move(cdf)) {
  if (cdf_.value_at_minus_inf() != 0.0 || cdf_.value_at_plus_inf() != 1.0)
    throw std::invalid_argument("distribution function must rise from 0 to 1");
}

std::vector<double> ForecastDistribution::masses() const {
  const auto& v = cdf_.values();
  std::vector<double> m(v.size() - 1);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) m[i] = v[i + 1] - v[i];
  return m;
}

ForecastDistribution ecdf(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("ecdf of an empty list");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (!std::isfinite(sorted.front()) || !std::isfinite(sorted.back()))
    throw std::invalid_argument("ecdf values must be finite");
  const double n = static_cast<double>(sorted.size());
  std::vector<double> breaks;
  std::vector<double> steps{0.0};
  breaks.reserve(sorted.size());
  steps.reserve(sorted.size() + 1);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;  // merge ties
    breaks.push_back(sorted[i]);
    steps.push_back(static_cast<double>(i + 1) / n);
  }
  return ForecastDistribution(StepFn(std::move(breaks), std::move(steps)));
}

}  // namespace rdps
