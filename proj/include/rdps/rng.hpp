#ifndef RDPS_RNG_HPP_
#define RDPS_RNG_HPP_

#include <cstdint>
#include <vector>

namespace rdps {

// Counter-based generator built on the SplitMix64 output function. The i-th
// draw of the stream with seed s is mix64(s + i * 0x9E3779B97F4A7C15), so a
// stream is a pure function of (seed, index) and can be reproduced in any
// language. See README for the exact algorithm and the substream derivation.
uint64_t mix64(uint64_t z);

// Child stream seed for a (parent seed, key) pair; used for per-replication
// and per-purpose streams so adding consumers never perturbs existing ones.
uint64_t derive_seed(uint64_t seed, uint64_t key);

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64();

  // Uniform on the open interval (0,1); never returns 0 or 1, so it is safe
  // to push through an inverse CDF.
  double next_uniform01();

  double next_uniform(double lo, double hi);

  // Standard normal via the inverse CDF (Acklam's rational approximation
  // with one Halley refinement step; see README).
  double next_normal();

  // Unbiased integer in [0, n) by rejection.
  uint64_t next_below(uint64_t n);

  // Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<int> permutation(int n);

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

// Inverse of the standard normal CDF, exposed for tests.
double inverse_normal_cdf(double p);

}  // namespace rdps

#endif  // RDPS_RNG_HPP_
