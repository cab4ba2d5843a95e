// Counter-based random stream: the k-th output is the splitmix64 finalizer
// applied to key + (k+1)*golden, so draws are a pure function of (key, k).
// Independent substreams come from derive_key. Gaussian variates use the
// inverse CDF of a uniform in the open interval (0,1).
#ifndef BIVLMM_RNG_HPP
#define BIVLMM_RNG_HPP

#include <cstdint>

#include "bivlmm/stats.hpp"

namespace bivlmm {

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t value(std::uint64_t key, std::uint64_t counter) {
    std::uint64_t z = key + (counter + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Subkey for an independent stream (per subject, per purpose).
  static std::uint64_t derive_key(std::uint64_t key, std::uint64_t stream) {
    return value(key ^ 0xA5A5A5A55A5A5A5Aull, stream);
  }

  std::uint64_t next_u64() { return value(key_, counter_++); }

  // Uniform on the open interval (0,1); never returns 0 or 1.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_normal() { return norm_quantile(next_uniform()); }

  // Bernoulli(p) event, p in [0,1).
  bool next_bernoulli(double p) { return next_uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace bivlmm

#endif  // BIVLMM_RNG_HPP
