#pragma once

#include <cstdint>
#include <vector>

namespace fvslide {

// Counter-based generator: output i is a keyed SplitMix64 finalizer applied
// to the counter, so independent streams are derived by re-keying (split)
// rather than by advancing shared state. All distributions below are written
// out explicitly so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  // Child generator whose sequence depends only on (this key, stream).
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  // Gamma(shape, 1), shape > 0 (Marsaglia-Tsang with the shape < 1 boost).
  double gamma(double shape);
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace fvslide
