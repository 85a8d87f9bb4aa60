#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace esmhc::nn {

/// Seeded generator with portable transforms. The standard distributions are
/// implementation-defined, so uniform/normal/below are derived here from the
/// raw 64-bit stream to keep splits and initialisations stable across
/// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n), unbiased.
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace esmhc::nn
