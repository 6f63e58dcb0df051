#pragma once

#include <cstdint>
#include <random>

namespace lrselect {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t value);

/// Derives a stream seed from a root seed and a sequence of stream keys.
template <typename... Keys>
std::uint64_t stream_seed(std::uint64_t root, Keys... keys) {
  std::uint64_t h = mix_seed(root);
  ((h = mix_seed(h ^ static_cast<std::uint64_t>(keys))), ...);
  return h;
}

/// Seedable 64-bit generator whose output sequence is identical on every
/// platform. Distributions are implemented here rather than taken from
/// <random>, whose distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

  /// Standard normal deviate (Box-Muller, one value per call pair cached).
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lrselect
