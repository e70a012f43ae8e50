#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace mbct {

/// Deterministic random source used everywhere randomness appears.
///
/// Backed by std::mt19937_64, whose output sequence is fixed by the standard.
/// All derived quantities (uniforms, bounded integers, Gamma/Beta variates)
/// are computed here rather than through <random> distributions, which are
/// implementation-defined, so a seed reproduces the same stream on every
/// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream keyed by (seed, stream). Does not advance *this.
  Rng derive(std::uint64_t stream) const;
  Rng derive(std::uint64_t stream_a, std::uint64_t stream_b) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  double normal();
  double gamma(double shape);
  double beta(double a, double b);
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates. Below 2^32 elements each engine word feeds two draws.
  template <class T>
  void shuffle(std::span<T> values) {
    std::size_t i = values.size();
    if (i <= 0xffffffffu) {
      std::uint64_t word = 0;
      bool spare = false;
      const auto next32 = [&]() -> std::uint32_t {
        if (spare) {
          spare = false;
          return static_cast<std::uint32_t>(word >> 32);
        }
        word = engine_();
        spare = true;
        return static_cast<std::uint32_t>(word);
      };
      for (; i > 1; --i) {
        const auto n = static_cast<std::uint32_t>(i);
        std::uint64_t m = std::uint64_t{next32()} * n;
        if (static_cast<std::uint32_t>(m) < n) {
          const std::uint32_t threshold = (0u - n) % n;
          while (static_cast<std::uint32_t>(m) < threshold) m = std::uint64_t{next32()} * n;
        }
        std::swap(values[i - 1], values[static_cast<std::size_t>(m >> 32)]);
      }
      return;
    }
    for (; i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mbct
