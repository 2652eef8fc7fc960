#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

namespace cdml {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// Derives an independent 64-bit seed from a parent seed and up to two labels.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t h = mix64(seed ^ 0x6A09E667F3BCC909ULL);
  h = mix64(h ^ (a + 0x9E3779B97F4A7C15ULL));
  h = mix64(h ^ (b + 0xBB67AE8584CAA73BULL));
  return h;
}

// Counter-based generator: output k of stream (seed, stream) is a pure
// function of (seed, stream, k), so any substream can be regenerated on any
// worker without replaying other streams.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_lo_(derive_seed(seed, stream, 1)), key_hi_(derive_seed(seed, stream, 2)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t x = mix64(key_lo_ + 0x9E3779B97F4A7C15ULL * ++counter_);
    return mix64(x ^ key_hi_);
  }

  std::uint64_t counter() const noexcept { return counter_; }

  // Uniform on [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer on [0, n); n > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;

  // Gamma(shape, 1) by Marsaglia-Tsang; shape > 0.
  double gamma(double shape) noexcept;

  // Beta(a, b) as a ratio of gammas.
  double beta(double a, double b) noexcept;

 private:
  std::uint64_t key_lo_;
  std::uint64_t key_hi_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

}  // namespace cdml
