// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace sir {

/// PCG32 (XSH-RR, 64-bit state). Satisfies UniformRandomBitGenerator.
///
/// Distributions are hand-rolled on top of it instead of using <random>
/// distributions, whose output is implementation-defined; every seeded
/// stream in the library is therefore reproducible across toolchains.
class Pcg32 {
 public:
  using result_type = std::uint32_t;

  explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL,
                 std::uint64_t stream = 0xda3e39cb94b95bdbULL) noexcept {
    seed_stream(seed, stream);
  }

  void seed_stream(std::uint64_t seed, std::uint64_t stream) noexcept {
    state_ = 0U;
    inc_ = (stream << 1U) | 1U;
    (*this)();
    state_ += seed;
    (*this)();
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18U) ^ old) >> 27U);
    const auto rot = static_cast<std::uint32_t>(old >> 59U);
    return (xorshifted >> rot) | (xorshifted << ((32U - rot) & 31U));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    const std::uint64_t hi = (*this)() >> 5U;  // 27 bits
    const std::uint64_t lo = (*this)() >> 6U;  // 26 bits
    return static_cast<double>((hi << 26U) | lo) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound). bound must be >= 1.
  std::uint32_t below(std::uint32_t bound) noexcept {
    // Lemire's nearly-divisionless method.
    std::uint64_t m = static_cast<std::uint64_t>((*this)()) * bound;
    auto low = static_cast<std::uint32_t>(m);
    if (low < bound) {
      const std::uint32_t threshold = (0U - bound) % bound;
      while (low < threshold) {
        m = static_cast<std::uint64_t>((*this)()) * bound;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32U);
  }

  bool operator==(const Pcg32&) const = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

/// SplitMix64 finalizer; derives independent sub-seeds from one master seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1U);
  z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31U);
}

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& items, Pcg32& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.below(static_cast<std::uint32_t>(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// `count` distinct indices from [0, n), uniformly without replacement, in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                           Pcg32& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(static_cast<std::uint32_t>(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace sir
