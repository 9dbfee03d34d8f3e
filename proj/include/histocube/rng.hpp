#ifndef HISTOCUBE_RNG_HPP
#define HISTOCUBE_RNG_HPP

#include <cstdint>
#include <limits>
#include <span>

namespace histocube {

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent child seed for stream `stream` of `seed`.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(seed ^ mix64(stream ^ 0x632be59bd9b4e019ULL));
}

/// Counter-based generator: the n-th draw is a pure function of (key, n).
/**
 * Satisfies UniformRandomBitGenerator, so standard distributions work on it.
 * Per-pixel streams are `CounterRng{derive_seed(seed, pixel)}`, which makes
 * sampling independent of traversal order and worker count.
 */
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_{mix64(key)} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v = 0;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % n;
  }

  /// Index drawn from a probability vector by cumulative sum.
  constexpr std::size_t categorical(std::span<const double> probs) noexcept {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      acc += probs[i];
      last_positive = i;
      if (u < acc) return i;
    }
    return last_positive;  // rounding left u above the final partial sum
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace histocube

#endif  // HISTOCUBE_RNG_HPP
