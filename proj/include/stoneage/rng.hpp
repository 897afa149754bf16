#pragma once

#include <cstdint>
#include <limits>

namespace stoneage {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based draw: a pure function of (seed, stream, a, b).
///
/// The engine derives one draw per (node, step) from the run seed so that
/// changing which nodes are activated in one step never shifts the random
/// values any other node sees.
constexpr std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t stream,
                                     std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t h = mix64(seed ^ 0x5be0cd19137e2179ULL);
  h = mix64(h ^ stream);
  h = mix64(h ^ a);
  return mix64(h ^ (b * 0xd6e8feb86659fd93ULL));
}

/// Maps a 64-bit draw onto [0, bound) with a multiply-shift.
constexpr std::uint64_t scale_draw(std::uint64_t draw, std::uint64_t bound) noexcept {
  __extension__ using u128 = unsigned __int128;
  return static_cast<std::uint64_t>((static_cast<u128>(draw) * bound) >> 64);
}

/// Sequential generator built on the counter hash. Used for harness-side
/// randomness (graph sampling, initial configurations, schedules).
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return counter_draw(seed_, stream_, counter_++, 0); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform(std::uint64_t bound) noexcept { return scale_draw((*this)(), bound); }

  /// True with probability num/den.
  bool bernoulli(std::uint64_t num, std::uint64_t den) noexcept { return uniform(den) < num; }

  /// Uniform double in [0, 1).
  double unit() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

/// Named streams so independent harness consumers never share draws.
namespace streams {
inline constexpr std::uint64_t transitions = 1;
inline constexpr std::uint64_t scheduler = 2;
inline constexpr std::uint64_t graph = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t sampling = 5;
}  // namespace streams

}  // namespace stoneage
