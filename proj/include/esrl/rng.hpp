#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace esrl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Order-sensitive mix of key words. Every derived quantity in a run (noise
// slice offsets, episode seeds, member selection draws, weight init) is keyed
// through this, so results never depend on where or when something executes.
inline std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ull;
  for (auto p : parts) h = splitmix64(h ^ p);
  return h;
}

// Stream tags for mix_key; keeps independent uses of the same run seed apart.
namespace seed_tag {
inline constexpr std::uint64_t noise_table = 0x01;
inline constexpr std::uint64_t pair_index = 0x02;
inline constexpr std::uint64_t episode = 0x03;
inline constexpr std::uint64_t mean_eval = 0x04;
inline constexpr std::uint64_t init_eval = 0x05;
inline constexpr std::uint64_t member_select = 0x06;
inline constexpr std::uint64_t weight_init = 0x07;
inline constexpr std::uint64_t normalizer_fit = 0x08;
inline constexpr std::uint64_t pretrain_data = 0x09;
inline constexpr std::uint64_t pretrain_batch = 0x0a;
inline constexpr std::uint64_t env_reset = 0x0b;
inline constexpr std::uint64_t final_eval = 0x0c;
}  // namespace seed_tag

// Keyed deterministic generator (splitmix64 stream).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Unbiased draw in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; pairs cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace esrl
