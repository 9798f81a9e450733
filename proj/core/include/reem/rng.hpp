#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace reem {

/// splitmix64 step; also used to derive stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic PRNG with a fixed cross-platform sequence.
///
/// std::shuffle and std::uniform_*_distribution are implementation-defined,
/// so every shuffle/draw that feeds a persisted artifact goes through this
/// class instead.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : state_(seed) {
    // Warm up so nearby seeds diverge immediately.
    next_u64();
    next_u64();
  }

  /// Derive an independent stream for a named sub-task.
  DetRng fork(std::string_view label) const {
    std::uint64_t s = state_;
    for (char c : label) {
      s ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      splitmix64(s);
    }
    return DetRng(s);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates with the deterministic bounded draw above.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// First k elements of a seeded shuffle, order preserved from the shuffle.
  template <typename T>
  std::vector<T> sample(const std::vector<T>& items, std::size_t k) {
    std::vector<T> pool = items;
    shuffle(pool);
    if (k < pool.size()) pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reem
