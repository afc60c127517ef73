#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace offpol {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derive an independent stream seed from a master seed and a path of tags.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = master;
  std::uint64_t out = splitmix64(s);
  for (std::uint64_t tag : path) {
    s = out ^ (tag + 0x9E3779B97F4A7C15ULL + (out << 6) + (out >> 2));
    out = splitmix64(s);
  }
  return out;
}

// Deterministic RNG. All distributions are hand-rolled on top of the raw
// 64-bit stream so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Gumbel(0,1) = -log(-log(U)), guarded away from 0.
  double gumbel() {
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    double t = -std::log(u);
    if (t < 1e-300) t = 1e-300;
    return -std::log(t);
  }

  // Box-Muller, no caching (keeps draw counts predictable).
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  int uniform_int(int n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace offpol
