// Deterministic random numbers. std::mt19937_64 gives a portable engine, but the
// standard library distributions are implementation-defined, so uniform/normal/int
// draws are generated here by fixed algorithms. Same seed -> same bytes anywhere.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nio/common.hpp"

namespace nio {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent per-item stream seeds (e.g. one per dataset sample), so a parallel
// generator produces identical output for any thread count.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t s = base;
  (void)splitmix64(s);
  s ^= 0x632be59bd9b4e019ULL * (index + 1);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // uniform in [0,1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // inclusive range; modulo bias is O(range/2^64), irrelevant here
  long uniform_int(long lo, long hi) {
    if (hi < lo) throw ConfigError(msg("uniform_int: empty range [", lo, ",", hi, "]"));
    std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(eng_() % n);
  }

  // Box-Muller with a cached spare
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stdev) { return mean + stdev * normal(); }

  // Fisher-Yates
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<long>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0..n-1}, order random (partial Fisher-Yates)
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k > n || k < 0) throw ConfigError(msg("sample k=", k, " from n=", n));
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) {
      long j = uniform_int(i, n - 1);
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nio
