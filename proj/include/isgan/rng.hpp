#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace isgan {

/// Deterministic RNG wrapper. Distributions are implemented here rather than
/// with std:: distributions so streams are stable across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t raw() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0); }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)) % n; }

  template <class V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  /// Xavier (Glorot) uniform initialization.
  template <class T>
  void xavier_fill(std::vector<T>& w, int fan_in, int fan_out) {
    double a = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
    for (auto& x : w) x = static_cast<T>(uniform(-a, a));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace isgan
