#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace bdsde {

/// Counter-based splittable generator (splitmix64 finalizer).
///
/// Every draw is a pure function of (key, counter), so trials can be
/// evaluated in any order, in parallel, and still produce identical
/// streams. split() derives an independent key for a named substream.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t key) : key_(mix(key ^ kGolden)) {}

  CounterRng split(std::uint64_t stream) const {
    CounterRng r(0);
    r.key_ = mix(key_ ^ mix(stream * kGolden + 1));
    return r;
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix(key_ + kGolden * (counter + 1));
  }

  /// Uniform in [0,1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform in [-1,1).
  double symmetric(std::uint64_t counter) const {
    return 2.0 * uniform(counter) - 1.0;
  }

  std::uint64_t key() const { return key_; }

private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

/// Uniform draw from the ball of radius `radius` in R^n, consuming 2n+1
/// counters starting at `counter_base`.
inline Eigen::VectorXd sample_ball(const CounterRng& rng, std::uint64_t counter_base,
                                   int n, double radius) {
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    // Box-Muller; cos branch only, one pair of uniforms per component.
    const double u1 = rng.uniform(counter_base + 2 * i);
    const double u2 = rng.uniform(counter_base + 2 * i + 1);
    g[i] = std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(6.283185307179586 * u2);
  }
  const double norm = g.norm();
  if (norm == 0.0) return Eigen::VectorXd::Zero(n);
  const double r = radius * std::pow(rng.uniform(counter_base + 2 * n), 1.0 / n);
  return (r / norm) * g;
}

}  // namespace bdsde
