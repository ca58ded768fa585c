#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace priorpose {

// Deterministic 64-bit-state generator (splitmix64). Datasets and estimator
// runs must reproduce bit-for-bit across platforms, so all sampling goes
// through this wrapper instead of std:: distributions, whose output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static constexpr const char* kAlgorithm = "splitmix64";

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Masked rejection keeps the draw unbiased.
  std::uint64_t uniformInt(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t mask = ~std::uint64_t{0} >> countLeadingZeros(n - 1);
    std::uint64_t v;
    do {
      v = next() & mask;
    } while (v >= n);
    return v;
  }

  // Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double sigma) { return sigma * normal(); }

  Eigen::Vector3d unitVector3() {
    Eigen::Vector3d v;
    double n2;
    do {
      v << normal(), normal(), normal();
      n2 = v.squaredNorm();
    } while (n2 < 1e-12);
    return v / std::sqrt(n2);
  }

  Eigen::VectorXd unitVector(int dim) {
    Eigen::VectorXd v(dim);
    double n2;
    do {
      for (int i = 0; i < dim; ++i) v[i] = normal();
      n2 = v.squaredNorm();
    } while (n2 < 1e-12);
    return v / std::sqrt(n2);
  }

  // Derives an independent stream, e.g. one per dataset pair.
  static std::uint64_t deriveSeed(std::uint64_t base, std::uint64_t index) {
    Rng mixer(base ^ (0xd1b54a32d192ed03ULL * (index + 1)));
    return mixer.next();
  }

 private:
  static int countLeadingZeros(std::uint64_t x) {
    int n = 0;
    for (std::uint64_t probe = 0x8000000000000000ULL; probe != 0 && !(x & probe); probe >>= 1) ++n;
    return n;
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace priorpose
