#pragma once

// Hand-rolled generators and small helpers shared by the test suites.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "gam/fourier.hpp"

namespace gam::test {

constexpr double pi = std::numbers::pi;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::complex<double> complex(double scale = 1) {
    return {uniform(-scale, scale), uniform(-scale, scale)};
  }

  /// Conjugate-symmetric vector whose entries beyond `bandwidth` are zero.
  HarmonicVectord real_vector(int order, double omega, int bandwidth = -1, double scale = 1) {
    if (bandwidth < 0) bandwidth = order;
    ComplexVector<double> c = ComplexVector<double>::Zero(2 * order + 1);
    c(order) = uniform(-scale, scale);
    for (int n = 1; n <= std::min(order, bandwidth); ++n) {
      c(order + n) = complex(scale) / double(n);
      c(order - n) = std::conj(c(order + n));
    }
    return HarmonicVectord(std::move(c), omega);
  }

 private:
  std::mt19937_64 rng_;
};

/// Relative distance of two complex vectors, scaled by the larger norm.
template <class A, class B>
double relative_error(const A& a, const B& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline double db(std::complex<double> z) { return 20 * std::log10(std::abs(z)); }
inline double deg(std::complex<double> z) { return std::arg(z) * 180 / pi; }
inline double phase_error_deg(std::complex<double> a, std::complex<double> b) {
  return std::abs(deg(a / b));
}

}  // namespace gam::test
