#pragma once

// Moving Fourier coefficients of one scalar signal, truncated to harmonics
// -N..N, and the algebra on them: sampling, reconstruction, convolution,
// Toeplitz multiplication operators and the Laplace scaling factor.
//
// Everything here is templated on the real scalar type so the same code runs
// in double for the models and in long double for reference computations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gam/error.hpp"

namespace gam {

template <class Real>
using ComplexVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <class Real>
using ComplexRowVector = Eigen::Matrix<std::complex<Real>, 1, Eigen::Dynamic>;
template <class Real>
using ComplexMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

/// Maps an angle onto (-pi, pi].
template <class Real>
Real wrap(Real theta) {
  if (!std::isfinite(theta)) fail(ErrorKind::domain, "wrap: angle is not finite");
  constexpr Real pi = std::numbers::pi_v<Real>;
  constexpr Real two_pi = 2 * pi;
  Real r = std::fmod(theta + pi, two_pi);
  if (r <= 0) r += two_pi;
  // r in (0, 2pi]
  return r - pi;
}

/// Truncated vector of moving Fourier coefficients <x>_n, n = -N..N, stored
/// in index order so that entry n sits at position n + N.
template <class Real = double>
class HarmonicVector {
 public:
  using Complex = std::complex<Real>;
  using Coefficients = ComplexVector<Real>;

  HarmonicVector(int order, Real omega, bool real_signal = true)
      : coeffs_(Coefficients::Zero(2 * checked_order(order) + 1)),
        omega_(checked_omega(omega)),
        real_signal_(real_signal) {}

  HarmonicVector(Coefficients coeffs, Real omega, bool real_signal = true)
      : coeffs_(std::move(coeffs)), omega_(checked_omega(omega)), real_signal_(real_signal) {
    if (coeffs_.size() % 2 != 1)
      fail(ErrorKind::domain, "harmonic vector needs 2N+1 entries");
    if (real_signal_) check_symmetry();
  }

  static HarmonicVector constant(Real value, int order, Real omega) {
    HarmonicVector v(order, omega);
    v.coeffs_(order) = value;
    return v;
  }

  static HarmonicVector unit(int order, Real omega) { return constant(Real(1), order, omega); }

  /// Projects onto the conjugate-symmetric subspace. The discarded
  /// antisymmetric part must be below `tolerance` relative to the largest
  /// entry (or to `reference`, if larger, for vectors cut out of a bigger
  /// solution), otherwise the input did not describe a real signal.
  static HarmonicVector real_part_of(const Coefficients& coeffs, Real omega,
                                     Real tolerance = Real(1e-8), Real reference = Real(0)) {
    const Eigen::Index size = coeffs.size();
    Coefficients sym(size);
    Real worst = 0;
    for (Eigen::Index i = 0; i < size; ++i) {
      const Complex mirrored = std::conj(coeffs(size - 1 - i));
      sym(i) = (coeffs(i) + mirrored) / Real(2);
      worst = std::max(worst, std::abs(coeffs(i) - mirrored));
    }
    const Real scale = std::max(reference, coeffs.size() ? coeffs.cwiseAbs().maxCoeff() : Real(0));
    if (worst > tolerance * scale + std::numeric_limits<Real>::min()) {
      std::ostringstream os;
      os << "coefficients are not conjugate symmetric (defect " << worst << ", scale " << scale
         << ")";
      fail(ErrorKind::symmetry_violation, os.str());
    }
    return HarmonicVector(std::move(sym), omega, true);
  }

  int order() const { return static_cast<int>(coeffs_.size() / 2); }
  Eigen::Index size() const { return coeffs_.size(); }
  Real omega() const { return omega_; }
  Real period() const { return 2 * std::numbers::pi_v<Real> / omega_; }
  bool real_signal() const { return real_signal_; }

  /// Entry n, zero when |n| > N.
  Complex operator()(int n) const {
    const int N = order();
    if (n < -N || n > N) return Complex(0);
    return coeffs_(n + N);
  }

  const Coefficients& coeffs() const { return coeffs_; }

  HarmonicVector conjugate_reflect() const {
    return HarmonicVector(coeffs_.reverse().conjugate(), omega_, real_signal_);
  }

 private:
  static int checked_order(int order) {
    if (order < 0) fail(ErrorKind::domain, "truncation order must be >= 0");
    return order;
  }
  static Real checked_omega(Real omega) {
    if (!(omega > 0) || !std::isfinite(omega))
      fail(ErrorKind::domain, "fundamental angular frequency must be positive");
    return omega;
  }
  void check_symmetry() const {
    const Eigen::Index size = coeffs_.size();
    const Real scale = coeffs_.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < size; ++i) {
      const Real defect = std::abs(coeffs_(i) - std::conj(coeffs_(size - 1 - i)));
      if (defect > Real(1e-12) * scale + std::numeric_limits<Real>::min())
        fail(ErrorKind::symmetry_violation,
             "real-signal harmonic vector violates entry(-n) = conj(entry(n))");
    }
  }

  Coefficients coeffs_;
  Real omega_;
  bool real_signal_;
};

using HarmonicVectord = HarmonicVector<double>;

namespace detail {
template <class Real>
void require_compatible(const HarmonicVector<Real>& a, const HarmonicVector<Real>& b,
                        const char* what) {
  if (a.order() != b.order())
    fail(ErrorKind::domain, std::string(what) + ": truncation orders differ");
  if (std::abs(a.omega() - b.omega()) > Real(1e-12) * a.omega())
    fail(ErrorKind::domain, std::string(what) + ": fundamental frequencies differ");
}
}  // namespace detail

template <class Real>
HarmonicVector<Real> operator+(const HarmonicVector<Real>& a, const HarmonicVector<Real>& b) {
  detail::require_compatible(a, b, "add");
  return HarmonicVector<Real>(a.coeffs() + b.coeffs(), a.omega(),
                              a.real_signal() && b.real_signal());
}

template <class Real>
HarmonicVector<Real> operator-(const HarmonicVector<Real>& a, const HarmonicVector<Real>& b) {
  detail::require_compatible(a, b, "subtract");
  return HarmonicVector<Real>(a.coeffs() - b.coeffs(), a.omega(),
                              a.real_signal() && b.real_signal());
}

template <class Real>
HarmonicVector<Real> operator*(Real k, const HarmonicVector<Real>& v) {
  return HarmonicVector<Real>(v.coeffs() * k, v.omega(), v.real_signal());
}

/// Result of sampling a signal over one window.
template <class Real>
struct SampledCoefficients {
  HarmonicVector<Real> coefficients;
  std::string rule;
  std::size_t sample_count;
};

/// <x>_n over the window [t_begin, t_end] from uniformly spaced samples that
/// include both end points, by the composite trapezoid rule.
template <class Real>
SampledCoefficients<Real> coefficients_of_samples(std::span<const Real> samples, Real t_begin,
                                                  Real t_end, Real period, int order) {
  if (order < 0) fail(ErrorKind::domain, "truncation order must be >= 0");
  if (!(period > 0)) fail(ErrorKind::domain, "period must be positive");
  const Real window = t_end - t_begin;
  if (window < period * (1 - Real(1e-9)))
    fail(ErrorKind::domain, "sample window is shorter than the period");
  if (window > period * (1 + Real(1e-9)))
    fail(ErrorKind::domain, "sample window is longer than the period");
  const std::size_t needed = 32 * static_cast<std::size_t>(2 * order + 1) + 1;
  if (samples.size() < needed) {
    std::ostringstream os;
    os << "need at least " << needed << " samples for order " << order << ", got "
       << samples.size();
    fail(ErrorKind::domain, os.str());
  }
  const std::size_t intervals = samples.size() - 1;
  const Real h = window / static_cast<Real>(intervals);
  const Real omega = 2 * std::numbers::pi_v<Real> / period;

  ComplexVector<Real> c = ComplexVector<Real>::Zero(2 * order + 1);
  for (int n = -order; n <= order; ++n) {
    std::complex<Real> acc(0);
    for (std::size_t k = 0; k <= intervals; ++k) {
      const Real t = t_begin + h * static_cast<Real>(k);
      const Real weight = (k == 0 || k == intervals) ? Real(0.5) : Real(1);
      acc += weight * samples[k] * std::polar(Real(1), -static_cast<Real>(n) * omega * t);
    }
    c(n + order) = acc * h / period;
  }
  return {HarmonicVector<Real>::real_part_of(c, omega, Real(1e-9)), "composite-trapezoid",
          samples.size()};
}

/// Samples `x` on the window centred at `tau` and returns its coefficients.
template <class Real, class Fn>
SampledCoefficients<Real> coefficients_of_function(Fn&& x, Real tau, Real period, int order,
                                                   std::size_t samples_per_entry = 32) {
  const std::size_t intervals = samples_per_entry * static_cast<std::size_t>(2 * order + 1);
  std::vector<Real> samples(intervals + 1);
  const Real t0 = tau - period / 2;
  for (std::size_t k = 0; k <= intervals; ++k)
    samples[k] = x(t0 + period * static_cast<Real>(k) / static_cast<Real>(intervals));
  return coefficients_of_samples<Real>(samples, t0, t0 + period, period, order);
}

/// Complex value of the truncated series sum_n v_n e^{jn w t}.
template <class Real>
std::complex<Real> evaluate(const HarmonicVector<Real>& v, Real t) {
  const int N = v.order();
  std::complex<Real> acc(0);
  for (int n = -N; n <= N; ++n)
    acc += v(n) * std::polar(Real(1), static_cast<Real>(n) * v.omega() * t);
  return acc;
}

/// Complex value of sum_n jnw v_n e^{jn w t}.
template <class Real>
std::complex<Real> evaluate_derivative(const HarmonicVector<Real>& v, Real t) {
  const int N = v.order();
  std::complex<Real> acc(0);
  for (int n = -N; n <= N; ++n)
    acc += std::complex<Real>(0, static_cast<Real>(n) * v.omega()) * v(n) *
           std::polar(Real(1), static_cast<Real>(n) * v.omega() * t);
  return acc;
}

namespace detail {
template <class Real>
void check_window(const HarmonicVector<Real>& v, Real t, Real tau) {
  const Real half = v.period() / 2;
  const Real slack = Real(1e-9) * v.period();
  if (t < tau - half - slack || t > tau + half + slack)
    fail(ErrorKind::domain, "reconstruction time outside the coefficient window");
}
template <class Real>
Real real_or_throw(std::complex<Real> z, const char* what) {
  if (std::abs(z.imag()) >= Real(1e-9) * (1 + std::abs(z.real())))
    fail(ErrorKind::symmetry_violation, std::string(what) + ": imaginary residue too large");
  return z.real();
}
}  // namespace detail

/// x(t) from its coefficients; at a jump this converges to the mean of the
/// one-sided limits.
template <class Real>
Real reconstruct(const HarmonicVector<Real>& v, Real t, Real tau = Real(0)) {
  detail::check_window(v, t, tau);
  const auto z = evaluate(v, t);
  if (!v.real_signal()) return z.real();
  return detail::real_or_throw(z, "reconstruct");
}

template <class Real>
Real reconstruct_derivative(const HarmonicVector<Real>& v, Real t, Real tau = Real(0)) {
  detail::check_window(v, t, tau);
  const auto z = evaluate_derivative(v, t);
  if (!v.real_signal()) return z.real();
  return detail::real_or_throw(z, "reconstruct_derivative");
}

/// Convolution matrix: element (m, n) is entry m - n, zero beyond +-N.
template <class Real>
ComplexMatrix<Real> toeplitz(const HarmonicVector<Real>& v) {
  const int N = v.order();
  const int size = 2 * N + 1;
  ComplexMatrix<Real> t = ComplexMatrix<Real>::Zero(size, size);
  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) t(row, col) = v(row - col);
  return t;
}

/// Truncated discrete convolution; indices beyond +-N are discarded.
template <class Real>
HarmonicVector<Real> convolve(const HarmonicVector<Real>& a, const HarmonicVector<Real>& b) {
  detail::require_compatible(a, b, "convolve");
  const int N = a.order();
  ComplexVector<Real> c = ComplexVector<Real>::Zero(2 * N + 1);
  for (int n = -N; n <= N; ++n) {
    std::complex<Real> acc(0);
    for (int m = std::max(-N, n - N); m <= std::min(N, n + N); ++m) acc += a(n - m) * b(m);
    c(n + N) = acc;
  }
  // exact symmetry is preserved term by term, so the tagged constructor's
  // strict check is the right contract here
  const bool real = a.real_signal() && b.real_signal();
  if (real) return HarmonicVector<Real>::real_part_of(c, a.omega(), Real(1e-12));
  return HarmonicVector<Real>(std::move(c), a.omega(), false);
}

/// diag(-N, ..., 0, ..., N)
template <class Real = double>
Eigen::DiagonalMatrix<Real, Eigen::Dynamic> index_matrix(int order) {
  if (order < 0) fail(ErrorKind::domain, "truncation order must be >= 0");
  Eigen::Matrix<Real, Eigen::Dynamic, 1> d(2 * order + 1);
  for (int n = -order; n <= order; ++n) d(n + order) = static_cast<Real>(n);
  return Eigen::DiagonalMatrix<Real, Eigen::Dynamic>(d);
}

/// (e^{Ts/2} - e^{-Ts/2}) / (Ts), T = 2pi/omega. Written as sin(pi q)/(pi q)
/// with q = s/(j omega); the integer part of Re q is reduced out first so the
/// zeros at s = jk omega come out exact.
template <class Real>
std::complex<Real> sinc_factor(std::complex<Real> s, Real omega) {
  if (!(omega > 0)) fail(ErrorKind::domain, "sinc_factor: omega must be positive");
  constexpr Real pi = std::numbers::pi_v<Real>;
  const std::complex<Real> q = s / std::complex<Real>(0, omega);
  if (std::abs(q) < Real(1e-6)) {
    const std::complex<Real> z = pi * q;
    return Real(1) - z * z / Real(6) + z * z * z * z / Real(120);
  }
  const Real k = std::round(q.real());
  const Real sign = (static_cast<long long>(k) % 2 == 0) ? Real(1) : Real(-1);
  const std::complex<Real> reduced = q - k;
  std::complex<Real> numerator;
  if (reduced == std::complex<Real>(0))
    numerator = 0;
  else
    numerator = sign * std::sin(pi * reduced);
  return numerator / (pi * q);
}

}  // namespace gam
