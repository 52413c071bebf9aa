#pragma once

// Closed-form coefficient models of 0/1 switching signals with one rising and
// one falling edge per period, and the sensitivities that tie the edges to
// modulator inputs and to zero crossings of circuit waveforms.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "gam/fourier.hpp"

namespace gam {

template <class Real = double>
struct SwitchingSignalState {
  Real duty;   // <s>_0
  Real phase;  // angle of <s>_1
  Real rise;   // t_r in (-T/2, T/2]
  Real fall;   // t_f in (-T/2, T/2]
  Real omega;

  Real period() const { return 2 * std::numbers::pi_v<Real> / omega; }
};

template <class Real>
struct EdgeInstants {
  Real rise;
  Real fall;
};

/// <s> of a rectangular pulse train of the given duty whose fundamental has
/// the given phase.
template <class Real>
HarmonicVector<Real> rect_coefficients(Real duty, Real phase, Real omega, int order) {
  if (!(duty >= 0 && duty <= 1)) fail(ErrorKind::domain, "duty must lie in [0, 1]");
  constexpr Real pi = std::numbers::pi_v<Real>;
  ComplexVector<Real> c(2 * order + 1);
  c(order) = duty;
  for (int n = 1; n <= order; ++n) {
    const Real magnitude = std::sin(pi * n * duty) / (pi * n);
    const auto value = std::polar(magnitude, n * phase);
    c(order + n) = value;
    c(order - n) = std::conj(value);
  }
  return HarmonicVector<Real>(std::move(c), omega);
}

/// Rising and falling instants of a pulse with the given duty and phase,
/// reduced into (-T/2, T/2].
template <class Real>
EdgeInstants<Real> instants(Real duty, Real phase, Real omega) {
  if (!(duty > 0 && duty < 1))
    fail(ErrorKind::no_edge, "a signal with duty 0 or 1 has no switching edges");
  constexpr Real pi = std::numbers::pi_v<Real>;
  return {wrap(-phase - pi * duty) / omega, wrap(-phase + pi * duty) / omega};
}

/// Inverse of `instants`: duty and phase of the pulse rising at t_r and
/// falling at t_f.
template <class Real>
SwitchingSignalState<Real> switching_state_from_instants(Real rise, Real fall, Real omega) {
  constexpr Real pi = std::numbers::pi_v<Real>;
  const Real period = 2 * pi / omega;
  Real width = std::fmod(fall - rise, period);
  if (width < 0) width += period;
  const Real duty = width / period;
  if (!(duty > 0 && duty < 1))
    fail(ErrorKind::no_edge, "coincident rising and falling instants");
  const Real phase = wrap(-omega * rise - pi * duty);
  const auto edges = instants(duty, phase, omega);
  return {duty, phase, edges.rise, edges.fall, omega};
}

template <class Real>
SwitchingSignalState<Real> switching_state(Real duty, Real phase, Real omega) {
  const auto edges = instants(duty, phase, omega);
  return {duty, phase, edges.rise, edges.fall, omega};
}

/// d<s>/dt_r and d<s>/dt_f.
template <class Real>
struct EdgeSensitivity {
  HarmonicVector<Real> d_rise;
  HarmonicVector<Real> d_fall;
};

template <class Real>
EdgeSensitivity<Real> edge_sensitivity(Real rise, Real fall, Real omega, int order) {
  const Real inv_period = omega / (2 * std::numbers::pi_v<Real>);
  ComplexVector<Real> r(2 * order + 1), f(2 * order + 1);
  for (int n = -order; n <= order; ++n) {
    r(n + order) = -inv_period * std::polar(Real(1), -n * omega * rise);
    f(n + order) = inv_period * std::polar(Real(1), -n * omega * fall);
  }
  return {HarmonicVector<Real>(std::move(r), omega), HarmonicVector<Real>(std::move(f), omega)};
}

/// dt0/d<x>_m for m = -M..M at a zero crossing t0 of x.
template <class Real>
struct ZeroSensitivity {
  ComplexRowVector<Real> row;
  Real crossing;
  std::complex<Real> denominator;

  int order() const { return static_cast<int>(row.size() / 2); }
};

template <class Real>
struct ZeroSensitivityOptions {
  /// Replaces the reconstructed slope, e.g. by the mean of the one-sided
  /// slopes at a kink.
  std::optional<Real> slope;
  /// |x(t0)| allowed, relative to sum |<x>_n| (an upper bound on max |x|).
  Real value_tolerance = Real(1e-3);
};

template <class Real>
ZeroSensitivity<Real> zero_sensitivity(const HarmonicVector<Real>& v, Real crossing, int order,
                                       const ZeroSensitivityOptions<Real>& options = {}) {
  const Real bound = v.coeffs().cwiseAbs().sum();
  const Real value = evaluate(v, crossing).real();
  if (std::abs(value) > options.value_tolerance * bound + std::numeric_limits<Real>::min()) {
    std::ostringstream os;
    os << "x(t0) = " << value << " is not a zero (bound " << bound << ")";
    fail(ErrorKind::not_a_zero, os.str());
  }
  const std::complex<Real> denominator =
      options.slope ? std::complex<Real>(*options.slope) : evaluate_derivative(v, crossing);
  const Real norm = v.coeffs().norm();
  if (!(std::abs(denominator) >= Real(1e-9) * v.omega() * norm) || std::abs(denominator) == 0)
    fail(ErrorKind::grazing_crossing, "slope at the zero crossing is too small to linearize");
  ComplexRowVector<Real> row(2 * order + 1);
  for (int m = -order; m <= order; ++m)
    row(m + order) = -std::polar(Real(1), m * v.omega() * crossing) / denominator;
  return {std::move(row), crossing, denominator};
}

/// Chain rule for the zero of f(x): dt0/d<x> = (df/dx) dt0/d<f>.
template <class Real>
ZeroSensitivity<Real> function_zero_sensitivity(Real dfdx, const ZeroSensitivity<Real>& of_f) {
  if (!std::isfinite(dfdx)) fail(ErrorKind::domain, "df/dx must be finite");
  return {of_f.row * dfdx, of_f.crossing, of_f.denominator};
}

enum class Carrier { triangle, sawtooth, reverse_sawtooth };

inline Carrier carrier_from_string(std::string_view name) {
  if (name == "triangle") return Carrier::triangle;
  if (name == "sawtooth") return Carrier::sawtooth;
  if (name == "reverse_sawtooth") return Carrier::reverse_sawtooth;
  fail(ErrorKind::domain, "unknown carrier '" + std::string(name) + "'");
}

inline std::string_view to_string(Carrier carrier) {
  switch (carrier) {
    case Carrier::triangle: return "triangle";
    case Carrier::sawtooth: return "sawtooth";
    case Carrier::reverse_sawtooth: return "reverse_sawtooth";
  }
  return "unknown";
}

/// Carrier slope c'(t) at the rising and falling edges of the PWM output.
/// An infinite slope marks a clocked edge.
template <class Real>
EdgeInstants<Real> carrier_slopes(Carrier carrier, Real period) {
  constexpr Real inf = std::numeric_limits<Real>::infinity();
  switch (carrier) {
    case Carrier::triangle: return {-2 / period, 2 / period};
    case Carrier::sawtooth: return {-inf, 1 / period};
    case Carrier::reverse_sawtooth: return {-1 / period, inf};
  }
  fail(ErrorKind::domain, "unknown carrier");
}

/// dt_edge/d<d>_m = e^{jm w t}/c'(t); zero for a clocked edge.
template <class Real>
ComplexRowVector<Real> pwm_edge_gain(Real carrier_slope, Real edge, Real omega, int order) {
  ComplexRowVector<Real> row = ComplexRowVector<Real>::Zero(2 * order + 1);
  if (std::isinf(carrier_slope)) return row;
  for (int m = -order; m <= order; ++m)
    row(m + order) = std::polar(Real(1), m * omega * edge) / carrier_slope;
  return row;
}

/// d<s1>_n/d<d>_m for n = -N..N (rows), m = -M..M (columns).
template <class Real>
ComplexMatrix<Real> pwm_duty_sensitivity(Carrier carrier, Real rise, Real fall, Real omega,
                                        int order, int input_order) {
  ComplexMatrix<Real> s(2 * order + 1, 2 * input_order + 1);
  for (int n = -order; n <= order; ++n) {
    for (int m = -input_order; m <= input_order; ++m) {
      const Real k = static_cast<Real>(n - m) * omega;
      std::complex<Real> value;
      switch (carrier) {
        case Carrier::triangle:
          value = (std::polar(Real(1), -k * rise) + std::polar(Real(1), -k * fall)) / Real(2);
          break;
        case Carrier::sawtooth: value = std::polar(Real(1), -k * fall); break;
        case Carrier::reverse_sawtooth: value = std::polar(Real(1), -k * rise); break;
      }
      s(n + order, m + input_order) = value;
    }
  }
  return s;
}

/// dt_edge/d<alpha>_m for a phase-shifted carrier; independent of its shape.
template <class Real>
ComplexRowVector<Real> psm_phase_sensitivity(Real edge, Real omega, int order) {
  ComplexRowVector<Real> row(2 * order + 1);
  for (int m = -order; m <= order; ++m)
    row(m + order) = -std::polar(Real(1), m * omega * edge) / omega;
  return row;
}

}  // namespace gam
