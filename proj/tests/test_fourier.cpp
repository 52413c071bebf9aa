#include "doctest.h"

#include <cmath>
#include <vector>

#include "gam/fourier.hpp"
#include "gam/oracle.hpp"
#include "gam/spec_io.hpp"
#include "support.hpp"

using namespace gam;
using gam::test::Gen;
using gam::test::pi;

namespace {

constexpr double omega = 2 * pi * 1e5;
constexpr double period = 2 * pi / omega;

std::vector<double> sample(const std::function<double(double)>& x, double t0, int order,
                           int per_entry = 32) {
  const int intervals = per_entry * (2 * order + 1);
  std::vector<double> s(intervals + 1);
  for (int k = 0; k <= intervals; ++k) s[k] = x(t0 + period * k / intervals);
  return s;
}

HarmonicVectord of(const std::function<double(double)>& x, int order, double tau = 0,
                   int per_entry = 32) {
  return coefficients_of_function<double>(x, tau, period, order, per_entry).coefficients;
}

// Band-limited real signal given by its harmonic vector.
double value(const HarmonicVectord& v, double t) { return evaluate(v, t).real(); }

}  // namespace

TEST_CASE("wrap reduces into (-pi, pi]") {
  CHECK(wrap(0.0) == 0.0);
  CHECK(wrap(3 * pi) == doctest::Approx(pi).epsilon(1e-15));
  CHECK(wrap(-pi) == doctest::Approx(pi).epsilon(1e-15));
  CHECK(wrap(-1.5 * pi) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK_THROWS_AS(wrap(std::nan("")), Error);

  Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double theta = gen.uniform(-100, 100);
    const double r = wrap(theta);
    CHECK(r > -pi);
    CHECK(r <= pi);
    const double turns = (theta - r) / (2 * pi);
    CHECK(std::abs(turns - std::round(turns)) < 1e-12);
  }
}

TEST_CASE("harmonic vector invariants") {
  CHECK_THROWS_AS(HarmonicVectord(-1, omega), Error);
  CHECK_THROWS_AS(HarmonicVectord(2, 0.0), Error);
  CHECK_THROWS_AS(HarmonicVectord(ComplexVector<double>::Zero(4), omega), Error);
  ComplexVector<double> c = ComplexVector<double>::Zero(3);
  c(0) = {1, 1};
  c(2) = {1, 1};  // not conj(c(0))
  CHECK_THROWS_AS(HarmonicVectord(c, omega), Error);
  try {
    HarmonicVectord bad(c, omega);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::symmetry_violation);
  }
  CHECK_NOTHROW(HarmonicVectord(c, omega, false));
  const auto v = HarmonicVectord::constant(2.5, 4, omega);
  CHECK(v.size() == 9);
  CHECK(v(0) == std::complex<double>(2.5));
  CHECK(v(7) == std::complex<double>(0));
}

TEST_CASE("coefficients of simple signals") {
  const int N = 6;
  const auto one = of([](double) { return 1.0; }, N);
  CHECK(std::abs(one(0) - 1.0) < 1e-12);
  for (int n = 1; n <= N; ++n) CHECK(std::abs(one(n)) < 1e-12);

  const auto cosine = of([](double t) { return std::cos(omega * t); }, N);
  CHECK(std::abs(cosine(1) - 0.5) < 1e-12);
  CHECK(std::abs(cosine(-1) - 0.5) < 1e-12);
  CHECK(std::abs(cosine(0)) < 1e-12);
  CHECK(std::abs(cosine(3)) < 1e-12);

  // unit pulse of duty 0.5 centred at tau = 0
  const auto pulse = of(
      [](double t) {
        const double d = std::abs(t) - period / 4;
        return std::abs(d) < 1e-9 * period ? 0.5 : (d < 0 ? 1.0 : 0.0);
      },
      N);
  CHECK(std::abs(pulse(1) - 1 / pi) < 2e-3);
  CHECK(std::abs(pulse(0) - 0.5) < 2e-3);

  CHECK_THROWS_AS(coefficients_of_samples<double>(std::vector<double>(10, 1.0), 0.0, period, period, 3),
                  Error);
  CHECK_THROWS_AS(coefficients_of_samples<double>(sample([](double) { return 1.0; }, 0, 3), 0.0,
                                                  0.5 * period, period, 3),
                  Error);
}

TEST_CASE("reconstruction") {
  const auto c = HarmonicVectord::constant(3.25, 5, omega);
  for (double t : {-0.4 * period, 0.0, 0.3 * period}) CHECK(reconstruct(c, t) == doctest::Approx(3.25));
  CHECK_THROWS_AS(reconstruct(c, 0.7 * period), Error);

  const auto cosine = of([](double t) { return std::cos(omega * t); }, 4);
  CHECK(std::abs(reconstruct(cosine, 0.0) - 1.0) < 1e-6);
  CHECK(std::abs(reconstruct_derivative(cosine, 0.0)) < 1e-6 * omega);
  for (double t : {-0.2 * period, 0.1 * period}) CHECK(reconstruct_derivative(c, t) == 0.0);

  // truncated series at a jump approaches the mean of the one-sided limits
  const double duty = 0.3;
  double previous = 1;
  for (int N : {9, 49, 199}) {
    ComplexVector<double> v(2 * N + 1);
    v(N) = duty;
    for (int n = 1; n <= N; ++n) {
      v(N + n) = std::sin(pi * n * duty) / (pi * n);
      v(N - n) = v(N + n);
    }
    const double edge = reconstruct(HarmonicVectord(v, omega), duty * period / 2);
    const double error = std::abs(edge - 0.5);
    CHECK(error < previous);
    previous = error;
  }
  CHECK(previous < 2e-3);
}

TEST_CASE("inductor slope from a simulated boost cycle") {
  const auto spec = load_preset("boost_ccm");
  const auto settled = steady_state_by_simulation(spec);
  // the slope jumps at both edges, so a pointwise derivative carries an
  // alternating tail of order jump / (pi N); N = 49 leaves about 1.2 %
  const int N = 199;
  const int intervals = 32 * (2 * N + 1);
  const double T = settled.period;
  Simulator sim = settled.simulator;
  const double t0 = sim.time();  // just after the s1 rising edge
  std::vector<double> samples;
  samples.push_back(sim.state()(0));
  for (int k = 1; k <= intervals; ++k) {
    sim.advance(t0 + T * k / intervals);
    samples.push_back(sim.state()(0));
  }
  const auto v = coefficients_of_samples<double>(samples, 0.0, T, T, N).coefficients;
  const double slope = reconstruct_derivative(v, spec.duty() * T / 2, T / 2);
  CHECK(slope == doctest::Approx(24 / 33e-6).epsilon(0.01));
}

TEST_CASE("toeplitz operators") {
  const int N = 5;
  const auto eye = toeplitz(HarmonicVectord::unit(N, omega));
  CHECK(eye.isApprox(ComplexMatrix<double>::Identity(2 * N + 1, 2 * N + 1)));
  CHECK(toeplitz(HarmonicVectord(N, omega)).isZero());

  Gen gen(3);
  const auto v = gen.real_vector(N, omega);
  const auto t = toeplitz(v);
  for (int r = 1; r < 2 * N + 1; ++r)
    for (int c = 1; c < 2 * N + 1; ++c) CHECK(t(r, c) == t(r - 1, c - 1));

  const auto index = index_matrix(N).diagonal();
  for (int n = -N; n <= N; ++n) CHECK(index(n + N) == n);
}

TEST_CASE("property: toeplitz product equals convolution") {
  Gen gen(17);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int N = gen.integer(0, 16);
    const auto a = gen.real_vector(N, omega);
    const auto b = gen.real_vector(N, omega);
    const ComplexVector<double> lhs = toeplitz(a) * b.coeffs();
    const auto rhs = convolve(a, b);
    worst = std::max(worst, test::relative_error(lhs, rhs.coeffs()));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("convolution examples") {
  Gen gen(5);
  const auto v = gen.real_vector(7, omega);
  const auto same = convolve(v, HarmonicVectord::unit(7, omega));
  CHECK(test::relative_error(same.coeffs(), v.coeffs()) < 1e-15);

  const auto cosine = of([](double t) { return std::cos(omega * t); }, 3);
  const auto square = convolve(cosine, cosine);
  CHECK(std::abs(square(0) - 0.5) < 1e-12);
  CHECK(std::abs(square(2) - 0.25) < 1e-12);
  CHECK(std::abs(square(-2) - 0.25) < 1e-12);
  CHECK(std::abs(square(1)) < 1e-12);

  CHECK_THROWS_AS(convolve(HarmonicVectord(2, omega), HarmonicVectord(3, omega)), Error);
  CHECK_THROWS_AS(convolve(HarmonicVectord(2, omega), HarmonicVectord(2, 2 * omega)), Error);
}

TEST_CASE("property: convolution matches the sampled product") {
  // x y has bandwidth <= N when each factor has bandwidth <= N/2, so the
  // truncated convolution is exact and quadrature is the only error
  Gen gen(23);
  const int N = 8;
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = gen.real_vector(N, omega, N / 2);
    const auto b = gen.real_vector(N, omega, N / 2);
    const auto product = of([&](double t) { return value(a, t) * value(b, t); }, N);
    worst = std::max(worst, test::relative_error(convolve(a, b).coeffs(), product.coeffs()));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("property: hermitian closure of convolution") {
  Gen gen(29);
  for (int trial = 0; trial < 100; ++trial) {
    const int N = gen.integer(0, 12);
    const auto c = convolve(gen.real_vector(N, omega), gen.real_vector(N, omega));
    const double scale = std::max(c.coeffs().cwiseAbs().maxCoeff(), 1e-300);
    for (int n = 0; n <= N; ++n) CHECK(std::abs(c(-n) - std::conj(c(n))) <= 1e-12 * scale);
  }
}

TEST_CASE("property: coefficients are linear in the signal") {
  Gen gen(31);
  const int N = 6;
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = gen.real_vector(N, omega, N);
    const auto y = gen.real_vector(N, omega, N);
    const double a = gen.uniform(-3, 3), b = gen.uniform(-3, 3);
    const auto lhs = of([&](double t) { return a * value(x, t) + b * value(y, t); }, N);
    const auto cx = of([&](double t) { return value(x, t); }, N);
    const auto cy = of([&](double t) { return value(y, t); }, N);
    const ComplexVector<double> rhs = a * cx.coeffs() + b * cy.coeffs();
    CHECK(test::relative_error(lhs.coeffs(), rhs) < 1e-10);
  }
}

TEST_CASE("property: time-derivative rule on a sliding window") {
  // x is a sum of tones at frequencies unrelated to omega, so its moving
  // coefficients vary with tau
  Gen gen(37);
  const int N = 4;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> amp(3), nu(3), phi(3);
    for (int k = 0; k < 3; ++k) {
      amp[k] = gen.uniform(0.2, 1);
      nu[k] = gen.uniform(0.1, 0.5 * N) * omega;
      phi[k] = gen.uniform(-pi, pi);
    }
    auto x = [&](double t) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += amp[k] * std::cos(nu[k] * t + phi[k]);
      return s;
    };
    auto dx = [&](double t) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s -= amp[k] * nu[k] * std::sin(nu[k] * t + phi[k]);
      return s;
    };
    const double tau = gen.uniform(-2, 2) * period, h = 1e-4 * period;
    const int per_entry = 400;
    const auto c = of(x, N, tau, per_entry);
    const auto plus = of(x, N, tau + h, per_entry), minus = of(x, N, tau - h, per_entry);
    const auto derivative = of(dx, N, tau, per_entry);
    ComplexVector<double> rule = (plus.coeffs() - minus.coeffs()) / (2 * h);
    for (int n = -N; n <= N; ++n) rule(n + N) += std::complex<double>(0, n * omega) * c(n);
    CHECK(test::relative_error(rule, derivative.coeffs()) < 1e-4);
  }
}

TEST_CASE("sinc factor") {
  CHECK(sinc_factor(std::complex<double>(0), omega) == std::complex<double>(1));
  CHECK(sinc_factor(std::complex<double>(0, omega), omega) == std::complex<double>(0));
  const auto half = sinc_factor(std::complex<double>(0, omega / 2), omega);
  CHECK(half.real() == doctest::Approx(2 / pi).epsilon(1e-14));
  CHECK(std::abs(half.imag()) < 1e-15);
  CHECK_THROWS_AS(sinc_factor(std::complex<double>(0, 1), 0.0), Error);

  // (e^{Ts/2} - e^{-Ts/2}) / (Ts) off the axis
  const std::complex<double> s(3e4, 2.2e5);
  const auto direct = (std::exp(period * s / 2.0) - std::exp(-period * s / 2.0)) / (period * s);
  CHECK(std::abs(sinc_factor(s, omega) - direct) < 1e-12);
}

TEST_CASE("property: sinc factor vanishes at every nonzero harmonic") {
  for (int k = -10; k <= 10; ++k) {
    if (k == 0) continue;
    CHECK(std::abs(sinc_factor(std::complex<double>(0, k * omega), omega)) < 1e-14);
  }
}
