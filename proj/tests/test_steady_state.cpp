#include "doctest.h"

#include <chrono>
#include <cmath>

#include "gam/oracle.hpp"
#include "gam/spec_io.hpp"
#include "gam/steady_state.hpp"
#include "support.hpp"

using namespace gam;
using gam::test::pi;

namespace {

double mean(const OperatingPoint& op, const std::string& name) { return op.signal(name)(0).real(); }

// Mean of one state over a settled simulated period.
double simulated_mean(const SettledCycle& c, int state) {
  double s = 0;
  for (const auto& row : c.cycle.states) s += row[state];
  return s / static_cast<double>(c.cycle.states.size());
}

// Classical DCM boost ratio from the inductor current triangle, ignoring
// output ripple.
std::pair<double, double> dcm_boost_ratio(double L, double R, double T, double D) {
  const double K = 2 * L / (R * T);
  const double M = (1 + std::sqrt(1 + 4 * D * D / K)) / 2;
  return {M, D / (M - 1)};
}

}  // namespace

TEST_CASE("DC circuit equilibrium") {
  CircuitDescription rc;
  rc.states = {{"v", 1e-6}};
  rc.inputs = {{"u", 7.5}};
  rc.terms = {{"v", 1 / 50.0, {}, "u"}, {"v", -1 / 50.0, {}, "v"}};
  const int N = 5;
  const LiftedModel model(rc, N, 2 * pi * 1e4);
  const cvec x = solve_equilibrium(model, {}, model.input_vectors());
  CHECK(x(N).real() == doctest::Approx(7.5).epsilon(1e-14));
  for (int n = 1; n <= N; ++n) CHECK(std::abs(x(N + n)) < 1e-14);
}

TEST_CASE("equilibrium residual of every preset") {
  for (const auto& name : preset_names()) {
    CAPTURE(std::string(name));
    const auto spec = load_preset(name);
    const auto op = find_operating_point(spec, 49);
    const auto model = op.model();
    std::vector<HarmonicVectord> inputs = model.input_vectors();
    const cvec x = op.stacked();
    const cvec r = model.rhs(x, inputs, op.switches);
    CHECK(r.norm() < 1e-9 * x.norm());
    CHECK(op.equilibrium_residual < 1e-10);
    for (const auto& c : op.constraints) CHECK(std::abs(c.value) < 1e-8);
  }
}

TEST_CASE("boost CCM mean output agrees with the simulated limit cycle") {
  const auto spec = load_preset("boost_ccm");
  const auto start = std::chrono::steady_clock::now();
  const auto op = find_operating_point(spec, 49);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 1.0);
  const auto settled = steady_state_by_simulation(spec);
  CHECK(mean(op, "vo") == doctest::Approx(simulated_mean(settled, 1)).epsilon(5e-4));
  CHECK(mean(op, "iL") == doctest::Approx(simulated_mean(settled, 0)).epsilon(5e-4));
  // the large output ripple keeps the period mean below vi / (1 - d)
  CHECK(mean(op, "vo") < 48.0);
  CHECK(mean(op, "vo") > 46.0);
}

TEST_CASE("boost DCM operating point") {
  const auto spec = load_preset("boost_dcm");
  const auto op = find_operating_point(spec, 49);
  const double vo = mean(op, "vo"), d2 = op.switches[1](0).real();
  CHECK(vo == doctest::Approx(60.2).epsilon(0.02));
  CHECK(d2 == doctest::Approx(0.33).epsilon(0.05));
  const auto [M, d2_geometry] = dcm_boost_ratio(33e-6, 100, 1e-5, 0.5);
  CHECK(vo == doctest::Approx(24 * M).epsilon(0.02));
  CHECK(d2 == doctest::Approx(d2_geometry).epsilon(0.05));
}

TEST_CASE("buck COT operating point") {
  const auto spec = load_preset("buck_ccm");
  const auto op = find_operating_point(spec, 49);
  CHECK(op.frequency() == doctest::Approx(813e3).epsilon(0.02));
  const auto& s1 = op.switching[spec.controlled_switch()];
  double on = std::fmod(s1.fall - s1.rise, op.period());
  if (on < 0) on += op.period();
  CHECK(on == doctest::Approx(554e-9).epsilon(1e-12));
  REQUIRE(op.comparator_instant);
  // the comparator crosses zero T_d before the turn-on
  CHECK(std::abs(std::remainder(s1.rise - *op.comparator_instant - 170e-9, op.period())) <
        1e-12 * op.period());
}

TEST_CASE("LLC operating points") {
  const auto above = find_operating_point(load_preset("llc_above"), 49);
  CHECK(above.switches[1](0).real() == 0.5);
  CHECK(above.switches[2](0).real() == 0.5);
  CHECK(above.constraints.size() == 1);
  const auto below = find_operating_point(load_preset("llc_below"), 49);
  CHECK(below.switches[1](0).real() < 0.5);
  CHECK(below.switches[1](0).real() > 0.2);
}

TEST_CASE("boost CCM waveforms") {
  const auto op = find_operating_point(load_preset("boost_ccm"), 49);
  const auto grid = period_grid(op, 4000);
  const auto wf = waveforms(op, grid);
  REQUIRE(wf.names[0] == "iL");
  const auto& iL = wf.values[0];
  const double ripple = *std::max_element(iL.begin(), iL.end()) - *std::min_element(iL.begin(), iL.end());
  CHECK(ripple == doctest::Approx(24 * 0.5 * 1e-5 / 33e-6).epsilon(0.02));
  double sum = 0;
  for (double v : wf.values[1]) sum += v;
  CHECK(std::abs(sum / grid.size() - mean(op, "vo")) < 1e-9 * mean(op, "vo"));
}

TEST_CASE("boost CCM waveform mismatch against the simulated cycle") {
  const auto spec = load_preset("boost_ccm");
  const auto op = find_operating_point(spec, 49);
  const auto settled = steady_state_by_simulation(spec);
  const double rise = op.switching[spec.controlled_switch()].rise;
  const int M = static_cast<int>(settled.cycle.time.size());
  for (int j = 0; j < 2; ++j) {
    const auto v = op.states[j];
    double se = 0;
    for (int k = 0; k < M; ++k) {
      const double t = rise + k * settled.period / M;
      const double e = evaluate(v, t).real() - settled.cycle.states[k][j];
      se += e * e;
    }
    CHECK(std::sqrt(se / M) < 0.03 * 2 * std::abs(v(1)));
  }
}

TEST_CASE("property: DCM secant converges quickly around the nominal point") {
  const auto base = load_preset("boost_dcm");
  for (double fr : {0.8, 1.0, 1.2}) {
    for (double fl : {0.8, 1.0, 1.2}) {
      auto spec = base;
      spec.set_parameter("R", 100 * fr);
      spec.set_parameter("L", 33e-6 * fl);
      CAPTURE(fr);
      CAPTURE(fl);
      const auto op = find_operating_point(spec, 49);
      REQUIRE(op.constraints.size() == 1);
      CHECK(op.constraints[0].iterations <= 25);
    }
  }
}

TEST_CASE("CCM and DCM agree at the conduction boundary") {
  // the output ripple moves the boundary below 2L / (T D (1 - D)^2), so
  // bisect on the load until the diode conducts up to the next turn-on
  auto dcm = load_preset("boost_dcm");
  dcm.set_parameter("C", 0.9e-6);
  double lo = 40, hi = 2 * 33e-6 / (1e-5 * 0.5 * 0.25);
  for (int i = 0; i < 30; ++i) {
    const double mid = (lo + hi) / 2;
    dcm.set_parameter("R", mid);
    bool near = true;
    try {
      near = find_operating_point(dcm, 49).switches[1](0).real() > 0.4995;
    } catch (const Error&) {
    }
    (near ? lo : hi) = mid;
  }
  dcm.set_parameter("R", hi);
  auto ccm = load_preset("boost_ccm");
  ccm.set_parameter("R", hi);
  const auto a = find_operating_point(dcm, 49);
  const auto b = find_operating_point(ccm, 49);
  CHECK(a.switches[1](0).real() > 0.499);
  CHECK(mean(a, "vo") == doctest::Approx(mean(b, "vo")).epsilon(0.005));
}

TEST_CASE("power balance of the lossless boost") {
  // the truncated diode product leaks power as 1/N in DCM
  for (const auto& [name, N] : {std::pair{"boost_ccm", 49}, std::pair{"boost_dcm", 99}}) {
    CAPTURE(std::string(name));
    const auto spec = load_preset(name);
    const auto op = find_operating_point(spec, N);
    const double vi = spec.parameter("vi"), R = spec.parameter("R");
    const double p_in = vi * mean(op, "iL");
    const auto vo = op.signal("vo");
    double p_out = 0;
    for (int n = -vo.order(); n <= vo.order(); ++n) p_out += std::norm(vo(n)) / R;
    CHECK(std::abs(p_in - p_out) < 1e-3 * p_in);
  }
}

TEST_CASE("truncation refinement of the boost equilibrium") {
  const auto spec = load_preset("boost_ccm");
  const double a = mean(find_operating_point(spec, 25), "vo");
  const double b = mean(find_operating_point(spec, 49), "vo");
  CHECK(std::abs(a - b) < 1e-4 * b);
}

TEST_CASE("operating point failures") {
  try {
    find_operating_point(load_preset("boost_dcm"), 0);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
  auto heavy = load_preset("boost_dcm");
  heavy.set_parameter("R", 10);  // continuous conduction
  try {
    find_operating_point(heavy, 49);
    FAIL("expected a mode error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mode);
  }
}

TEST_CASE("scalar solver") {
  SolverSettings settings;
  const auto sol = solve_scalar([](double x) { return x * x * x - 0.2; }, 0.3, 0.0, 1.0, settings, "cube");
  CHECK(sol.x == doctest::Approx(std::cbrt(0.2)).epsilon(1e-9));
  CHECK(std::abs(sol.residual) < settings.residual_tol);
  try {
    solve_scalar([](double x) { return x - 2; }, 0.5, 0.0, 1.0, settings, "line");
    FAIL("expected a mode error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mode);
  }
}
