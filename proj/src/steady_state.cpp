#include "gam/steady_state.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gam {

namespace {

constexpr double pi = std::numbers::pi;

struct Evaluated {
  LiftedModel model;
  std::vector<HarmonicVectord> switches;
  std::vector<SwitchingSignalState<double>> switching;
  cvec x;
};

/// Builds the switching signals from (duty, phase) per switch and solves the
/// equilibrium.
Evaluated evaluate_point(const CircuitDescription& desc, int order, double omega,
                         const std::vector<std::pair<double, double>>& duty_phase,
                         const SolverSettings& settings) {
  LiftedModel model(desc, order, omega);
  std::vector<HarmonicVectord> switches;
  std::vector<SwitchingSignalState<double>> switching;
  for (const auto& [d, phi] : duty_phase) {
    switches.push_back(rect_coefficients(d, phi, omega, order));
    switching.push_back(switching_state(d, phi, omega));
  }
  cvec x = solve_equilibrium(model, switches, model.input_vectors(), settings);
  return {std::move(model), std::move(switches), std::move(switching), std::move(x)};
}

double value_at(const HarmonicVectord& v, double t) { return evaluate(v, t).real(); }
double slope_at(const HarmonicVectord& v, double t) { return evaluate_derivative(v, t).real(); }

HarmonicVectord current_signal(const ConverterSpec& spec, const LiftedModel& model, const cvec& x) {
  const int b = model.block();
  cvec c = cvec::Zero(b);
  for (const auto& [state, weight] : spec.diode_current()) c += weight * x.segment(state * b, b);
  return HarmonicVectord::real_part_of(c, model.omega(), 1e-8, x.cwiseAbs().maxCoeff());
}

std::string sense_name(const ConverterSpec& spec) { return spec.modulation.sense; }

OperatingPoint finish(const ConverterSpec& spec, int order, Evaluated ev,
                      std::vector<ConstraintResidual> constraints,
                      const SolverSettings& settings) {
  OperatingPoint op;
  op.converter = spec.name;
  op.mode = spec.mode;
  op.description = ev.model.description();
  op.order = order;
  op.omega = ev.model.omega();
  op.states = unstack(ev.x, ev.model.state_count(), op.omega);
  op.switches = ev.switches;
  op.switching = ev.switching;
  const cvec r = ev.model.rhs(op.stacked(), ev.model.input_vectors(), op.switches);
  op.equilibrium_residual = r.norm() / std::max(ev.x.norm(), 1e-300);
  op.constraints = std::move(constraints);
  std::ostringstream os;
  os.precision(17);
  os << settings.residual_tol;
  op.metadata.emplace_back("residual_tol", os.str());
  os.str("");
  os << settings.damping;
  op.metadata.emplace_back("secant_damping", os.str());
  op.metadata.emplace_back("max_iterations", std::to_string(settings.max_iterations));
  return op;
}

void require_driven(const ConverterSpec& spec) {
  const int s1 = spec.controlled_switch();
  const auto diodes = spec.diode_switches();
  for (int k = 0; k < static_cast<int>(spec.circuit.switches.size()); ++k) {
    if (k == s1) continue;
    if (std::find(diodes.begin(), diodes.end(), k) == diodes.end())
      fail(ErrorKind::validation,
           "switch '" + spec.circuit.switches[k] + "' is neither modulated nor a diode");
  }
}

// Diode of a freewheel converter: rises when s1 falls, conducts for d2.
double diode_phase(double d1, double d2) { return -pi * d1 - pi * d2; }

/// Inner DCM loop: the diode duty that extinguishes the diode current at its
/// falling instant.
ScalarSolution solve_diode_duty(const ConverterSpec& spec, const CircuitDescription& desc,
                                int order, double omega, double d1, double seed,
                                const SolverSettings& settings) {
  const int s1 = spec.controlled_switch();
  const int s2 = spec.diode_switches().front();
  auto residual = [&](double d2) {
    std::vector<std::pair<double, double>> dp(desc.switches.size());
    dp[s1] = {d1, 0.0};
    dp[s2] = {d2, diode_phase(d1, d2)};
    auto ev = evaluate_point(desc, order, omega, dp, settings);
    const auto i = current_signal(spec, ev.model, ev.x);
    return value_at(i, ev.switching[s2].fall);
  };
  const double hi = 1 - d1;
  seed = std::clamp(seed, 1e-3 * hi, hi * (1 - 1e-3));
  return solve_scalar(residual, seed, 0.0, hi, settings, "diode duty (current at extinction)");
}

OperatingPoint pwm_point(const ConverterSpec& spec, const CircuitDescription& desc, int order,
                         const SolverSettings& settings) {
  const int s1 = spec.controlled_switch();
  const int s2 = spec.diode_switches().front();
  const double d1 = spec.duty();
  const double omega = 2 * pi * spec.frequency();
  std::vector<ConstraintResidual> constraints;
  double d2 = 1 - d1;
  if (spec.mode == ConductionMode::dcm) {
    // classical DCM boost ratio, M = (1 + sqrt(1 + 4 D^2 / K)) / 2 with
    // K = 2 L / (R T), used only as a seed
    double seed = 0.5 * (1 - d1);
    const auto& states = desc.states;
    double L = states.front().energy;
    double R = 0;
    for (const auto& t : desc.terms)
      if (t.equation != states.front().name && t.switches.empty() && t.operand == t.equation &&
          t.coefficient < 0)
        R = -1 / t.coefficient;
    if (R > 0) {
      const double K = 2 * L * spec.frequency() / R;
      const double M = 0.5 * (1 + std::sqrt(1 + 4 * d1 * d1 / K));
      if (M > 1) seed = d1 / (M - 1);
    }
    const auto sol = solve_diode_duty(spec, desc, order, omega, d1, seed, settings);
    d2 = sol.x;
    constraints.push_back({"diode_current_at_extinction", sol.residual, sol.iterations});
  }
  std::vector<std::pair<double, double>> dp(desc.switches.size());
  dp[s1] = {d1, 0.0};
  dp[s2] = {d2, diode_phase(d1, d2)};
  auto op = finish(spec, order, evaluate_point(desc, order, omega, dp, settings), constraints,
                   settings);
  op.metadata.emplace_back("seed", spec.mode == ConductionMode::dcm ? "dcm_ratio" : "none");
  return op;
}

OperatingPoint cot_point(const ConverterSpec& spec, const CircuitDescription& desc, int order,
                         const SolverSettings& settings) {
  const int s1 = spec.controlled_switch();
  const int s2 = spec.diode_switches().front();
  const double kv = spec.kv();
  const double ton = spec.on_time();
  const double td = spec.delay();
  const double vc = spec.control_bias();
  double vin = 0;
  for (const auto& u : desc.inputs) vin = std::max(vin, std::abs(u.value));
  const bool dcm = spec.mode == ConductionMode::dcm;

  double last_d2 = 0;
  int inner_iterations = 0;
  double inner_residual = 0;
  double d2_seed = 0.3;
  std::optional<Evaluated> last;
  auto build = [&](double d1) {
    const double omega = 2 * pi * d1 / ton;
    double d2 = 1 - d1;
    if (dcm) {
      const auto sol = solve_diode_duty(spec, desc, order, omega, d1, d2_seed * (1 - d1), settings);
      d2 = sol.x;
      d2_seed = d2 / (1 - d1);
      inner_iterations += sol.iterations;
      inner_residual = sol.residual;
    }
    last_d2 = d2;
    std::vector<std::pair<double, double>> dp(desc.switches.size());
    dp[s1] = {d1, 0.0};
    dp[s2] = {d2, diode_phase(d1, d2)};
    return evaluate_point(desc, order, omega, dp, settings);
  };
  auto comparator = [&](const Evaluated& ev) {
    const auto sensed = ev.model.signal(sense_name(spec), ev.x);
    const auto f = HarmonicVectord::constant(vc, ev.model.order(), ev.model.omega()) - kv * sensed;
    const double t0 = ev.switching[s1].rise - td;
    return std::pair{f, t0};
  };
  auto residual = [&](double d1) {
    auto ev = build(d1);
    auto [f, t0] = comparator(ev);
    last.emplace(std::move(ev));
    return value_at(f, t0);
  };
  double seed = vin > 0 ? vc / (kv * vin) : 0.5;
  seed = std::clamp(seed, 0.02, 0.98);
  const auto sol = solve_scalar(residual, seed, 0.0, 1.0, settings, "on-time duty (comparator)");

  auto ev = build(sol.x);
  auto [f, t0] = comparator(ev);
  if (ev.model.order() > 0 && !(slope_at(f, t0) > 0))
    fail(ErrorKind::mode, "comparator crossing at turn-on is not upward; check control bias");
  std::vector<ConstraintResidual> constraints{{"comparator_at_trigger", sol.residual, sol.iterations}};
  if (dcm) constraints.push_back({"diode_current_at_extinction", inner_residual, inner_iterations});
  auto op = finish(spec, order, std::move(ev), constraints, settings);
  op.comparator_instant = t0;
  op.metadata.emplace_back("seed", "vc/(kv*vi)");
  (void)last_d2;
  return op;
}

/// Centre-tapped rectifier: s4 is s3 delayed by half a period.
std::vector<std::pair<double, double>> llc_switches(const ConverterSpec& spec, std::size_t count,
                                                    double d3, double phi3) {
  std::vector<std::pair<double, double>> dp(count);
  const auto diodes = spec.diode_switches();
  dp[spec.controlled_switch()] = {0.5, 0.0};
  dp[diodes[0]] = {d3, phi3};
  dp[diodes[1]] = {d3, wrap(phi3 + pi)};
  return dp;
}

OperatingPoint pfm_point(const ConverterSpec& spec, const CircuitDescription& desc, int order,
                         const SolverSettings& settings) {
  const double omega = 2 * pi * spec.frequency();
  const auto diodes = spec.diode_switches();
  const std::size_t count = desc.switches.size();

  auto diode_current_at_fall = [&](int n, double d3, double phi3, double* slope) {
    auto ev = evaluate_point(desc, n, omega, llc_switches(spec, count, d3, phi3), settings);
    const auto c = current_signal(spec, ev.model, ev.x);
    const double t = ev.switching[diodes[0]].fall;
    if (slope) *slope = slope_at(c, t);
    return value_at(c, t);
  };

  std::vector<ConstraintResidual> constraints;
  double d3 = 0.5;
  double phi3 = 0;
  if (spec.mode == ConductionMode::below_resonance) {
    // rectifier turns on with the half bridge: t_r3 = t_r1 = -T/4
    auto phase_for = [](double d) { return pi / 2 - pi * d; };
    auto residual_at = [&](int n) {
      return [&, n](double d) { return diode_current_at_fall(n, d, phase_for(d), nullptr); };
    };
    // seed: first + to - sign change of the fundamental-order residual
    double seed = -1;
    for (int n : {1, order}) {
      auto r = residual_at(n);
      double prev_d = 0.02, prev = r(prev_d);
      for (int i = 1; i <= 48 && seed < 0; ++i) {
        const double dd = 0.02 + (0.5 - 0.02) * i / 48.0;
        const double cur = r(dd);
        if (prev > 0 && cur <= 0) seed = prev_d + (dd - prev_d) * prev / (prev - cur);
        prev = cur;
        prev_d = dd;
      }
      if (seed > 0) break;
    }
    if (seed < 0) fail(ErrorKind::mode, "no rectifier extinction below half a period; try above_resonance");
    const auto sol = solve_scalar(residual_at(order), seed, 0.0, 0.5 + 1e-12, settings,
                                  "rectifier duty (current at extinction)");
    d3 = std::min(sol.x, 0.5);
    phi3 = phase_for(d3);
    constraints.push_back({"rectifier_current_at_extinction", sol.residual, sol.iterations});
  } else {
    // the falling-instant crossing must be downward
    auto residual_at = [&](int n) {
      return [&, n](double phi) { return diode_current_at_fall(n, 0.5, phi, nullptr); };
    };
    std::optional<double> seed;
    for (int n : {1, order}) {
      auto r = residual_at(n);
      const int grid = 72;
      double prev_phi = -pi, prev = r(prev_phi);
      for (int i = 1; i <= grid && !seed; ++i) {
        const double p = -pi + 2 * pi * i / grid;
        const double cur = r(p);
        if ((prev > 0) != (cur > 0)) {
          const double guess = prev_phi + (p - prev_phi) * prev / (prev - cur);
          double slope = 0;
          diode_current_at_fall(n, 0.5, guess, &slope);
          if (slope < 0) seed = guess;
        }
        prev = cur;
        prev_phi = p;
      }
      if (seed) break;
    }
    if (!seed) fail(ErrorKind::mode, "no downward rectifier commutation found; try below_resonance");
    const auto sol = solve_scalar(residual_at(order), *seed, *seed - pi / 2, *seed + pi / 2,
                                  settings, "rectifier phase (current at commutation)",
                                  ErrorKind::iteration_failure);
    phi3 = wrap(sol.x);
    double slope = 0;
    diode_current_at_fall(order, 0.5, phi3, &slope);
    if (!(slope < 0)) fail(ErrorKind::mode, "rectifier commutation converged to an upward crossing");
    constraints.push_back({"rectifier_current_at_commutation", sol.residual, sol.iterations});
  }
  auto op = finish(spec, order,
                   evaluate_point(desc, order, omega, llc_switches(spec, count, d3, phi3), settings),
                   constraints, settings);
  op.metadata.emplace_back("seed", "fundamental_scan");
  return op;
}

}  // namespace

double OperatingPoint::frequency() const { return omega / (2 * pi); }
double OperatingPoint::period() const { return 2 * pi / omega; }
cvec OperatingPoint::stacked() const { return stack(states); }
LiftedModel OperatingPoint::model() const { return LiftedModel(description, order, omega); }
HarmonicVectord OperatingPoint::signal(const std::string& name) const {
  return model().signal(name, stacked());
}

cvec solve_equilibrium(const LiftedModel& model, const std::vector<HarmonicVectord>& switches,
                       const std::vector<HarmonicVectord>& inputs, const SolverSettings& settings) {
  cmat a = model.state_matrix(switches);
  const cvec b = model.source_vector(inputs, switches);
  // equilibrate rows then columns before estimating the condition number
  Eigen::VectorXd rs(a.rows()), cs(a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).cwiseAbs().maxCoeff();
    rs(i) = m > 0 ? 1 / m : 1;
  }
  cmat scaled = rs.asDiagonal() * a;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double m = scaled.col(j).cwiseAbs().maxCoeff();
    cs(j) = m > 0 ? 1 / m : 1;
  }
  scaled = scaled * cs.asDiagonal();
  Eigen::PartialPivLU<cmat> lu(scaled);
  const double rcond = lu.rcond();
  if (!(rcond * settings.max_condition > 1)) {
    std::ostringstream os;
    os << "equilibrium matrix is singular or ill conditioned (condition ~ " << 1 / rcond
       << "); the circuit may be lossless, add load or series resistance";
    fail(ErrorKind::lossless_degeneracy, os.str());
  }
  const cvec y = lu.solve(-(rs.asDiagonal() * b));
  cvec x = cs.asDiagonal() * y;
  const double res = (a * x + b).norm();
  const double scale = a.cwiseAbs().maxCoeff() * x.norm() + b.norm();
  if (res > settings.coefficient_tol * scale) {
    std::ostringstream os;
    os << "equilibrium residual " << res << " exceeds tolerance";
    fail(ErrorKind::singularity, os.str());
  }
  // enforce exact conjugate symmetry per state
  const int b_size = model.block();
  for (int i = 0; i < model.state_count(); ++i)
    x.segment(i * b_size, b_size) =
        HarmonicVectord::real_part_of(x.segment(i * b_size, b_size), model.omega(), 1e-8,
                                     x.cwiseAbs().maxCoeff()).coeffs();
  return x;
}

ScalarSolution solve_scalar(const std::function<double(double)>& residual, double seed, double lo,
                            double hi, const SolverSettings& settings, const std::string& what,
                            ErrorKind outside_kind) {
  ScalarSolution out{seed, 0, 0, {}};
  auto f = [&](double x) {
    const double r = residual(x);
    ++out.iterations;
    out.history.push_back(r);
    if (!std::isfinite(r)) fail(ErrorKind::iteration_failure, what + ": residual is not finite");
    return r;
  };
  const double width = hi - lo;
  const double margin = 1e-9 * width;
  auto inside = [&](double x) { return std::clamp(x, lo + margin, hi - margin); };

  double x0 = inside(seed);
  double r0 = f(x0);
  if (std::abs(r0) < settings.residual_tol) return {x0, r0, out.iterations, out.history};
  double x1 = inside(x0 + (x0 + 1e-3 * width < hi ? 1e-3 : -1e-3) * width);
  double r1 = f(x1);
  int boundary_hits = 0;
  while (out.iterations < settings.max_iterations) {
    if (std::abs(r1) < settings.residual_tol) return {x1, r1, out.iterations, out.history};
    if (r1 == r0) break;
    double step = -r1 * (x1 - x0) / (r1 - r0);
    double x2 = x1 + step;
    if (x2 <= lo + margin || x2 >= hi - margin) {
      ++boundary_hits;
      if (boundary_hits >= 6) {
        std::ostringstream os;
        os << what << ": the root lies outside (" << lo << ", " << hi << ")";
        fail(outside_kind, os.str());
      }
      x2 = x1 + 0.5 * ((x2 <= lo + margin ? lo + margin : hi - margin) - x1);
    } else {
      boundary_hits = 0;
    }
    double r2 = f(x2);
    for (int k = 0; k < 8 && std::abs(r2) > std::abs(r1) && out.iterations < settings.max_iterations;
         ++k) {
      x2 = x1 + settings.damping * (x2 - x1);
      r2 = f(x2);
    }
    x0 = x1;
    r0 = r1;
    x1 = x2;
    r1 = r2;
    if (std::abs(x1 - x0) < 1e-15 * std::max(1.0, std::abs(x1))) break;
  }
  if (std::abs(r1) < settings.residual_tol) return {x1, r1, out.iterations, out.history};

  // bracketing scan, then Illinois regula falsi
  const int grid = 64;
  double best_a = 0, best_b = 0, ra = 0, rb = 0;
  bool found = false;
  double prev_x = lo + margin, prev_r = f(prev_x);
  double best_distance = 1e300;
  for (int i = 1; i <= grid; ++i) {
    const double x = lo + margin + (width - 2 * margin) * i / grid;
    const double r = f(x);
    if ((prev_r > 0) != (r > 0)) {
      const double dist = std::abs(0.5 * (prev_x + x) - seed);
      if (dist < best_distance) {
        best_distance = dist;
        best_a = prev_x;
        best_b = x;
        ra = prev_r;
        rb = r;
        found = true;
      }
    }
    prev_x = x;
    prev_r = r;
  }
  if (!found) {
    std::ostringstream os;
    os << what << ": no sign change inside (" << lo << ", " << hi << ") after " << out.iterations
       << " evaluations";
    fail(outside_kind, os.str());
  }
  int side = 0;
  for (int k = 0; k < settings.max_iterations; ++k) {
    const double x = (best_a * rb - best_b * ra) / (rb - ra);
    const double r = f(x);
    if (std::abs(r) < settings.residual_tol) return {x, r, out.iterations, out.history};
    if ((r > 0) == (rb > 0)) {
      best_b = x;
      rb = r;
      if (side == -1) ra /= 2;
      side = -1;
    } else {
      best_a = x;
      ra = r;
      if (side == 1) rb /= 2;
      side = 1;
    }
    if (std::abs(best_b - best_a) < 1e-15 * width) break;
  }
  std::ostringstream os;
  os << what << ": no convergence after " << out.iterations << " evaluations; residual history:";
  const std::size_t start = out.history.size() > 8 ? out.history.size() - 8 : 0;
  for (std::size_t i = start; i < out.history.size(); ++i) os << " " << out.history[i];
  fail(ErrorKind::iteration_failure, os.str());
}

OperatingPoint find_operating_point(const ConverterSpec& spec, int order,
                                    const SolverSettings& settings) {
  if (order < 0) fail(ErrorKind::domain, "truncation order must be >= 0");
  validate(spec);
  require_driven(spec);
  if (spec.mode == ConductionMode::dcm && order == 0)
    fail(ErrorKind::domain,
         "dcm operating points need order >= 1: the extinction constraint is a waveform value");
  const auto desc = spec.description();
  switch (spec.modulation.kind) {
    case ModulationKind::pwm: return pwm_point(spec, desc, order, settings);
    case ModulationKind::cot: return cot_point(spec, desc, order, settings);
    case ModulationKind::pfm: return pfm_point(spec, desc, order, settings);
  }
  fail(ErrorKind::validation, "unknown modulation");
}

Waveforms waveforms(const OperatingPoint& op, const std::vector<double>& t_grid) {
  Waveforms w;
  w.time = t_grid;
  std::vector<HarmonicVectord> signals;
  for (std::size_t i = 0; i < op.description.states.size(); ++i) {
    w.names.push_back(op.description.states[i].name);
    signals.push_back(op.states[i]);
  }
  for (const auto& o : op.description.outputs) {
    if (op.description.state_index(o.name)) continue;
    w.names.push_back(o.name);
    signals.push_back(op.signal(o.name));
  }
  for (const auto& s : signals) {
    std::vector<double> col;
    col.reserve(t_grid.size());
    for (double t : t_grid) col.push_back(reconstruct(s, t));
    w.values.push_back(std::move(col));
  }
  return w;
}

std::vector<double> period_grid(const OperatingPoint& op, int points) {
  if (points < 1) fail(ErrorKind::domain, "period grid needs at least one point");
  std::vector<double> t(points);
  const double T = op.period();
  for (int k = 0; k < points; ++k) t[k] = -T / 2 + T * k / points;
  return t;
}

}  // namespace gam
