#include "gam/small_signal.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace gam {

namespace {

constexpr double pi = std::numbers::pi;

struct ChainBuilder {
  const ConverterSpec& spec;
  const OperatingPoint& op;
  LiftedModel model;
  SensitivityChain chain;

  ChainBuilder(const ConverterSpec& s, const OperatingPoint& o)
      : spec(s), op(o), model(o.model()) {}

  int add_timing(Timing t) {
    if (t.gain_x.size() == 0) t.gain_x = crow::Zero(model.dimension());
    if (t.gain_u.size() == 0) t.gain_u = crow::Zero(model.block());
    if (t.delay < 0) fail(ErrorKind::validation, "timing '" + t.name + "' has a negative delay");
    chain.timings.push_back(std::move(t));
    return static_cast<int>(chain.timings.size()) - 1;
  }

  void add_channel(int sw, Edge edge, int timing) {
    const auto& st = op.switching[sw];
    const auto ev = edge_sensitivity(st.rise, st.fall, op.omega, op.order);
    chain.channels.push_back(
        {sw, edge, edge == Edge::rise ? ev.d_rise.coeffs() : ev.d_fall.coeffs(), timing});
  }

  double instant(int sw, Edge edge) const {
    return edge == Edge::rise ? op.switching[sw].rise : op.switching[sw].fall;
  }

  std::string edge_name(int sw, Edge edge) const {
    return op.description.switches[sw] + "." + std::string(to_string(edge));
  }

  cmat diode_current_matrix() const {
    const int b = model.block();
    cmat c = cmat::Zero(b, model.dimension());
    for (const auto& [state, weight] : spec.diode_current())
      c.block(0, state * b, b, b).diagonal().array() += weight;
    return c;
  }

  /// Timing of a diode edge at a zero of the diode current.
  int diode_zero_timing(int sw, Edge edge, double value_tolerance = 1e-3) {
    const cmat c = diode_current_matrix();
    const auto current = HarmonicVectord::real_part_of(c * op.stacked(), op.omega, 1e-8,
                                                             op.stacked().cwiseAbs().maxCoeff());
    ZeroSensitivityOptions<double> options;
    options.value_tolerance = value_tolerance;
    const auto zs = zero_sensitivity(current, instant(sw, edge), op.order, options);
    Timing t;
    t.name = edge_name(sw, edge);
    t.gain_x = zs.row * c;
    return add_timing(std::move(t));
  }

  void pwm() {
    const int s1 = spec.controlled_switch();
    const int s2 = spec.diode_switches().front();
    const auto carrier = spec.modulation.carrier;
    const auto slopes = carrier_slopes(carrier, op.period());
    Timing r{edge_name(s1, Edge::rise), 0, {},
             pwm_edge_gain(slopes.rise, instant(s1, Edge::rise), op.omega, op.order), "d"};
    Timing f{edge_name(s1, Edge::fall), 0, {},
             pwm_edge_gain(slopes.fall, instant(s1, Edge::fall), op.omega, op.order), "d"};
    const int tr = add_timing(std::move(r));
    const int tf = add_timing(std::move(f));
    add_channel(s1, Edge::rise, tr);
    add_channel(s1, Edge::fall, tf);
    freewheel(s2, tr, tf);
  }

  void freewheel(int s2, int tr, int tf) {
    add_channel(s2, Edge::rise, tf);
    if (spec.mode == ConductionMode::dcm)
      add_channel(s2, Edge::fall, diode_zero_timing(s2, Edge::fall));
    else
      add_channel(s2, Edge::fall, tr);
  }

  void cot() {
    const int s1 = spec.controlled_switch();
    const int s2 = spec.diode_switches().front();
    const double kv = spec.kv();
    const auto& sense = spec.modulation.sense;
    const auto sensed = model.signal(sense, op.stacked());
    const auto f = HarmonicVectord::constant(spec.control_bias(), op.order, op.omega) - kv * sensed;
    if (!op.comparator_instant) fail(ErrorKind::validation, "operating point lacks a comparator instant");
    const auto zs = zero_sensitivity(f, *op.comparator_instant, op.order);
    const crow gx = function_zero_sensitivity(-kv, zs).row * model.output_matrix(sense);
    const crow gu = function_zero_sensitivity(1.0, zs).row;
    const double td = spec.delay();
    const int tr = add_timing({edge_name(s1, Edge::rise), td, gx, gu, "vc"});
    const int tf = add_timing({edge_name(s1, Edge::fall), td + spec.on_time(), gx, gu, "vc"});
    add_channel(s1, Edge::rise, tr);
    add_channel(s1, Edge::fall, tf);
    freewheel(s2, tr, tf);
  }

  void pfm() {
    const int s1 = spec.controlled_switch();
    const int tr = add_timing({edge_name(s1, Edge::rise), 0, {},
                               psm_phase_sensitivity(instant(s1, Edge::rise), op.omega, op.order),
                               "alpha"});
    const int tf = add_timing({edge_name(s1, Edge::fall), 0, {},
                               psm_phase_sensitivity(instant(s1, Edge::fall), op.omega, op.order),
                               "alpha"});
    add_channel(s1, Edge::rise, tr);
    add_channel(s1, Edge::fall, tf);
    // below resonance the rectifier rise is imposed at the bridge edge rather
    // than solved for, so the reconstructed current there is only near zero
    const double rise_tolerance = spec.mode == ConductionMode::below_resonance
                                      ? std::numeric_limits<double>::infinity()
                                      : 1e-3;
    for (int d : spec.diode_switches()) {
      add_channel(d, Edge::rise, diode_zero_timing(d, Edge::rise, rise_tolerance));
      add_channel(d, Edge::fall, diode_zero_timing(d, Edge::fall));
    }
    chain.integrated.push_back({"ws", "alpha"});
  }
};

}  // namespace

std::string_view to_string(Edge edge) { return edge == Edge::rise ? "rise" : "fall"; }

SensitivityChain build_chain(const ConverterSpec& spec, const OperatingPoint& op) {
  ChainBuilder b(spec, op);
  switch (spec.modulation.kind) {
    case ModulationKind::pwm: b.pwm(); break;
    case ModulationKind::cot: b.cot(); break;
    case ModulationKind::pfm: b.pfm(); break;
  }
  return std::move(b.chain);
}

ClosedLoopEvaluator::ClosedLoopEvaluator(LiftedModel model, SmallSignalBlocks blocks,
                                         SensitivityChain chain)
    : model_(std::move(model)), blocks_(std::move(blocks)), chain_(std::move(chain)) {
  const int dim = model_.dimension();
  const int b = model_.block();
  beta_.assign(chain_.timings.size(), cvec::Zero(dim));
  for (const auto& t : chain_.timings) {
    if (t.gain_x.size() != dim || t.gain_u.size() != b)
      fail(ErrorKind::validation, "timing '" + t.name + "' has gain rows of the wrong size");
    if (!(t.delay >= 0)) fail(ErrorKind::validation, "timing '" + t.name + "' has a negative delay");
  }
  for (const auto& c : chain_.channels) {
    if (c.timing < 0 || c.timing >= static_cast<int>(chain_.timings.size()))
      fail(ErrorKind::validation, "edge channel refers to an unknown timing");
    if (c.switch_index < 0 || c.switch_index >= static_cast<int>(blocks_.B_s.size()))
      fail(ErrorKind::validation, "edge channel refers to an unknown switch");
    if (c.edge_vector.size() != b) fail(ErrorKind::validation, "edge vector has the wrong size");
    beta_[c.timing] += blocks_.B_s[c.switch_index] * c.edge_vector;
  }
  sE_minus_A_ = -blocks_.A;
}

std::vector<std::string> ClosedLoopEvaluator::controls() const {
  std::vector<std::string> out;
  for (const auto& u : model_.description().inputs) out.push_back(u.name);
  for (const auto& t : chain_.timings)
    if (!t.control.empty() && std::find(out.begin(), out.end(), t.control) == out.end())
      out.push_back(t.control);
  for (const auto& i : chain_.integrated) out.push_back(i.name);
  return out;
}

cmat ClosedLoopEvaluator::system_matrix(std::complex<double> s) const {
  cmat m = sE_minus_A_;
  m.diagonal() += s * blocks_.energy.cast<std::complex<double>>();
  for (std::size_t t = 0; t < chain_.timings.size(); ++t) {
    const auto& timing = chain_.timings[t];
    if (timing.gain_x.isZero(0)) continue;
    m.noalias() -= (std::exp(-s * timing.delay) * beta_[t]) * timing.gain_x;
  }
  return m;
}

cvec ClosedLoopEvaluator::excitation(const std::string& control, std::complex<double> s) const {
  const int n = blocks_.order;
  cvec rhs = cvec::Zero(model_.dimension());
  bool known = false;
  if (auto ui = model_.description().input_index(control)) {
    rhs += blocks_.B_u[*ui].col(n);
    known = true;
  }
  for (std::size_t t = 0; t < chain_.timings.size(); ++t) {
    const auto& timing = chain_.timings[t];
    if (timing.control != control) continue;
    known = true;
    rhs += std::exp(-s * timing.delay) * timing.gain_u(n) * beta_[t];
  }
  if (!known) fail(ErrorKind::validation, "unknown control '" + control + "'");
  return rhs;
}

cvec ClosedLoopEvaluator::solve(const std::string& control, std::complex<double> s) const {
  for (const auto& i : chain_.integrated) {
    if (i.name != control) continue;
    if (s == std::complex<double>(0))
      fail(ErrorKind::pole, "'" + control + "' response has a pole at s = 0");
    return solve(i.of, s) / s;
  }
  check_frequency(s, omega());
  const cmat m = system_matrix(s);
  Eigen::PartialPivLU<cmat> lu(m);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    std::ostringstream os;
    os << "closed-loop system is singular at s = " << s << " (condition ~ " << 1 / rcond << ")";
    fail(ErrorKind::singularity, os.str());
  }
  return lu.solve(excitation(control, s));
}

std::complex<double> ClosedLoopEvaluator::response(const std::string& control,
                                                   const std::string& output, int m,
                                                   std::complex<double> s) const {
  const int n = blocks_.order;
  if (m < -n || m > n) {
    std::ostringstream os;
    os << "sideband " << m << " exceeds the truncation order " << n;
    fail(ErrorKind::domain, os.str());
  }
  const cmat c = model_.output_matrix(output);
  return c.row(m + n) * solve(control, s);
}

ClosedLoopEvaluator assemble(const OperatingPoint& op, SensitivityChain chain) {
  auto model = op.model();
  auto blocks = model.linearize(op.stacked(), model.input_vectors(), op.switches);
  return ClosedLoopEvaluator(std::move(model), std::move(blocks), std::move(chain));
}

ClosedLoopEvaluator assemble(const ConverterSpec& spec, const OperatingPoint& op) {
  return assemble(op, build_chain(spec, op));
}

void check_frequency(std::complex<double> s, double omega) {
  if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
    fail(ErrorKind::domain, "frequency is not finite");
  const double k = std::round(s.imag() / omega);
  if (k == 0) return;
  const std::complex<double> pole(0, k * omega);
  if (std::abs(s - pole) < 1e-6 * std::abs(k * omega)) {
    std::ostringstream os;
    os << "s = " << s << " lies within 1e-6 relative of j" << k << "*omega; harmonic "
       << "coefficients are undefined there";
    fail(ErrorKind::excluded_frequency, os.str());
  }
}

FrequencyResponse frequency_response(const ClosedLoopEvaluator& ev, const std::string& input,
                                     const std::string& output, int m,
                                     const std::vector<std::complex<double>>& s_list,
                                     unsigned threads) {
  FrequencyResponse out;
  out.input = input;
  out.output = output;
  out.sideband = m;
  out.order = ev.order();
  out.points.resize(s_list.size());
  // validate names and sideband once before spawning workers
  (void)ev.model().output_matrix(output);
  if (m < -ev.order() || m > ev.order()) {
    std::ostringstream os;
    os << "sideband " << m << " exceeds the truncation order " << ev.order();
    fail(ErrorKind::domain, os.str());
  }
  const auto controls = ev.controls();
  if (std::find(controls.begin(), controls.end(), input) == controls.end())
    fail(ErrorKind::validation, "unknown control '" + input + "'");
  for (auto s : s_list) check_frequency(s, ev.omega());

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max<std::size_t>(1, s_list.size()));
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < s_list.size(); i += step)
      out.points[i] = {s_list[i], ev.response(input, output, m, s_list[i])};
  };
  std::vector<std::future<void>> jobs;
  for (unsigned t = 1; t < threads; ++t) jobs.push_back(std::async(std::launch::async, work, t, threads));
  work(0, threads);
  for (auto& j : jobs) j.get();
  return out;
}

int baseline_order(const ConverterSpec& spec) {
  const bool averaged = spec.modulation.kind == ModulationKind::pwm && spec.mode == ConductionMode::ccm;
  return averaged ? 0 : 1;
}

FrequencyResponse baseline_response(const ConverterSpec& spec, int order, const std::string& input,
                                    const std::string& output, int m,
                                    const std::vector<std::complex<double>>& s_list,
                                    const SolverSettings& settings) {
  const auto op = find_operating_point(spec, order, settings);
  auto out = frequency_response(assemble(spec, op), input, output, m, s_list);
  out.baseline = true;
  return out;
}

std::vector<double> frequency_grid(double fmin, double fmax, int points, double fs) {
  if (!(fmin > 0) || !(fmax >= fmin) || points < 1)
    fail(ErrorKind::domain, "frequency grid needs 0 < fmin <= fmax and at least one point");
  std::vector<double> f(points);
  for (int i = 0; i < points; ++i) {
    const double x = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    f[i] = fmin * std::pow(fmax / fmin, x);
    if (fs > 0) {
      const double k = std::round(f[i] / fs);
      if (k != 0 && std::abs(f[i] - k * fs) < 1e-5 * k * fs) f[i] = k * fs * (1 - 1e-4);
    }
  }
  return f;
}

std::vector<std::complex<double>> imaginary_axis(const std::vector<double>& frequencies) {
  std::vector<std::complex<double>> s;
  s.reserve(frequencies.size());
  for (double f : frequencies) s.emplace_back(0, 2 * pi * f);
  return s;
}

}  // namespace gam
