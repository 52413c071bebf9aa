#include "gam/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gam/fourier.hpp"

namespace gam {

namespace {

constexpr double pi = std::numbers::pi;

double frac(double x) { return x - std::floor(x); }

}  // namespace

Simulator::Simulator(const ConverterSpec& spec, SimulatorOptions options)
    : spec_(spec), options_(options) {
  validate(spec_);
  desc_ = spec_.description();
  terms_ = resolve_terms(desc_);
  nx_ = static_cast<int>(desc_.states.size());
  s1_ = spec_.controlled_switch();
  diodes_ = spec_.diode_switches();
  freewheel_ = spec_.rectifier.kind == RectifierKind::freewheel;
  current_row_ = Vec::Zero(nx_);
  for (const auto& [state, weight] : spec_.diode_current()) current_row_(state) += weight;
  energy_.resize(nx_);
  for (int i = 0; i < nx_; ++i) energy_(i) = desc_.states[i].energy;

  switch (spec_.modulation.kind) {
    case ModulationKind::pwm:
      duty_ = spec_.duty();
      period_ = 1 / spec_.frequency();
      break;
    case ModulationKind::pfm:
      period_ = 1 / spec_.frequency();
      break;
    case ModulationKind::cot: {
      kv_ = spec_.kv();
      ton_ = spec_.on_time();
      td_ = spec_.delay();
      vc_ = spec_.control_bias();
      sense_row_ = Vec::Zero(nx_);
      const int si = spec_.sense_index();
      if (si >= 0) {
        for (const auto& [state, w] : desc_.outputs[si].weights) sense_row_(*desc_.state_index(state)) += w;
      } else {
        sense_row_(-1 - si) = 1;
      }
      double vin = 0;
      for (const auto& u : desc_.inputs) vin = std::max(vin, std::abs(u.value));
      const double d = vin > 0 ? std::clamp(vc_ / (kv_ * vin), 0.05, 0.95) : 0.5;
      period_ = ton_ / d;
      break;
    }
  }
  omega_ = 2 * pi / period_;
  reset(0, Vec::Zero(nx_));
}

void Simulator::reset(double t, const Vec& x) {
  if (x.size() != nx_) fail(ErrorKind::domain, "initial state has the wrong dimension");
  t_ = t;
  z_ = Vec::Zero(nx_ + 3);
  z_.head(nx_) = x;
  z_(nx_) = 1;
  z_(nx_ + 1) = std::sin(sine_omega_ * (t - sine_.start));
  z_(nx_ + 2) = std::cos(sine_omega_ * (t - sine_.start));
  config_.assign(desc_.switches.size(), 0);
  cot_ = CotPhase::idle;
  apply(t_);
}

void Simulator::modulate(const SinusoidalControl& control) {
  const auto names = spec_.control_names();
  if (std::find(names.begin(), names.end(), control.control) == names.end())
    fail(ErrorKind::validation, "unknown control '" + control.control + "'");
  if (!(control.frequency > 0) || !std::isfinite(control.depth))
    fail(ErrorKind::domain, "modulation needs a positive frequency and a finite depth");
  sine_ = control;
  sine_omega_ = 2 * pi * control.frequency;
  modulated_input_ = -1;
  if (auto ui = desc_.input_index(control.control)) modulated_input_ = *ui;
  z_(nx_ + 1) = std::sin(sine_omega_ * (t_ - sine_.start));
  z_(nx_ + 2) = std::cos(sine_omega_ * (t_ - sine_.start));
  cache_.clear();
}

const Eigen::MatrixXd& Simulator::matrix(const std::vector<int>& config) {
  auto it = cache_.find(config);
  if (it != cache_.end()) return it->second;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nx_ + 3, nx_ + 3);
  for (const auto& term : terms_) {
    bool active = true;
    for (int k : term.switches) active = active && config[k] != 0;
    if (!active) continue;
    const double c = term.coefficient / energy_(term.equation);
    switch (term.kind) {
      case OperandKind::unit: m(term.equation, nx_) += c; break;
      case OperandKind::state: m(term.equation, term.operand) += c; break;
      case OperandKind::input:
        m(term.equation, nx_) += c * desc_.inputs[term.operand].value;
        if (term.operand == modulated_input_) m(term.equation, nx_ + 1) += c * sine_.depth;
        break;
    }
  }
  m(nx_ + 1, nx_ + 2) = sine_omega_;
  m(nx_ + 2, nx_ + 1) = -sine_omega_;
  return cache_.emplace(config, std::move(m)).first->second;
}

Simulator::Vec Simulator::propagate(const Vec& z, double dt, const Eigen::MatrixXd& m) const {
  if (dt <= 0) return z;
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff() * dt;
  const double substeps = std::ceil(norm / 0.25);
  if (substeps > 1e6) fail(ErrorKind::stiffness, "segment too stiff for the step size");
  const int count = std::max(1, static_cast<int>(substeps));
  const double h = dt / count;
  Vec out = z;
  for (int s = 0; s < count; ++s) {
    Vec term = out;
    Vec sum = out;
    for (int k = 1; k <= 40; ++k) {
      term = m * term * (h / k);
      sum += term;
      if (term.lpNorm<Eigen::Infinity>() <= 1e-18 * sum.lpNorm<Eigen::Infinity>()) break;
    }
    out = sum;
  }
  return out;
}

double Simulator::modulated(double bias, const std::string& name, const Vec& z) const {
  if (sine_.control != name) return bias;
  return bias + sine_.depth * z(nx_ + 1);
}

bool Simulator::modulator_on(double t, const Vec& z) const {
  const double local = std::fmod(t, period_);
  if (spec_.modulation.kind == ModulationKind::pwm) {
    const double d = modulated(duty_, "d", z);
    double c = 0;
    switch (spec_.modulation.carrier) {
      case Carrier::triangle: c = std::abs(wrap(omega_ * local)) / pi; break;
      case Carrier::sawtooth: c = frac((local + duty_ * period_ / 2) / period_); break;
      case Carrier::reverse_sawtooth: c = 1 - frac((local - duty_ * period_ / 2) / period_); break;
    }
    return d - c > 0;
  }
  double alpha = 0;
  if (sine_.control == "alpha") alpha = sine_.depth * z(nx_ + 1);
  if (sine_.control == "ws") alpha = sine_.depth / sine_omega_ * (1 - z(nx_ + 2));
  return std::cos(omega_ * local + alpha) > 0;
}

double Simulator::comparator(double, const Vec& z) const {
  return modulated(vc_, "vc", z) - kv_ * sense_row_.dot(z.head(nx_));
}

double Simulator::current_of(const Vec& z) const { return current_row_.dot(z.head(nx_)); }

std::vector<int> Simulator::settled_diodes(const Vec& z, const std::vector<int>& config) {
  std::vector<int> out = config;
  const double c = current_of(z);
  max_current_ = std::max(max_current_, std::abs(c));
  const double tol = 1e-10 * (1 + max_current_);
  // derivative of the diode's own current with only that diode conducting
  auto on_slope = [&](int k, double sign) {
    std::vector<int> trial = out;
    for (int d : diodes_) trial[d] = 0;
    trial[k] = 1;
    const Vec dz = matrix(trial) * z;
    return sign * current_row_.dot(dz.head(nx_));
  };
  auto decide = [&](int k, double sign) {
    const double ck = sign * c;
    if (config[k]) {
      const bool off = ck <= -tol || (ck <= 0 && on_slope(k, sign) < 0);
      return off ? 0 : 1;
    }
    return (ck > tol || (std::abs(ck) <= tol && on_slope(k, sign) > 0)) ? 1 : 0;
  };
  if (freewheel_) {
    const int k = diodes_.front();
    out[k] = config[s1_] ? 0 : decide(k, 1.0);
  } else {
    const int a = diodes_[0], b = diodes_[1];
    int on_a = decide(a, 1.0);
    int on_b = decide(b, -1.0);
    if (on_a && on_b) {
      if (c > 0) on_b = 0;
      else on_a = 0;
    }
    out[a] = on_a;
    out[b] = on_b;
  }
  return out;
}

bool Simulator::pending(double t, const Vec& z) {
  if (spec_.modulation.kind == ModulationKind::cot) {
    if (cot_ == CotPhase::idle && comparator(t, z) >= 0) return true;
  } else if (modulator_on(t, z) != (config_[s1_] != 0)) {
    return true;
  }
  return settled_diodes(z, config_) != config_;
}

void Simulator::log(const std::string& kind, double t) {
  if (++event_count_ > options_.max_events) {
    std::ostringstream os;
    os << "more than " << options_.max_events << " events by t = " << t;
    fail(ErrorKind::runaway, os.str());
  }
  events_.push_back({kind, t});
}

void Simulator::set_switch(int k, int on, double t) {
  config_[k] = on;
  log(desc_.switches[k] + (on ? ".rise" : ".fall"), t);
  if (k == s1_ && on) rose_ = true;
}

void Simulator::apply(double t) {
  for (int iter = 0; iter < 16; ++iter) {
    bool changed = false;
    if (spec_.modulation.kind == ModulationKind::cot) {
      if (cot_ == CotPhase::idle && comparator(t, z_) >= 0) {
        log("trigger", t);
        cot_ = CotPhase::pending;
        next_rise_ = t + td_;
        changed = true;
      }
      if (cot_ == CotPhase::pending && t >= next_rise_) {
        set_switch(s1_, 1, t);
        cot_ = CotPhase::on;
        next_fall_ = next_rise_ + ton_;
        changed = true;
      }
      if (cot_ == CotPhase::on && t >= next_fall_) {
        set_switch(s1_, 0, t);
        cot_ = CotPhase::idle;
        changed = true;
      }
    } else {
      const int on = modulator_on(t, z_) ? 1 : 0;
      if (on != config_[s1_]) {
        set_switch(s1_, on, t);
        changed = true;
      }
    }
    const auto d = settled_diodes(z_, config_);
    bool extinguished = false;
    for (int k : diodes_) {
      if (d[k] != config_[k]) {
        set_switch(k, d[k], t);
        extinguished = extinguished || !d[k];
        changed = true;
      }
    }
    // with every diode blocking and no other path the diode current is zero;
    // drop the bisection residual so it stays exactly zero
    const bool blocked = std::none_of(diodes_.begin(), diodes_.end(), [&](int k) { return config_[k]; });
    if (extinguished && blocked && !(freewheel_ && config_[s1_])) {
      const Vec x = z_.head(nx_);
      z_.head(nx_) -= current_row_ * (current_row_.dot(x) / current_row_.squaredNorm());
    }
    if (!changed) return;
  }
  std::ostringstream os;
  os << "switch states keep changing at t = " << t;
  fail(ErrorKind::runaway, os.str());
}

bool Simulator::advance(double t_end, bool stop_at_rise) {
  const double h = period_ / options_.samples_per_period;
  const double resolution = options_.event_tolerance * period_;
  while (t_ < t_end) {
    double t1 = std::min(t_end, t_ + h);
    if (cot_ == CotPhase::pending) t1 = std::min(t1, next_rise_);
    if (cot_ == CotPhase::on) t1 = std::min(t1, next_fall_);
    const Eigen::MatrixXd m = matrix(config_);
    Vec z1 = propagate(z_, t1 - t_, m);
    ++steps_;
    if (pending(t1, z1)) {
      double lo = t_, hi = t1;
      while (hi - lo > resolution) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        ++bisections_;
        if (pending(mid, propagate(z_, mid - t_, m))) hi = mid;
        else lo = mid;
      }
      z1 = propagate(z_, hi - t_, m);
      t1 = hi;
    }
    z_ = z1;
    t_ = t1;
    rose_ = false;
    apply(t_);
    if (stop_at_rise && rose_) return true;
  }
  return false;
}

double Simulator::signal(const std::string& name) const {
  if (auto oi = desc_.output_index(name)) {
    double v = 0;
    for (const auto& [state, w] : desc_.outputs[*oi].weights) v += w * z_(*desc_.state_index(state));
    return v;
  }
  if (auto si = desc_.state_index(name)) return z_(*si);
  fail(ErrorKind::validation, "unknown signal '" + name + "'");
}

double Simulator::diode_current() const { return current_of(z_); }

double Simulator::control_value(const std::string& name) const {
  if (name == "d") return modulated(duty_, "d", z_);
  if (name == "vc") return modulated(vc_, "vc", z_);
  if (name == "alpha") return modulated(0, "alpha", z_);
  if (name == "ws") return modulated(omega_, "ws", z_);
  if (auto ui = desc_.input_index(name)) return modulated(desc_.inputs[*ui].value, name, z_);
  fail(ErrorKind::validation, "unknown control '" + name + "'");
}

namespace {

void record(SimulationTrace& trace, const Simulator& sim) {
  trace.time.push_back(sim.time());
  const auto x = sim.state();
  trace.states.emplace_back(x.data(), x.data() + x.size());
  trace.switch_states.push_back(sim.switch_state());
}

SimulationTrace empty_trace(const Simulator& sim) {
  SimulationTrace trace;
  for (const auto& s : sim.description().states) trace.state_names.push_back(s.name);
  trace.switch_names = sim.description().switches;
  return trace;
}

}  // namespace

SimulationTrace simulate(const ConverterSpec& spec, double t_end,
                         const std::optional<SinusoidalControl>& control, SimulatorOptions options) {
  if (!(t_end > 0)) fail(ErrorKind::domain, "simulation end time must be positive");
  Simulator sim(spec, options);
  if (control) sim.modulate(*control);
  auto trace = empty_trace(sim);
  const double dt = sim.nominal_period() / options.samples_per_period;
  record(trace, sim);
  for (std::int64_t k = 1;; ++k) {
    const double t = std::min(t_end, k * dt);
    sim.advance(t);
    record(trace, sim);
    if (t >= t_end) break;
  }
  trace.events = sim.events();
  trace.steps = sim.steps();
  trace.bisections = sim.bisections();
  return trace;
}

SettledCycle steady_state_by_simulation(const ConverterSpec& spec, std::optional<int> max_periods,
                                        std::optional<double> detect_tol) {
  SimulatorOptions options;
  options.samples_per_period = spec.oracle.samples_per_period;
  Simulator sim(spec, options);
  const int limit = max_periods.value_or(spec.oracle.max_periods);
  const double tol = detect_tol.value_or(spec.oracle.detect_tol);
  const double T = sim.nominal_period();
  const auto& s1 = sim.description().switches[spec.controlled_switch()];

  Eigen::VectorXd previous;
  double previous_time = 0;
  double mismatch = 1;
  for (int k = 0; k <= limit; ++k) {
    // start-up overshoot can pause a COT modulator for many load time constants
    if (!sim.advance(sim.time() + 5000 * T, true))
      fail(ErrorKind::non_periodic, "the controlled switch stopped switching");
    const auto x = sim.state();
    if (previous.size() > 0) {
      mismatch = (x - previous).norm() / std::max(x.norm(), 1e-300);
      if (mismatch < tol) {
        SettledCycle out{sim, sim.time() - previous_time, 0, k, mismatch, empty_trace(sim)};
        double fall = 0;
        for (const auto& e : sim.events())
          if (e.kind == s1 + ".fall" && e.time > previous_time) fall = e.time;
        out.duty = (fall - previous_time) / out.period;
        out.simulator.clear_events();
        Simulator probe = out.simulator;
        const double t0 = probe.time();
        const int samples = options.samples_per_period;
        for (int i = 0; i < samples; ++i) {
          probe.advance(t0 + i * out.period / samples);
          record(out.cycle, probe);
        }
        out.cycle.events = probe.events();
        out.cycle.steps = probe.steps();
        out.cycle.bisections = probe.bisections();
        return out;
      }
    }
    previous = x;
    previous_time = sim.time();
    sim.clear_events();
  }
  std::ostringstream os;
  os << "no periodic steady state after " << limit << " periods (last mismatch " << mismatch
     << ", tolerance " << tol << ")";
  fail(ErrorKind::non_periodic, os.str());
}

std::pair<double, int> commensurate_frequency(double target, double period, int min_periods) {
  if (!(target > 0) || !(period > 0) || min_periods < 1)
    fail(ErrorKind::domain, "commensurate frequency needs positive target, period and length");
  const int k_min = std::max(min_periods, static_cast<int>(std::ceil(1 / (target * period))));
  double best_error = 1e300;
  std::pair<double, int> best{0, 0};
  for (int k = k_min; k <= 4 * k_min; ++k) {
    const long long nearest = std::llround(target * k * period);
    for (long long p : {nearest, nearest - 1, nearest + 1}) {
      if (p < 1 || (2 * p) % k == 0) continue;  // multiple of fs / 2: sidebands share the bin
      const double f = static_cast<double>(p) / (k * period);
      const double error = std::abs(f - target);
      if (error < best_error * (1 - 1e-12)) {
        best_error = error;
        best = {f, k};
      }
    }
    if (best_error == 0) break;
  }
  if (best.second == 0) fail(ErrorKind::domain, "no admissible modulation frequency near target");
  return best;
}

namespace {

std::optional<FrfMeasurement> measure_once(const SettledCycle& settled, const std::string& control,
                                           double depth, double f, int K, const std::string& output,
                                           int m, const FrfOptions& options) {
  const double T = settled.period;
  const double f_out = f + m / T;
  Simulator sim = settled.simulator;
  const double t_s = sim.time();
  sim.modulate({control, depth, f, t_s});
  (void)sim.signal(output);
  const int samples = static_cast<int>(settled.cycle.time.size());
  const double dt = T / samples;
  const long long per_record = static_cast<long long>(K) * samples;
  // phases are referred to the model frame, where s1 rises at -duty T / 2
  const double rise_model = -settled.duty * T / 2;
  std::complex<double> last(0);
  for (int r = 0; r < options.max_records; ++r) {
    std::complex<double> y(0), u(0);
    for (long long k = 0; k < per_record; ++k) {
      const double elapsed = (r * per_record + k) * dt;
      sim.advance(t_s + elapsed);
      const double t_model = elapsed + rise_model;
      y += sim.signal(output) * std::polar(1.0, -2 * pi * f_out * t_model);
      u += depth * std::sin(2 * pi * f * elapsed) * std::polar(1.0, -2 * pi * f * t_model);
    }
    sim.clear_events();
    const std::complex<double> h = y / u;
    if (r > 0 && std::abs(h - last) < options.agreement * std::abs(h))
      return FrfMeasurement{f, f_out, h, depth, r + 1, K};
    last = h;
  }
  return std::nullopt;
}

}  // namespace

FrfMeasurement measure_frf(const SettledCycle& settled, const std::string& control, double depth,
                           double frequency, const std::string& output, int m,
                           const FrfOptions& options) {
  if (!(depth > 0)) fail(ErrorKind::domain, "modulation depth must be positive");
  const auto [f, K] = commensurate_frequency(frequency, settled.period, options.min_record_periods);
  double d = depth;
  for (int attempt = 0; attempt <= options.depth_halvings; ++attempt, d /= 2)
    if (auto out = measure_once(settled, control, d, f, K, output, m, options)) return *out;
  std::ostringstream os;
  os << "frequency response at " << f << " Hz did not settle to " << options.agreement
     << " relative in " << options.max_records << " records of " << K << " periods down to depth "
     << 2 * d << "; try a longer record (more periods) or a smaller depth";
  fail(ErrorKind::measurement_quality, os.str());
}

}  // namespace gam
