#include "gam/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <thread>

#include "gam/oracle.hpp"
#include "gam/small_signal.hpp"
#include "gam/spec_io.hpp"

namespace gam {

std::string_view to_string(Command command) {
  switch (command) {
    case Command::steady: return "steady";
    case Command::bode: return "bode";
    case Command::simulate: return "simulate";
    case Command::compare: return "compare";
  }
  return "unknown";
}

Command command_from_string(std::string_view s) {
  for (Command c : {Command::steady, Command::bode, Command::simulate, Command::compare})
    if (s == to_string(c)) return c;
  fail(ErrorKind::validation, "unknown command '" + std::string(s) + "'");
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

double db(std::complex<double> z) { return 20 * std::log10(std::abs(z)); }
double deg(std::complex<double> z) { return std::arg(z) * 180 / std::numbers::pi; }
double wrap_deg(double d) { return std::remainder(d, 360.0); }

class Csv {
 public:
  Csv(const RunConfig& config, const ConverterSpec& spec, const std::string& kind) {
    meta("tool", std::string("gam ") + tool_version);
    meta("artifact", kind);
    meta("spec", spec.name);
    meta("spec_hash", spec_hash_hex(spec));
    meta("order", std::to_string(config.order));
    meta("residual_tol", num(config.settings.residual_tol));
    meta("coefficient_tol", num(config.settings.coefficient_tol));
    meta("max_iterations", std::to_string(config.settings.max_iterations));
    meta("seed", std::to_string(config.seed));
  }
  void meta(const std::string& key, const std::string& value) {
    text_ << "# " << key << " = " << value << '\n';
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ << (i ? "," : "") << cells[i];
    text_ << '\n';
  }
  std::string str() const { return text_.str(); }

 private:
  std::ostringstream text_;
};

std::filesystem::path write(const RunConfig& config, const std::string& file, const Csv& csv) {
  const auto path = config.out / file;
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  f << csv.str();
  if (!f) fail(ErrorKind::io, "write failed for " + path.string());
  return path;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results keep their
// index.
template <class T>
std::vector<T> parallel_map(std::size_t n, unsigned threads, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        slots[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::string control_of(const RunConfig& config, const ConverterSpec& spec) {
  const auto name = config.input.value_or(spec.default_control());
  const auto names = spec.control_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    fail(ErrorKind::validation, "input '" + name + "' is not a control of " + spec.name);
  return name;
}

std::vector<std::string> signal_names(const ConverterSpec& spec) {
  std::vector<std::string> names;
  for (const auto& s : spec.circuit.states) names.push_back(s.name);
  for (const auto& o : spec.circuit.outputs)
    if (std::find(names.begin(), names.end(), o.name) == names.end()) names.push_back(o.name);
  return names;
}

std::vector<std::string> outputs_of(const RunConfig& config, const ConverterSpec& spec) {
  const auto names = signal_names(spec);
  const auto name = config.output.value_or(spec.default_output());
  if (name == "all") return names;
  if (std::find(names.begin(), names.end(), name) == names.end())
    fail(ErrorKind::validation, "output '" + name + "' is not a state or output of " + spec.name);
  return {name};
}

// The upper bound is checked here because a COT switching frequency is only
// known once the operating point is solved.
std::vector<double> grid(const RunConfig& config, double fs) {
  const double fmin = config.fmin.value_or(fs / 1000), fmax = config.fmax.value_or(2 * fs);
  if (!(fmax <= 2.5 * fs))
    fail(ErrorKind::validation, "fmax must be <= 2.5 fs = " + num(2.5 * fs) + " Hz");
  if (!(fmin < fmax)) fail(ErrorKind::validation, "fmin must be below fmax");
  const int points = config.points.value_or(
      std::max(2, static_cast<int>(std::lround(20 * std::log10(fmax / fmin))) + 1));
  return frequency_grid(fmin, fmax, points, fs);
}

void steady(const RunConfig& config, const ConverterSpec& spec, RunResult& result,
            std::ostream& out) {
  const auto op = find_operating_point(spec, config.order, config.settings);
  const auto& desc = op.description;

  Csv coeffs(config, spec, "operating_point");
  coeffs.meta("frequency_hz", num(op.frequency()));
  for (const auto& [k, v] : op.metadata) coeffs.meta(k, v);
  for (const auto& c : op.constraints)
    coeffs.meta("constraint." + c.name, num(c.value) + " after " + std::to_string(c.iterations));
  coeffs.meta("equilibrium_residual", num(op.equilibrium_residual));
  coeffs.row({"signal", "n", "re", "im"});
  auto emit = [&](const std::string& name, const HarmonicVectord& v) {
    for (int n = 0; n <= v.order(); ++n)
      coeffs.row({name, std::to_string(n), num(v(n).real()), num(v(n).imag())});
  };
  for (std::size_t i = 0; i < desc.states.size(); ++i) emit(desc.states[i].name, op.states[i]);
  for (std::size_t i = 0; i < desc.switches.size(); ++i) emit(desc.switches[i], op.switches[i]);
  result.artifacts.push_back(write(config, spec.name + "_operating_point.csv", coeffs));

  const auto wf = waveforms(op, period_grid(op, config.waveform_points));
  Csv w(config, spec, "waveforms");
  w.meta("frequency_hz", num(op.frequency()));
  std::vector<std::string> header{"time"};
  header.insert(header.end(), wf.names.begin(), wf.names.end());
  w.row(header);
  for (std::size_t k = 0; k < wf.time.size(); ++k) {
    std::vector<std::string> cells{num(wf.time[k])};
    for (const auto& column : wf.values) cells.push_back(num(column[k]));
    w.row(cells);
  }
  result.artifacts.push_back(write(config, spec.name + "_waveforms.csv", w));

  out << spec.name << ": f = " << num(op.frequency()) << " Hz";
  for (std::size_t i = 0; i < desc.switches.size(); ++i)
    out << ", <" << desc.switches[i] << ">0 = " << num(op.switches[i](0).real());
  for (std::size_t i = 0; i < desc.states.size(); ++i)
    out << ", <" << desc.states[i].name << ">0 = " << num(op.states[i](0).real());
  out << '\n';
}

void bode(const RunConfig& config, const ConverterSpec& spec, RunResult& result,
          std::ostream& out) {
  const auto op = find_operating_point(spec, config.order, config.settings);
  const auto ev = assemble(spec, op);
  const auto input = control_of(config, spec);
  const auto s = imaginary_axis(grid(config, op.frequency()));
  for (const auto& output : outputs_of(config, spec)) {
    const auto h = frequency_response(ev, input, output, config.sideband, s, config.threads);
    Csv csv(config, spec, "frequency_response");
    csv.meta("input", input);
    csv.meta("output", output);
    csv.meta("sideband", std::to_string(config.sideband));
    csv.meta("switching_frequency_hz", num(op.frequency()));
    csv.row({"frequency_hz", "output_frequency_hz", "re", "im", "magnitude_db", "phase_deg"});
    for (const auto& p : h.points) {
      const double f = p.s.imag() / (2 * std::numbers::pi);
      csv.row({num(f), num(f + config.sideband * op.frequency()), num(p.value.real()),
               num(p.value.imag()), num(db(p.value)), num(deg(p.value))});
    }
    const auto file = spec.name + "_bode_" + input + "_" + output + "_m" +
                      std::to_string(config.sideband) + ".csv";
    result.artifacts.push_back(write(config, file, csv));
  }
  out << spec.name << ": " << s.size() << " points from " << input << '\n';
}

void simulate_command(const RunConfig& config, const ConverterSpec& spec, RunResult& result,
                      std::ostream& out) {
  SimulatorOptions options;
  options.samples_per_period = spec.oracle.samples_per_period;
  const Simulator probe(spec, options);
  const double t_end = config.periods * probe.nominal_period();
  std::optional<SinusoidalControl> control;
  if (config.modulation_frequency)
    control = SinusoidalControl{control_of(config, spec), config.depth.value_or(spec.default_depth()),
                                *config.modulation_frequency, 0};
  const auto trace = simulate(spec, t_end, control, options);

  Csv csv(config, spec, "trace");
  csv.meta("periods", std::to_string(config.periods));
  if (control) {
    csv.meta("modulated_control", control->control);
    csv.meta("modulation_depth", num(control->depth));
    csv.meta("modulation_frequency_hz", num(control->frequency));
  }
  csv.meta("events", std::to_string(trace.events.size()));
  std::vector<std::string> header{"time"};
  header.insert(header.end(), trace.state_names.begin(), trace.state_names.end());
  header.insert(header.end(), trace.switch_names.begin(), trace.switch_names.end());
  csv.row(header);
  for (std::size_t k = 0; k < trace.time.size(); ++k) {
    std::vector<std::string> cells{num(trace.time[k])};
    for (double x : trace.states[k]) cells.push_back(num(x));
    for (int q : trace.switch_states[k]) cells.push_back(std::to_string(q));
    csv.row(cells);
  }
  result.artifacts.push_back(write(config, spec.name + "_trace.csv", csv));
  out << spec.name << ": " << trace.time.size() << " samples, " << trace.events.size()
      << " events\n";
}

void compare(const RunConfig& config, const ConverterSpec& spec, RunResult& result,
             std::ostream& out) {
  const auto input = control_of(config, spec);
  const auto outputs = outputs_of(config, spec);
  if (outputs.size() != 1) fail(ErrorKind::validation, "compare takes a single output");
  const auto& output = outputs.front();
  const int m = config.sideband;
  const double depth = config.depth.value_or(spec.default_depth());

  const auto op = find_operating_point(spec, config.order, config.settings);
  const auto ev = assemble(spec, op);
  // A low-order baseline may have no operating point of the declared kind
  // (e.g. no upward comparator crossing); the next orders are tried.
  int base_order = baseline_order(spec);
  std::optional<ClosedLoopEvaluator> base;
  for (int tries = 0; !base; ++base_order, ++tries) {
    try {
      base = assemble(spec, find_operating_point(spec, base_order, config.settings));
    } catch (const Error& e) {
      if (tries == 4 || e.category() == ErrorCategory::validation) throw;
    }
  }
  --base_order;
  const auto settled = steady_state_by_simulation(spec, config.max_periods, config.detect_tol);

  const auto targets = grid(config, op.frequency());
  const auto oracle = parallel_map<FrfMeasurement>(targets.size(), config.threads, [&](std::size_t i) {
    try {
      return measure_frf(settled, input, depth, targets[i], output, m);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::measurement_quality) throw;
      // reported as an unsettled point and left out of the maxima
      const double f = commensurate_frequency(targets[i], settled.period).first;
      return FrfMeasurement{f, f + m / settled.period, std::nan(""), 0, 0, 0};
    }
  });
  std::vector<std::complex<double>> s;
  for (const auto& o : oracle) s.emplace_back(0, 2 * std::numbers::pi * o.frequency);
  const auto gam = frequency_response(ev, input, output, m, s, config.threads);
  const auto baseline = frequency_response(*base, input, output, m, s, config.threads);

  Csv csv(config, spec, "comparison");
  csv.meta("input", input);
  csv.meta("output", output);
  csv.meta("sideband", std::to_string(m));
  csv.meta("baseline_order", std::to_string(base_order));
  csv.meta("switching_frequency_hz", num(op.frequency()));
  csv.meta("oracle_frequency_hz", num(1 / settled.period));
  csv.meta("oracle_periods_to_settle", std::to_string(settled.periods));
  csv.row({"frequency_hz", "gam_db", "gam_deg", "baseline_db", "baseline_deg", "oracle_db",
           "oracle_deg", "gam_error_db", "gam_error_deg", "baseline_error_db",
           "baseline_error_deg", "oracle_depth", "oracle_records"});

  double gam_db = 0, gam_deg = 0, base_db = 0, base_deg = 0, base_db_high = 0;
  int unsettled = 0;
  const double half_fs = op.frequency() / 2;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    const auto g = gam.points[i].value, b = baseline.points[i].value, o = oracle[i].value;
    const double eg = db(g) - db(o), pg = wrap_deg(deg(g) - deg(o));
    const double eb = db(b) - db(o), pb = wrap_deg(deg(b) - deg(o));
    if (oracle[i].records == 0) {
      ++unsettled;
    } else {
      gam_db = std::max(gam_db, std::abs(eg));
      gam_deg = std::max(gam_deg, std::abs(pg));
      base_db = std::max(base_db, std::abs(eb));
      base_deg = std::max(base_deg, std::abs(pb));
      if (oracle[i].frequency > half_fs) base_db_high = std::max(base_db_high, std::abs(eb));
    }
    csv.row({num(oracle[i].frequency), num(db(g)), num(deg(g)), num(db(b)), num(deg(b)),
             num(db(o)), num(deg(o)), num(eg), num(pg), num(eb), num(pb), num(oracle[i].depth),
             std::to_string(oracle[i].records)});
  }
  result.artifacts.push_back(write(config, spec.name + "_compare.csv", csv));

  Csv summary(config, spec, "comparison_summary");
  summary.meta("input", input);
  summary.meta("output", output);
  summary.row({"metric", "value"});
  summary.row({"points", std::to_string(oracle.size())});
  summary.row({"unsettled_points", std::to_string(unsettled)});
  summary.row({"max_gam_error_db", num(gam_db)});
  summary.row({"max_gam_error_deg", num(gam_deg)});
  summary.row({"max_baseline_error_db", num(base_db)});
  summary.row({"max_baseline_error_deg", num(base_deg)});
  summary.row({"max_baseline_error_db_above_half_fs", num(base_db_high)});
  result.artifacts.push_back(write(config, spec.name + "_compare_summary.csv", summary));

  out << spec.name << ": max |gam - oracle| = " << num(gam_db) << " dB, " << num(gam_deg)
      << " deg; max |baseline - oracle| = " << num(base_db) << " dB (" << num(base_db_high)
      << " dB above fs/2)";
  if (unsettled) out << "; " << unsettled << " oracle points unsettled";
  out << '\n';
}

}  // namespace

ConverterSpec load_spec(const std::string& spec) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(spec, ec)) return parse_spec_file(spec);
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) return load_preset(spec);
  std::string known;
  for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
  fail(ErrorKind::io, "no spec file or preset named '" + spec + "' (presets: " + known + ")");
}

void validate(const RunConfig& config, const ConverterSpec& /*spec*/) {
  if (config.order < 0) fail(ErrorKind::validation, "order must be >= 0");
  if (config.points && *config.points < 2) fail(ErrorKind::validation, "points must be >= 2");
  if (config.waveform_points < 2) fail(ErrorKind::validation, "waveform points must be >= 2");
  if (config.periods < 1) fail(ErrorKind::validation, "periods must be >= 1");
  const bool sweep = config.command == Command::bode || config.command == Command::compare;
  if (sweep) {
    if (config.fmin && !(*config.fmin > 0)) fail(ErrorKind::validation, "fmin must be > 0");
    if (config.fmin && config.fmax && !(*config.fmin < *config.fmax))
      fail(ErrorKind::validation, "fmin must be below fmax");
  }
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (!std::filesystem::is_directory(config.out))
    fail(ErrorKind::validation, "output directory " + config.out.string() + " is not usable");
  const auto probe = config.out / ".gam_write_probe";
  {
    std::ofstream f(probe);
    if (!f) fail(ErrorKind::validation, "output directory " + config.out.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

RunResult run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  RunResult result;
  try {
    const auto spec = load_spec(config.spec);
    validate(config, spec);
    switch (config.command) {
      case Command::steady: steady(config, spec, result, out); break;
      case Command::bode: bode(config, spec, result, out); break;
      case Command::simulate: simulate_command(config, spec, result, out); break;
      case Command::compare: compare(config, spec, result, out); break;
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.category()) << ' ' << to_string(e.kind()) << ": " << e.what()
        << '\n';
    result.exit_code = static_cast<int>(e.category());
  } catch (const std::exception& e) {
    err << "error: numerical internal: " << e.what() << '\n';
    result.exit_code = static_cast<int>(ErrorCategory::numerical);
  }
  return result;
}

std::string csv_body(const std::string& text) {
  std::istringstream in(text);
  std::string line, body;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') body += line + '\n';
  return body;
}

}  // namespace gam
