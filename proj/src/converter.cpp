#include "gam/converter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

namespace gam {

std::string_view to_string(ModulationKind kind) {
  switch (kind) {
    case ModulationKind::pwm: return "pwm";
    case ModulationKind::cot: return "cot";
    case ModulationKind::pfm: return "pfm";
  }
  return "unknown";
}

std::string_view to_string(RectifierKind kind) {
  switch (kind) {
    case RectifierKind::freewheel: return "freewheel";
    case RectifierKind::center_tap: return "center_tap";
  }
  return "unknown";
}

std::string_view to_string(ConductionMode mode) {
  switch (mode) {
    case ConductionMode::ccm: return "ccm";
    case ConductionMode::dcm: return "dcm";
    case ConductionMode::below_resonance: return "below_resonance";
    case ConductionMode::above_resonance: return "above_resonance";
  }
  return "unknown";
}

ModulationKind modulation_from_string(std::string_view s) {
  if (s == "pwm") return ModulationKind::pwm;
  if (s == "cot") return ModulationKind::cot;
  if (s == "pfm") return ModulationKind::pfm;
  fail(ErrorKind::validation, "unknown modulation type '" + std::string(s) + "'");
}

RectifierKind rectifier_from_string(std::string_view s) {
  if (s == "freewheel") return RectifierKind::freewheel;
  if (s == "center_tap") return RectifierKind::center_tap;
  fail(ErrorKind::validation, "unknown rectifier type '" + std::string(s) + "'");
}

ConductionMode mode_from_string(std::string_view s) {
  if (s == "ccm") return ConductionMode::ccm;
  if (s == "dcm") return ConductionMode::dcm;
  if (s == "below_resonance") return ConductionMode::below_resonance;
  if (s == "above_resonance") return ConductionMode::above_resonance;
  fail(ErrorKind::validation, "unknown conduction mode '" + std::string(s) + "'");
}

namespace {

class ExpressionParser {
 public:
  ExpressionParser(const std::string& text,
                   const std::vector<std::pair<std::string, double>>& vars)
      : text_(text), vars_(vars) {}

  double run() {
    const double v = sum();
    skip();
    if (pos_ != text_.size()) error("unexpected '" + std::string(1, text_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::validation, "expression '" + text_ + "': " + what);
  }
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double sum() {
    double v = product();
    for (;;) {
      if (accept('+')) v += product();
      else if (accept('-')) v -= product();
      else return v;
    }
  }
  double product() {
    double v = unary();
    for (;;) {
      if (accept('*')) v *= unary();
      else if (accept('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    const double base = primary();
    if (accept('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (pos_ >= text_.size()) error("unexpected end");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      const double v = sum();
      if (!accept(')')) error("missing ')'");
      return v;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string name = text_.substr(start, pos_ - start);
      if (accept('(')) {
        const double arg = sum();
        if (!accept(')')) error("missing ')' after argument of " + name);
        if (name == "sqrt") return std::sqrt(arg);
        if (name == "exp") return std::exp(arg);
        if (name == "log") return std::log(arg);
        if (name == "abs") return std::abs(arg);
        error("unknown function '" + name + "'");
      }
      if (name == "pi") return std::numbers::pi;
      for (auto it = vars_.rbegin(); it != vars_.rend(); ++it)
        if (it->first == name) return it->second;
      error("unknown name '" + name + "'");
    }
    error("unexpected '" + std::string(1, c) + "'");
  }
  double number() {
    const char* begin = text_.c_str() + pos_;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) error("bad number");
    pos_ += static_cast<std::size_t>(end - begin);
    if (pos_ < text_.size()) {
      const char s = text_[pos_];
      const bool next_is_word =
          pos_ + 1 < text_.size() &&
          (std::isalnum(static_cast<unsigned char>(text_[pos_ + 1])) || text_[pos_ + 1] == '_');
      double scale = 0;
      switch (s) {
        case 'p': scale = 1e-12; break;
        case 'n': scale = 1e-9; break;
        case 'u': scale = 1e-6; break;
        case 'm': scale = 1e-3; break;
        case 'k': scale = 1e3; break;
        case 'M': scale = 1e6; break;
        case 'G': scale = 1e9; break;
        default: break;
      }
      if (scale != 0 && !next_is_word) {
        v *= scale;
        ++pos_;
      } else if (std::isalpha(static_cast<unsigned char>(s))) {
        error("bad unit suffix");
      }
    }
    return v;
  }

  const std::string& text_;
  const std::vector<std::pair<std::string, double>>& vars_;
  std::size_t pos_ = 0;
};

std::vector<std::pair<std::string, double>> parameter_values(const ConverterSpec& spec) {
  std::vector<std::pair<std::string, double>> vars;
  for (const auto& p : spec.parameters) {
    const double v = evaluate_expression(p.expression, vars);
    if (!std::isfinite(v))
      fail(ErrorKind::validation, "parameters." + p.name + " is not finite");
    vars.emplace_back(p.name, v);
  }
  return vars;
}

}  // namespace

double evaluate_expression(const std::string& expression,
                           const std::vector<std::pair<std::string, double>>& variables) {
  if (expression.empty()) fail(ErrorKind::validation, "empty expression");
  return ExpressionParser(expression, variables).run();
}

double ConverterSpec::eval(const std::string& expression) const {
  return evaluate_expression(expression, parameter_values(*this));
}

double ConverterSpec::parameter(const std::string& name) const {
  for (const auto& [n, v] : parameter_values(*this))
    if (n == name) return v;
  fail(ErrorKind::validation, "unknown parameter '" + name + "'");
}

void ConverterSpec::set_parameter(const std::string& name, double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  for (auto& p : parameters)
    if (p.name == name) {
      p.expression = buf;
      return;
    }
  parameters.push_back({name, buf});
}

CircuitDescription ConverterSpec::description() const {
  const auto vars = parameter_values(*this);
  auto ev = [&](const std::string& e) { return evaluate_expression(e, vars); };
  CircuitDescription d;
  for (const auto& s : circuit.states) d.states.push_back({s.name, ev(s.energy)});
  for (const auto& u : circuit.inputs) d.inputs.push_back({u.name, ev(u.value)});
  d.switches = circuit.switches;
  for (const auto& t : circuit.terms)
    d.terms.push_back({t.equation, ev(t.coefficient), t.switches, t.operand});
  for (const auto& o : circuit.outputs) {
    OutputDecl out{o.name, {}};
    for (const auto& w : o.weights) out.weights.emplace_back(w.state, ev(w.weight));
    d.outputs.push_back(out);
  }
  return d;
}

int ConverterSpec::controlled_switch() const {
  for (std::size_t i = 0; i < circuit.switches.size(); ++i)
    if (circuit.switches[i] == modulation.switch_name) return static_cast<int>(i);
  fail(ErrorKind::validation, "modulation.switch '" + modulation.switch_name + "' is not declared");
}

std::vector<int> ConverterSpec::diode_switches() const {
  std::vector<int> out;
  for (const auto& name : rectifier.switches) {
    bool found = false;
    for (std::size_t i = 0; i < circuit.switches.size(); ++i)
      if (circuit.switches[i] == name) {
        out.push_back(static_cast<int>(i));
        found = true;
      }
    if (!found) fail(ErrorKind::validation, "rectifier.switches: '" + name + "' is not declared");
  }
  return out;
}

std::vector<std::pair<int, double>> ConverterSpec::diode_current() const {
  const auto vars = parameter_values(*this);
  std::vector<std::pair<int, double>> out;
  for (const auto& w : rectifier.current) {
    int idx = -1;
    for (std::size_t i = 0; i < circuit.states.size(); ++i)
      if (circuit.states[i].name == w.state) idx = static_cast<int>(i);
    if (idx < 0) fail(ErrorKind::validation, "rectifier.current: unknown state '" + w.state + "'");
    out.emplace_back(idx, evaluate_expression(w.weight, vars));
  }
  return out;
}

double ConverterSpec::duty() const { return eval(modulation.duty); }
double ConverterSpec::frequency() const { return eval(modulation.frequency); }
double ConverterSpec::kv() const { return eval(modulation.kv); }
double ConverterSpec::on_time() const { return eval(modulation.on_time); }
double ConverterSpec::delay() const { return eval(modulation.delay); }
double ConverterSpec::control_bias() const { return eval(modulation.control); }

int ConverterSpec::sense_index() const {
  for (std::size_t i = 0; i < circuit.outputs.size(); ++i)
    if (circuit.outputs[i].name == modulation.sense) return static_cast<int>(i);
  for (std::size_t i = 0; i < circuit.states.size(); ++i)
    if (circuit.states[i].name == modulation.sense) return -1 - static_cast<int>(i);
  fail(ErrorKind::validation, "modulation.sense: unknown signal '" + modulation.sense + "'");
}

std::vector<std::string> ConverterSpec::control_names() const {
  std::vector<std::string> out;
  switch (modulation.kind) {
    case ModulationKind::pwm: out.push_back("d"); break;
    case ModulationKind::cot: out.push_back("vc"); break;
    case ModulationKind::pfm:
      out.push_back("alpha");
      out.push_back("ws");
      break;
  }
  for (const auto& u : circuit.inputs) out.push_back(u.name);
  return out;
}

std::string ConverterSpec::default_control() const {
  if (!oracle.control.empty()) return oracle.control;
  return control_names().front();
}

std::string ConverterSpec::default_output() const {
  if (!oracle.output.empty()) return oracle.output;
  if (!circuit.outputs.empty()) return circuit.outputs.front().name;
  return circuit.states.back().name;
}

double ConverterSpec::default_depth() const {
  if (!oracle.depth.empty()) return eval(oracle.depth);
  switch (modulation.kind) {
    case ModulationKind::pwm: return 0.01;
    case ModulationKind::cot: return 0.01;
    case ModulationKind::pfm: return 2 * std::numbers::pi * 5e3;
  }
  return 0.01;
}

void validate(const ConverterSpec& spec) {
  auto field_value = [&](const std::string& field, const std::string& expr) {
    if (expr.empty()) fail(ErrorKind::validation, field + " is required");
    try {
      const double v = spec.eval(expr);
      if (!std::isfinite(v)) fail(ErrorKind::validation, field + " is not finite");
      return v;
    } catch (const Error& e) {
      fail(ErrorKind::validation, field + ": " + e.what());
    }
  };
  auto positive = [&](const std::string& field, const std::string& expr) {
    const double v = field_value(field, expr);
    if (!(v > 0)) fail(ErrorKind::validation, field + " must be positive (got " + expr + ")");
    return v;
  };

  if (spec.name.empty()) fail(ErrorKind::validation, "converter.name is required");
  {
    std::vector<std::pair<std::string, double>> vars;
    for (const auto& p : spec.parameters) {
      for (const auto& [n, v] : vars)
        if (n == p.name) fail(ErrorKind::validation, "parameters." + p.name + " declared twice");
      double v = 0;
      try {
        v = evaluate_expression(p.expression, vars);
      } catch (const Error& e) {
        fail(ErrorKind::validation, "parameters." + p.name + ": " + e.what());
      }
      if (!std::isfinite(v)) fail(ErrorKind::validation, "parameters." + p.name + " is not finite");
      vars.emplace_back(p.name, v);
    }
  }
  for (const auto& s : spec.circuit.states) positive("circuit.state " + s.name, s.energy);
  for (const auto& u : spec.circuit.inputs) field_value("circuit.input " + u.name, u.value);
  for (const auto& t : spec.circuit.terms)
    field_value("circuit.term in " + t.equation, t.coefficient);
  for (const auto& o : spec.circuit.outputs)
    for (const auto& w : o.weights) field_value("circuit.output " + o.name, w.weight);
  try {
    validate(spec.description());
  } catch (const Error& e) {
    fail(ErrorKind::validation, std::string("circuit: ") + e.what());
  }

  const auto& m = spec.modulation;
  spec.controlled_switch();
  switch (m.kind) {
    case ModulationKind::pwm: {
      const double d = field_value("modulation.duty", m.duty);
      if (!(d > 0 && d < 1))
        fail(ErrorKind::validation, "modulation.duty must lie in (0, 1) (got " + m.duty + ")");
      positive("modulation.frequency", m.frequency);
      if (spec.mode != ConductionMode::ccm && spec.mode != ConductionMode::dcm)
        fail(ErrorKind::validation, "converter.mode must be ccm or dcm for pwm");
      break;
    }
    case ModulationKind::cot:
      positive("modulation.kv", m.kv);
      positive("modulation.on_time", m.on_time);
      if (field_value("modulation.delay", m.delay) < 0)
        fail(ErrorKind::validation, "modulation.delay must be >= 0");
      positive("modulation.control", m.control);
      spec.sense_index();
      if (spec.mode != ConductionMode::ccm && spec.mode != ConductionMode::dcm)
        fail(ErrorKind::validation, "converter.mode must be ccm or dcm for cot");
      break;
    case ModulationKind::pfm:
      positive("modulation.frequency", m.frequency);
      if (spec.mode != ConductionMode::below_resonance &&
          spec.mode != ConductionMode::above_resonance)
        fail(ErrorKind::validation,
             "converter.mode must be below_resonance or above_resonance for pfm");
      break;
  }

  const auto diodes = spec.diode_switches();
  const std::size_t expected = spec.rectifier.kind == RectifierKind::freewheel ? 1 : 2;
  if (diodes.size() != expected)
    fail(ErrorKind::validation, "rectifier.switches must list " + std::to_string(expected) +
                                    " switch(es) for " + std::string(to_string(spec.rectifier.kind)));
  for (int d : diodes)
    if (d == spec.controlled_switch())
      fail(ErrorKind::validation, "rectifier.switches must not include the controlled switch");
  if (spec.rectifier.current.empty()) fail(ErrorKind::validation, "rectifier.current is required");
  for (const auto& w : spec.rectifier.current) field_value("rectifier.current", w.weight);
  spec.diode_current();

  if (spec.oracle.samples_per_period < 16)
    fail(ErrorKind::validation, "oracle.samples_per_period must be >= 16");
  if (spec.oracle.max_periods < 10) fail(ErrorKind::validation, "oracle.max_periods must be >= 10");
  if (!(spec.oracle.detect_tol > 0)) fail(ErrorKind::validation, "oracle.detect_tol must be positive");
  if (!spec.oracle.depth.empty()) positive("oracle.depth", spec.oracle.depth);
  if (!spec.oracle.control.empty()) {
    const auto names = spec.control_names();
    if (std::find(names.begin(), names.end(), spec.oracle.control) == names.end())
      fail(ErrorKind::validation, "oracle.control: unknown control '" + spec.oracle.control + "'");
  }
  if (!spec.oracle.output.empty()) {
    const auto d = spec.description();
    if (!d.output_index(spec.oracle.output) && !d.state_index(spec.oracle.output))
      fail(ErrorKind::validation, "oracle.output: unknown signal '" + spec.oracle.output + "'");
  }
}

}  // namespace gam
