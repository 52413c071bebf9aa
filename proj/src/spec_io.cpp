#include "gam/spec_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gam {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

class Parser {
 public:
  explicit Parser(std::string source) : source_(std::move(source)) {}

  ConverterSpec run(std::istream& in) {
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_;
      std::string text = raw;
      if (const auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
      text = trim(text);
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']') error("section header is missing ']'");
        section_ = trim(text.substr(1, text.size() - 2));
        static const char* known[] = {"converter", "parameters", "circuit",
                                      "modulation", "rectifier", "oracle"};
        if (std::find(std::begin(known), std::end(known), section_) == std::end(known))
          error("unknown section [" + section_ + "]");
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) error("expected 'key = value'");
      const std::string key = trim(text.substr(0, eq));
      const std::string value = trim(text.substr(eq + 1));
      if (section_.empty()) error("'" + key + "' appears before any section");
      if (value.empty()) error(section_ + "." + key + " has no value");
      handle(key, value);
    }
    if (spec_.name.empty()) fail(ErrorKind::validation, source_ + ": converter.name is required");
    if (!seen_mode_) fail(ErrorKind::validation, source_ + ": converter.mode is required");
    if (!seen_modulation_type_)
      fail(ErrorKind::validation, source_ + ": modulation.type is required");
    if (!seen_rectifier_type_)
      fail(ErrorKind::validation, source_ + ": rectifier.type is required");
    try {
      validate(spec_);
    } catch (const Error& e) {
      fail(e.kind(), source_ + ": " + e.what());
    }
    return spec_;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::validation, source_ + ":" + std::to_string(line_) + ": " + what);
  }

  void once(const std::string& key) {
    const std::string full = section_ + "." + key;
    if (std::find(seen_.begin(), seen_.end(), full) != seen_.end())
      error(full + " given twice");
    seen_.push_back(full);
  }

  void check_expression(const std::string& field, const std::string& expr) {
    // evaluated for syntax and names only; values are checked by validate()
    try {
      std::vector<std::pair<std::string, double>> values;
      for (const auto& p : spec_.parameters)
        values.emplace_back(p.name, evaluate_expression(p.expression, values));
      evaluate_expression(expr, values);
    } catch (const Error& e) {
      error(field + ": " + e.what());
    }
  }

  std::vector<WeightTemplate> weights(const std::string& field,
                                      const std::vector<std::string>& items) {
    std::vector<WeightTemplate> out;
    for (const auto& item : items) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) error(field + ": expected STATE:WEIGHT, got '" + item + "'");
      WeightTemplate w{trim(item.substr(0, colon)), trim(item.substr(colon + 1))};
      if (!is_identifier(w.state)) error(field + ": bad state name '" + w.state + "'");
      check_expression(field, w.weight);
      out.push_back(w);
    }
    return out;
  }

  void handle(const std::string& key, const std::string& value) {
    if (section_ == "converter") {
      once(key);
      if (key == "name") spec_.name = value;
      else if (key == "mode") {
        try {
          spec_.mode = mode_from_string(value);
        } catch (const Error& e) {
          error(std::string("converter.mode: ") + e.what());
        }
        seen_mode_ = true;
      } else error("unknown key converter." + key);
    } else if (section_ == "parameters") {
      if (!is_identifier(key)) error("parameters: bad name '" + key + "'");
      if (key == "pi") error("parameters: 'pi' is reserved");
      for (const auto& p : spec_.parameters)
        if (p.name == key) error("parameters." + key + " given twice");
      check_expression("parameters." + key, value);
      spec_.parameters.push_back({key, value});
    } else if (section_ == "circuit") {
      circuit(key, value);
    } else if (section_ == "modulation") {
      modulation(key, value);
    } else if (section_ == "rectifier") {
      once(key);
      if (key == "type") {
        try {
          spec_.rectifier.kind = rectifier_from_string(value);
        } catch (const Error& e) {
          error(std::string("rectifier.type: ") + e.what());
        }
        seen_rectifier_type_ = true;
      } else if (key == "switches") {
        spec_.rectifier.switches = split(value, ',');
      } else if (key == "current") {
        spec_.rectifier.current = weights("rectifier.current", split(value, ','));
      } else error("unknown key rectifier." + key);
    } else if (section_ == "oracle") {
      once(key);
      auto integer = [&]() {
        char* end = nullptr;
        const long v = std::strtol(value.c_str(), &end, 10);
        if (*end != '\0') error("oracle." + key + " must be an integer");
        return static_cast<int>(v);
      };
      if (key == "samples_per_period") spec_.oracle.samples_per_period = integer();
      else if (key == "max_periods") spec_.oracle.max_periods = integer();
      else if (key == "detect_tol") {
        char* end = nullptr;
        spec_.oracle.detect_tol = std::strtod(value.c_str(), &end);
        if (*end != '\0') error("oracle.detect_tol must be a number");
      } else if (key == "control") spec_.oracle.control = value;
      else if (key == "output") spec_.oracle.output = value;
      else if (key == "depth") {
        check_expression("oracle.depth", value);
        spec_.oracle.depth = value;
      } else error("unknown key oracle." + key);
    }
  }

  void circuit(const std::string& key, const std::string& value) {
    auto& c = spec_.circuit;
    const auto items = split(value, ',');
    if (key == "state") {
      if (items.size() != 2) error("circuit.state expects NAME, ENERGY");
      if (!is_identifier(items[0])) error("circuit.state: bad name '" + items[0] + "'");
      check_expression("circuit.state " + items[0], items[1]);
      c.states.push_back({items[0], items[1]});
    } else if (key == "input") {
      if (items.size() != 2) error("circuit.input expects NAME, VALUE");
      if (!is_identifier(items[0])) error("circuit.input: bad name '" + items[0] + "'");
      check_expression("circuit.input " + items[0], items[1]);
      c.inputs.push_back({items[0], items[1]});
    } else if (key == "switch") {
      if (items.size() != 1 || !is_identifier(items[0])) error("circuit.switch expects NAME");
      c.switches.push_back(items[0]);
    } else if (key == "term") {
      if (items.size() != 4) error("circuit.term expects EQUATION, COEFFICIENT, SWITCHES, OPERAND");
      TermTemplate t;
      t.equation = items[0];
      t.coefficient = items[1];
      check_expression("circuit.term coefficient", t.coefficient);
      if (items[2] != "-") {
        for (const auto& s : split(items[2], '*')) {
          if (!is_identifier(s)) error("circuit.term: bad switch name '" + s + "'");
          t.switches.push_back(s);
        }
      }
      if (items[3] != "1") {
        if (!is_identifier(items[3])) error("circuit.term: bad operand '" + items[3] + "'");
        t.operand = items[3];
      }
      c.terms.push_back(t);
    } else if (key == "output") {
      if (items.size() < 2) error("circuit.output expects NAME, STATE:WEIGHT ...");
      if (!is_identifier(items[0])) error("circuit.output: bad name '" + items[0] + "'");
      OutputTemplate o{items[0], weights("circuit.output " + items[0],
                                         std::vector<std::string>(items.begin() + 1, items.end()))};
      c.outputs.push_back(o);
    } else {
      error("unknown key circuit." + key);
    }
  }

  void modulation(const std::string& key, const std::string& value) {
    once(key);
    auto& m = spec_.modulation;
    auto expr = [&](std::string& field) {
      check_expression("modulation." + key, value);
      field = value;
    };
    if (key == "type") {
      try {
        m.kind = modulation_from_string(value);
      } catch (const Error& e) {
        error(std::string("modulation.type: ") + e.what());
      }
      seen_modulation_type_ = true;
    } else if (key == "switch") m.switch_name = value;
    else if (key == "carrier") {
      try {
        m.carrier = carrier_from_string(value);
      } catch (const Error& e) {
        error(std::string("modulation.carrier: ") + e.what());
      }
    } else if (key == "duty") expr(m.duty);
    else if (key == "frequency") expr(m.frequency);
    else if (key == "kv") expr(m.kv);
    else if (key == "on_time") expr(m.on_time);
    else if (key == "delay") expr(m.delay);
    else if (key == "control") expr(m.control);
    else if (key == "sense") m.sense = value;
    else error("unknown key modulation." + key);
  }

  std::string source_;
  int line_ = 0;
  std::string section_;
  std::vector<std::string> seen_;
  bool seen_mode_ = false;
  bool seen_modulation_type_ = false;
  bool seen_rectifier_type_ = false;
  ConverterSpec spec_;
};

std::string join_weights(const std::vector<WeightTemplate>& ws) {
  std::string out;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (i) out += ", ";
    out += ws[i].state + ":" + ws[i].weight;
  }
  return out;
}

}  // namespace

ConverterSpec parse_spec(std::istream& in, const std::string& source) {
  return Parser(source).run(in);
}

ConverterSpec parse_spec_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse_spec(in, source);
}

ConverterSpec parse_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open spec file '" + path.string() + "'");
  return parse_spec(in, path.string());
}

std::string serialize(const ConverterSpec& spec) {
  std::ostringstream os;
  os << "[converter]\n";
  os << "name = " << spec.name << "\n";
  os << "mode = " << to_string(spec.mode) << "\n\n";

  os << "[parameters]\n";
  for (const auto& p : spec.parameters) os << p.name << " = " << p.expression << "\n";
  os << "\n[circuit]\n";
  for (const auto& s : spec.circuit.states) os << "state = " << s.name << ", " << s.energy << "\n";
  for (const auto& u : spec.circuit.inputs) os << "input = " << u.name << ", " << u.value << "\n";
  for (const auto& s : spec.circuit.switches) os << "switch = " << s << "\n";
  for (const auto& t : spec.circuit.terms) {
    os << "term = " << t.equation << ", " << t.coefficient << ", ";
    if (t.switches.empty()) os << "-";
    for (std::size_t i = 0; i < t.switches.size(); ++i) os << (i ? "*" : "") << t.switches[i];
    os << ", " << (t.operand.empty() ? "1" : t.operand) << "\n";
  }
  for (const auto& o : spec.circuit.outputs)
    os << "output = " << o.name << ", " << join_weights(o.weights) << "\n";

  const auto& m = spec.modulation;
  os << "\n[modulation]\n";
  os << "type = " << to_string(m.kind) << "\n";
  os << "switch = " << m.switch_name << "\n";
  switch (m.kind) {
    case ModulationKind::pwm:
      os << "carrier = " << to_string(m.carrier) << "\n";
      os << "duty = " << m.duty << "\n";
      os << "frequency = " << m.frequency << "\n";
      break;
    case ModulationKind::cot:
      os << "kv = " << m.kv << "\n";
      os << "on_time = " << m.on_time << "\n";
      os << "delay = " << m.delay << "\n";
      os << "control = " << m.control << "\n";
      os << "sense = " << m.sense << "\n";
      break;
    case ModulationKind::pfm: os << "frequency = " << m.frequency << "\n"; break;
  }

  os << "\n[rectifier]\n";
  os << "type = " << to_string(spec.rectifier.kind) << "\n";
  os << "switches = ";
  for (std::size_t i = 0; i < spec.rectifier.switches.size(); ++i)
    os << (i ? ", " : "") << spec.rectifier.switches[i];
  os << "\n";
  os << "current = " << join_weights(spec.rectifier.current) << "\n";

  char tol[40];
  std::snprintf(tol, sizeof tol, "%.17g", spec.oracle.detect_tol);
  os << "\n[oracle]\n";
  os << "samples_per_period = " << spec.oracle.samples_per_period << "\n";
  os << "max_periods = " << spec.oracle.max_periods << "\n";
  os << "detect_tol = " << tol << "\n";
  if (!spec.oracle.control.empty()) os << "control = " << spec.oracle.control << "\n";
  if (!spec.oracle.output.empty()) os << "output = " << spec.oracle.output << "\n";
  if (!spec.oracle.depth.empty()) os << "depth = " << spec.oracle.depth << "\n";
  return os.str();
}

std::uint64_t spec_hash(const ConverterSpec& spec) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : serialize(spec)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string spec_hash_hex(const ConverterSpec& spec) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(spec_hash(spec)));
  return buf;
}

std::filesystem::path preset_directory() {
  if (const char* env = std::getenv("GAM_PRESET_DIR"); env && *env) return env;
  return GAM_PRESET_DIR;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(preset_directory(), ec))
    if (entry.path().extension() == ".gam") names.push_back(entry.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

ConverterSpec load_preset(const std::string& name) {
  return parse_spec_file(preset_directory() / (name + ".gam"));
}

}  // namespace gam
