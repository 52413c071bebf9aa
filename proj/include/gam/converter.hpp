#pragma once

// Converter specs: named parameters, a circuit whose numeric fields
// are expressions over those parameters, the modulator of the controlled
// switch, the diode arrangement and oracle settings.

#include <string>
#include <utility>
#include <vector>

#include "gam/circuit.hpp"
#include "gam/switching.hpp"

namespace gam {

enum class ModulationKind { pwm, cot, pfm };
enum class RectifierKind { freewheel, center_tap };
enum class ConductionMode { ccm, dcm, below_resonance, above_resonance };

std::string_view to_string(ModulationKind kind);
std::string_view to_string(RectifierKind kind);
std::string_view to_string(ConductionMode mode);
ModulationKind modulation_from_string(std::string_view s);
RectifierKind rectifier_from_string(std::string_view s);
ConductionMode mode_from_string(std::string_view s);

struct Parameter {
  std::string name;
  std::string expression;
  bool operator==(const Parameter&) const = default;
};

struct StateTemplate {
  std::string name;
  std::string energy;
  bool operator==(const StateTemplate&) const = default;
};

struct InputTemplate {
  std::string name;
  std::string value;
  bool operator==(const InputTemplate&) const = default;
};

struct TermTemplate {
  std::string equation;
  std::string coefficient;
  std::vector<std::string> switches;
  std::string operand;  // empty for the constant 1
  bool operator==(const TermTemplate&) const = default;
};

struct WeightTemplate {
  std::string state;
  std::string weight;
  bool operator==(const WeightTemplate&) const = default;
};

struct OutputTemplate {
  std::string name;
  std::vector<WeightTemplate> weights;
  bool operator==(const OutputTemplate&) const = default;
};

struct CircuitTemplate {
  std::vector<StateTemplate> states;
  std::vector<InputTemplate> inputs;
  std::vector<std::string> switches;
  std::vector<TermTemplate> terms;
  std::vector<OutputTemplate> outputs;
  bool operator==(const CircuitTemplate&) const = default;
};

struct ModulationSpec {
  ModulationKind kind = ModulationKind::pwm;
  std::string switch_name;
  // pwm
  Carrier carrier = Carrier::triangle;
  std::string duty;
  // pwm and pfm
  std::string frequency;
  // cot: turn-on when control - kv * sense crosses zero upwards, after delay;
  // turn-off on_time later
  std::string kv;
  std::string on_time;
  std::string delay;
  std::string control;
  std::string sense;
  bool operator==(const ModulationSpec&) const = default;
};

/// The diodes. A freewheel diode conducts while the controlled switch is off
/// and its current is positive; a centre-tapped pair shares one current
/// with opposite signs, the first switch conducting the positive half.
struct RectifierSpec {
  RectifierKind kind = RectifierKind::freewheel;
  std::vector<std::string> switches;
  std::vector<WeightTemplate> current;
  bool operator==(const RectifierSpec&) const = default;
};

struct OracleSpec {
  int samples_per_period = 128;
  int max_periods = 20000;
  double detect_tol = 1e-9;
  std::string control;  // default frequency-response input
  std::string output;   // default frequency-response output
  std::string depth;    // modulation depth in the control's units
  bool operator==(const OracleSpec&) const = default;
};

struct ConverterSpec {
  std::string name;
  ConductionMode mode = ConductionMode::ccm;
  std::vector<Parameter> parameters;
  CircuitTemplate circuit;
  ModulationSpec modulation;
  RectifierSpec rectifier;
  OracleSpec oracle;

  bool operator==(const ConverterSpec&) const = default;

  /// Evaluates an expression over the parameters (each parameter may use
  /// those declared before it).
  double eval(const std::string& expression) const;
  double parameter(const std::string& name) const;
  void set_parameter(const std::string& name, double value);

  CircuitDescription description() const;

  int controlled_switch() const;
  std::vector<int> diode_switches() const;
  /// Diode current as weights over state indices.
  std::vector<std::pair<int, double>> diode_current() const;

  double duty() const;            // pwm
  double frequency() const;       // pwm, pfm
  double kv() const;              // cot
  double on_time() const;         // cot
  double delay() const;           // cot
  double control_bias() const;    // cot
  int sense_index() const;        // cot: output index, or -1 - state index

  /// Names accepted as frequency-response inputs: the modulator control and
  /// the circuit inputs.
  std::vector<std::string> control_names() const;
  std::string default_control() const;
  std::string default_output() const;
  double default_depth() const;
};

/// Numbers with SI suffixes (p n u m k M G), parameter names, pi, + - * / ^,
/// parentheses, sqrt, exp, log, abs.
double evaluate_expression(const std::string& expression,
                           const std::vector<std::pair<std::string, double>>& variables);

/// Throws ErrorKind::validation naming the offending field.
void validate(const ConverterSpec& spec);

}  // namespace gam
