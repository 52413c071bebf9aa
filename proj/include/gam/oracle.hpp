#pragma once

// Time-domain reference simulator of the switched circuit. Within one switch
// configuration the circuit is linear with constant inputs, so each segment
// is propagated with the matrix exponential of the augmented system
// z = [x; 1; sin; cos], the last two rows carrying an optional sinusoidal
// control. Switching instants are located by bisection.

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gam/circuit.hpp"
#include "gam/converter.hpp"

namespace gam {

struct SimulationEvent {
  std::string kind;  // "<switch>.rise", "<switch>.fall" or "trigger"
  double time;
};

struct SimulationTrace {
  std::vector<std::string> state_names;
  std::vector<std::string> switch_names;
  std::vector<double> time;
  std::vector<std::vector<double>> states;     // one row per sample
  std::vector<std::vector<int>> switch_states;  // one row per sample
  std::vector<SimulationEvent> events;
  std::int64_t steps = 0;
  std::int64_t bisections = 0;
};

/// Sinusoidal perturbation u(t) = bias + depth sin(2 pi f (t - start)) of a
/// control. For "ws" the perturbation is of the switching frequency in rad/s
/// and drives the carrier through its phase integral.
struct SinusoidalControl {
  std::string control;
  double depth = 0;
  double frequency = 0;
  double start = 0;
};

struct SimulatorOptions {
  int samples_per_period = 128;
  double event_tolerance = 1e-12;  // relative to the nominal period
  std::int64_t max_events = 1000000;
};

class Simulator {
 public:
  using Vec = Eigen::VectorXd;

  explicit Simulator(const ConverterSpec& spec, SimulatorOptions options = {});

  /// Restarts from `x` at time `t`, with switch states settled at that time.
  void reset(double t, const Vec& x);

  /// Applies a sinusoidal control from now on; the oscillator phase starts at
  /// `control.start`.
  void modulate(const SinusoidalControl& control);

  /// Advances to exactly `t_end`. With `stop_at_rise` the call returns early,
  /// just after the next rising edge of the controlled switch; the return
  /// value tells whether that happened.
  bool advance(double t_end, bool stop_at_rise = false);

  double time() const { return t_; }
  Vec state() const { return z_.head(nx_); }
  const std::vector<int>& switch_state() const { return config_; }
  const std::vector<SimulationEvent>& events() const { return events_; }
  void clear_events() { events_.clear(); }
  std::int64_t steps() const { return steps_; }
  std::int64_t bisections() const { return bisections_; }
  double nominal_period() const { return period_; }
  const CircuitDescription& description() const { return desc_; }

  /// Value of a state or output.
  double signal(const std::string& name) const;
  /// Current of the diodes' shared current definition.
  double diode_current() const;
  /// Present value of a control (including modulation).
  double control_value(const std::string& name) const;

 private:
  enum class CotPhase { idle, pending, on };

  const Eigen::MatrixXd& matrix(const std::vector<int>& config);
  Vec propagate(const Vec& z, double dt, const Eigen::MatrixXd& m) const;
  double modulated(double bias, const std::string& name, const Vec& z) const;
  bool modulator_on(double t, const Vec& z) const;
  double comparator(double t, const Vec& z) const;
  std::vector<int> settled_diodes(const Vec& z, const std::vector<int>& config);
  bool pending(double t, const Vec& z);
  void apply(double t);
  void log(const std::string& kind, double t);
  void set_switch(int k, int on, double t);
  double current_of(const Vec& z) const;

  ConverterSpec spec_;
  CircuitDescription desc_;
  std::vector<ResolvedTerm> terms_;
  SimulatorOptions options_;
  int nx_ = 0;
  int s1_ = 0;
  std::vector<int> diodes_;
  bool freewheel_ = true;
  Vec current_row_;
  Eigen::VectorXd energy_;
  double period_ = 0;  // nominal
  double omega_ = 0;   // pwm, pfm
  // modulation parameters
  double duty_ = 0, kv_ = 0, ton_ = 0, td_ = 0, vc_ = 0;
  Vec sense_row_;

  SinusoidalControl sine_;
  double sine_omega_ = 0;
  int modulated_input_ = -1;

  std::map<std::vector<int>, Eigen::MatrixXd> cache_;
  double t_ = 0;
  Vec z_;
  std::vector<int> config_;
  CotPhase cot_ = CotPhase::idle;
  double next_rise_ = 0, next_fall_ = 0;
  double max_current_ = 0;
  std::vector<SimulationEvent> events_;
  std::int64_t event_count_ = 0;
  std::int64_t steps_ = 0;
  std::int64_t bisections_ = 0;
  bool rose_ = false;
};

/// Runs from the zero state to `t_end`, sampling every period/samples.
SimulationTrace simulate(const ConverterSpec& spec, double t_end,
                         const std::optional<SinusoidalControl>& control = std::nullopt,
                         SimulatorOptions options = {});

struct SettledCycle {
  Simulator simulator;             // positioned just after a rising edge of s1
  double period = 0;               // measured between the last two rising edges
  double duty = 0;                 // measured on-time / period of s1
  int periods = 0;                 // periods simulated until convergence
  double mismatch = 0;             // last Poincare mismatch, relative
  SimulationTrace cycle;           // one period sampled from the rising edge
};

/// Runs until the state at consecutive rising edges of the controlled switch
/// agrees to `detect_tol` (relative).
SettledCycle steady_state_by_simulation(const ConverterSpec& spec,
                                        std::optional<int> max_periods = std::nullopt,
                                        std::optional<double> detect_tol = std::nullopt);

struct FrfMeasurement {
  double frequency;           // modulation frequency actually used, Hz
  double output_frequency;    // frequency + m * fs
  std::complex<double> value; // output bin / input bin
  double depth;               // depth actually used
  int records;
  int record_periods;
};

struct FrfOptions {
  int min_record_periods = 50;
  int max_records = 30;
  double agreement = 1e-4;
  int depth_halvings = 4;  // retries at half depth when records disagree
};

/// Frequency nearest to `target` with an integer number of modulation
/// periods in an integer number K >= min_periods of switching periods, and
/// not a multiple of fs / 2.
std::pair<double, int> commensurate_frequency(double target, double period, int min_periods = 50);

/// Small-signal response of `output` at f + m fs to a sinusoidal `control`
/// perturbation at f, from a settled cycle. Consecutive records are compared
/// until they agree; if they never do, the depth is halved and the
/// measurement repeated.
FrfMeasurement measure_frf(const SettledCycle& settled, const std::string& control, double depth,
                           double frequency, const std::string& output, int m = 0,
                           const FrfOptions& options = {});

}  // namespace gam
