#pragma once

// Closed-loop small-signal model in moving-coefficient space. Each switching
// edge is driven by a timing: a delayed linear function of the state
// perturbation and of one exogenous control,
//
//   dt(s) = e^{-sD} (G_x X(s) + g_u U(s)),
//
// and moves its switch by edge_vector * dt. Substituting into the lifted
// circuit gives one dense system per frequency.

#include <complex>
#include <string>
#include <vector>

#include "gam/circuit.hpp"
#include "gam/converter.hpp"
#include "gam/frequency_response.hpp"
#include "gam/steady_state.hpp"

namespace gam {

enum class Edge { rise, fall };
std::string_view to_string(Edge edge);

struct Timing {
  std::string name;      // e.g. "s1.rise"
  double delay = 0;      // s
  crow gain_x;           // 1 x dimension, may be empty for exogenous timings
  crow gain_u;           // 1 x (2N+1), dt/d<u>_m
  std::string control;   // empty if no exogenous source
};

struct EdgeChannel {
  int switch_index;
  Edge edge;
  cvec edge_vector;  // d<s>/dt_edge
  int timing;        // index into SensitivityChain::timings
};

/// A control whose response is another control's response times 1/s.
struct IntegratedControl {
  std::string name;
  std::string of;
};

struct SensitivityChain {
  std::vector<Timing> timings;
  std::vector<EdgeChannel> channels;
  std::vector<IntegratedControl> integrated;
};

/// Timings and edge channels of the converter at its operating point.
SensitivityChain build_chain(const ConverterSpec& spec, const OperatingPoint& op);

class ClosedLoopEvaluator {
 public:
  ClosedLoopEvaluator(LiftedModel model, SmallSignalBlocks blocks, SensitivityChain chain);

  const LiftedModel& model() const { return model_; }
  const SmallSignalBlocks& blocks() const { return blocks_; }
  const SensitivityChain& chain() const { return chain_; }
  int order() const { return blocks_.order; }
  double omega() const { return blocks_.omega; }

  /// Circuit inputs, timing controls and integrated controls.
  std::vector<std::string> controls() const;

  /// sE - A - sum_t e^{-sD_t} beta_t G_t.
  cmat system_matrix(std::complex<double> s) const;
  /// Right-hand side for a unit perturbation of <u>_0.
  cvec excitation(const std::string& control, std::complex<double> s) const;
  /// Stacked state perturbation per unit control.
  cvec solve(const std::string& control, std::complex<double> s) const;
  /// H_{m0}(s) from `control` to the output or state `output`.
  std::complex<double> response(const std::string& control, const std::string& output, int m,
                                std::complex<double> s) const;

 private:
  LiftedModel model_;
  SmallSignalBlocks blocks_;
  SensitivityChain chain_;
  std::vector<cvec> beta_;  // per timing: sum of B_s edge columns driven by it
  cmat sE_minus_A_;
};

ClosedLoopEvaluator assemble(const OperatingPoint& op, SensitivityChain chain);
ClosedLoopEvaluator assemble(const ConverterSpec& spec, const OperatingPoint& op);

/// Throws excluded_frequency if s lies within 1e-6 relative of jk omega, k != 0.
void check_frequency(std::complex<double> s, double omega);

/// Evaluates H_{m0} at every s; points are independent and evaluated on up to
/// `threads` workers (0 = hardware concurrency), results in input order.
FrequencyResponse frequency_response(const ClosedLoopEvaluator& ev, const std::string& input,
                                     const std::string& output, int m,
                                     const std::vector<std::complex<double>>& s_list,
                                     unsigned threads = 0);

/// Same pipeline at a reduced truncation order (0: moving average, 1:
/// fundamental harmonic), labelled as a baseline.
FrequencyResponse baseline_response(const ConverterSpec& spec, int order, const std::string& input,
                                    const std::string& output, int m,
                                    const std::vector<std::complex<double>>& s_list,
                                    const SolverSettings& settings = {});

/// Baseline order used for a converter: 0 for CCM PWM, 1 otherwise (a DCM
/// extinction constraint and a COT comparator need a ripple).
int baseline_order(const ConverterSpec& spec);

/// `points` log-spaced frequencies in [fmin, fmax]; any point within 1e-5
/// relative of a multiple of fs is moved 1e-4 below it.
std::vector<double> frequency_grid(double fmin, double fmax, int points, double fs);

std::vector<std::complex<double>> imaginary_axis(const std::vector<double>& frequencies);

}  // namespace gam
