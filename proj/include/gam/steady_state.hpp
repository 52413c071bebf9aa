#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gam/circuit.hpp"
#include "gam/converter.hpp"
#include "gam/switching.hpp"

namespace gam {

struct SolverSettings {
  double residual_tol = 1e-8;     // waveform constraints, A or V
  double coefficient_tol = 1e-10; // equilibrium, relative
  double damping = 0.7;
  int max_iterations = 100;
  double max_condition = 1e12;
};

struct ConstraintResidual {
  std::string name;
  double value;
  int iterations;
};

struct OperatingPoint {
  std::string converter;
  ConductionMode mode = ConductionMode::ccm;
  CircuitDescription description;
  int order = 0;
  double omega = 0;
  std::vector<HarmonicVectord> states;
  std::vector<HarmonicVectord> switches;
  std::vector<SwitchingSignalState<double>> switching;
  double equilibrium_residual = 0;  // |rhs| / |x|
  std::vector<ConstraintResidual> constraints;
  std::optional<double> comparator_instant;  // cot: zero of control - kv * sense
  std::vector<std::pair<std::string, std::string>> metadata;

  double frequency() const;
  double period() const;
  cvec stacked() const;
  LiftedModel model() const;
  HarmonicVectord signal(const std::string& name) const;
};

/// <x> with rhs(<x>) = 0 for fixed switching signals and inputs: one dense
/// complex solve of size states*(2N+1).
cvec solve_equilibrium(const LiftedModel& model, const std::vector<HarmonicVectord>& switches,
                       const std::vector<HarmonicVectord>& inputs,
                       const SolverSettings& settings = {});

struct ScalarSolution {
  double x;
  double residual;
  int iterations;
  std::vector<double> history;
};

/// Damped secant on residual(x) = 0 inside (lo, hi), falling back to a
/// bracketing scan. A root outside the interval raises `outside_kind`.
ScalarSolution solve_scalar(const std::function<double(double)>& residual, double seed,
                            double lo, double hi, const SolverSettings& settings,
                            const std::string& what, ErrorKind outside_kind = ErrorKind::mode);

OperatingPoint find_operating_point(const ConverterSpec& spec, int order = 49,
                                    const SolverSettings& settings = {});

struct Waveforms {
  std::vector<double> time;
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // one column per name
};

/// States then outputs reconstructed at each grid instant of the window
/// centred at 0.
Waveforms waveforms(const OperatingPoint& op, const std::vector<double>& t_grid);

/// `points` uniformly spaced instants covering [-T/2, T/2).
std::vector<double> period_grid(const OperatingPoint& op, int points);

}  // namespace gam
