#pragma once

// Switched state-space circuits E dx/dt = sum of terms, each term a constant
// times a product of switching signals times one operand, and their lifted
// (moving-coefficient) and linearized forms.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gam/fourier.hpp"

namespace gam {

using cvec = ComplexVector<double>;
using cmat = ComplexMatrix<double>;
using crow = ComplexRowVector<double>;

struct StateDecl {
  std::string name;
  double energy;  // H for an inductor current, F for a capacitor voltage
};

struct InputDecl {
  std::string name;
  double value;
};

/// coefficient * switches[0] * switches[1] * ... * operand, added to the
/// equation of state `equation`. An empty operand stands for the constant 1;
/// an operand may also name an output, which expands into its states.
struct Term {
  std::string equation;
  double coefficient = 0;
  std::vector<std::string> switches;
  std::string operand;
};

struct OutputDecl {
  std::string name;
  std::vector<std::pair<std::string, double>> weights;  // state name, weight
};

struct CircuitDescription {
  std::vector<StateDecl> states;
  std::vector<InputDecl> inputs;
  std::vector<std::string> switches;
  std::vector<Term> terms;
  std::vector<OutputDecl> outputs;

  std::optional<int> state_index(const std::string& name) const;
  std::optional<int> input_index(const std::string& name) const;
  std::optional<int> switch_index(const std::string& name) const;
  std::optional<int> output_index(const std::string& name) const;
};

/// Throws ErrorKind::description for unresolved names and duplicate
/// declarations, ErrorKind::validation for non-positive energies and
/// non-finite coefficients.
void validate(const CircuitDescription& desc);

enum class OperandKind { unit, state, input };

struct ResolvedTerm {
  int equation;
  double coefficient;
  std::vector<int> switches;
  OperandKind kind;
  int operand;  // state or input index; unused for unit
};

/// Terms with output operands expanded and every name replaced by its index.
std::vector<ResolvedTerm> resolve_terms(const CircuitDescription& desc);

/// Jacobian blocks of the lifted right-hand side at one operating point. All
/// blocks act on stacked coefficient vectors, state i occupying rows
/// i(2N+1) .. i(2N+1)+2N.
struct SmallSignalBlocks {
  int order = 0;
  double omega = 0;
  Eigen::VectorXd energy;       // diagonal of E over the stacked coefficients
  cmat A;                       // includes -jN omega E
  std::vector<cmat> B_s;        // one (states*(2N+1)) x (2N+1) block per switch
  std::vector<cmat> B_u;        // one block per input
  std::vector<cmat> C;          // one (2N+1) x (states*(2N+1)) row block per output
};

/// Stacks per-state harmonic vectors into one coefficient vector and back.
cvec stack(const std::vector<HarmonicVectord>& parts);
std::vector<HarmonicVectord> unstack(const cvec& stacked, int count, double omega);

class LiftedModel {
 public:
  LiftedModel(CircuitDescription desc, int order, double omega);

  const CircuitDescription& description() const { return desc_; }
  int order() const { return order_; }
  double omega() const { return omega_; }
  int block() const { return 2 * order_ + 1; }
  int state_count() const { return static_cast<int>(desc_.states.size()); }
  int dimension() const { return state_count() * block(); }
  const Eigen::VectorXd& energy() const { return energy_; }
  const std::vector<ResolvedTerm>& terms() const { return terms_; }

  /// E d<x>/dtau: every term convolved in the canonical order (switch
  /// product left to right, then the operand), minus jN omega E <x>.
  cvec rhs(const cvec& x, const std::vector<HarmonicVectord>& inputs,
           const std::vector<HarmonicVectord>& switches) const;

  /// d<x>/dtau.
  cvec derivative(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                  const std::vector<HarmonicVectord>& switches) const;

  /// rhs = state_matrix * x + source_vector, split for the equilibrium solve.
  cmat state_matrix(const std::vector<HarmonicVectord>& switches) const;
  cvec source_vector(const std::vector<HarmonicVectord>& inputs,
                     const std::vector<HarmonicVectord>& switches) const;

  SmallSignalBlocks linearize(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                              const std::vector<HarmonicVectord>& switches) const;

  /// (2N+1) x dimension() selection of one output (or one state by name).
  cmat output_matrix(const std::string& name) const;

  /// Coefficients of a named output or state.
  HarmonicVectord signal(const std::string& name, const cvec& x) const;

  std::vector<HarmonicVectord> input_vectors() const;

 private:
  void check_signals(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                     const std::vector<HarmonicVectord>& switches) const;
  HarmonicVectord product(const ResolvedTerm& term,
                          const std::vector<HarmonicVectord>& switches) const;

  CircuitDescription desc_;
  int order_;
  double omega_;
  Eigen::VectorXd energy_;
  std::vector<ResolvedTerm> terms_;
};

}  // namespace gam
