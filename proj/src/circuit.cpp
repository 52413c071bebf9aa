#include "gam/circuit.hpp"

#include <cmath>
#include <set>

namespace gam {

namespace {

template <class Decl>
std::optional<int> find_named(const std::vector<Decl>& list, const std::string& name) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i].name == name) return static_cast<int>(i);
  return std::nullopt;
}

void require_unique(std::set<std::string>& seen, const std::string& name, const char* what) {
  if (name.empty()) fail(ErrorKind::description, std::string(what) + " with an empty name");
  if (!seen.insert(name).second)
    fail(ErrorKind::description, "name '" + name + "' declared twice (" + what + ")");
}

}  // namespace

std::optional<int> CircuitDescription::state_index(const std::string& name) const {
  return find_named(states, name);
}
std::optional<int> CircuitDescription::input_index(const std::string& name) const {
  return find_named(inputs, name);
}
std::optional<int> CircuitDescription::output_index(const std::string& name) const {
  return find_named(outputs, name);
}
std::optional<int> CircuitDescription::switch_index(const std::string& name) const {
  for (std::size_t i = 0; i < switches.size(); ++i)
    if (switches[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

void validate(const CircuitDescription& desc) {
  if (desc.states.empty()) fail(ErrorKind::description, "circuit declares no states");
  std::set<std::string> seen;
  for (const auto& s : desc.states) {
    require_unique(seen, s.name, "state");
    if (!(s.energy > 0) || !std::isfinite(s.energy))
      fail(ErrorKind::validation, "state '" + s.name + "' needs a positive energy coefficient");
  }
  for (const auto& u : desc.inputs) {
    require_unique(seen, u.name, "input");
    if (!std::isfinite(u.value))
      fail(ErrorKind::validation, "input '" + u.name + "' has a non-finite value");
  }
  for (const auto& s : desc.switches) require_unique(seen, s, "switch");
  for (const auto& o : desc.outputs) {
    // an output may share its name with a state only if it is that state
    if (desc.state_index(o.name)) {
      if (o.weights.size() != 1 || o.weights[0].first != o.name || o.weights[0].second != 1.0)
        fail(ErrorKind::description, "output '" + o.name + "' shadows a state");
    } else {
      require_unique(seen, o.name, "output");
    }
    if (o.weights.empty()) fail(ErrorKind::description, "output '" + o.name + "' is empty");
    for (const auto& [state, weight] : o.weights) {
      if (!desc.state_index(state))
        fail(ErrorKind::description,
             "output '" + o.name + "' references undeclared state '" + state + "'");
      if (!std::isfinite(weight))
        fail(ErrorKind::validation, "output '" + o.name + "' has a non-finite weight");
    }
  }
  for (const auto& t : desc.terms) {
    if (!desc.state_index(t.equation))
      fail(ErrorKind::description, "term targets undeclared state '" + t.equation + "'");
    if (!std::isfinite(t.coefficient))
      fail(ErrorKind::validation, "term in equation '" + t.equation + "' has a non-finite coefficient");
    for (const auto& s : t.switches)
      if (!desc.switch_index(s))
        fail(ErrorKind::description, "term references undeclared switch '" + s + "'");
    if (!t.operand.empty() && !desc.state_index(t.operand) && !desc.input_index(t.operand) &&
        !desc.output_index(t.operand))
      fail(ErrorKind::description, "term references undeclared operand '" + t.operand + "'");
  }
}

std::vector<ResolvedTerm> resolve_terms(const CircuitDescription& desc) {
  validate(desc);
  std::vector<ResolvedTerm> out;
  for (const auto& t : desc.terms) {
    ResolvedTerm r;
    r.equation = *desc.state_index(t.equation);
    r.coefficient = t.coefficient;
    for (const auto& s : t.switches) r.switches.push_back(*desc.switch_index(s));
    if (t.operand.empty()) {
      r.kind = OperandKind::unit;
      r.operand = -1;
      out.push_back(r);
    } else if (auto si = desc.state_index(t.operand)) {
      r.kind = OperandKind::state;
      r.operand = *si;
      out.push_back(r);
    } else if (auto ui = desc.input_index(t.operand)) {
      r.kind = OperandKind::input;
      r.operand = *ui;
      out.push_back(r);
    } else {
      const auto& o = desc.outputs[*desc.output_index(t.operand)];
      for (const auto& [state, weight] : o.weights) {
        ResolvedTerm e = r;
        e.kind = OperandKind::state;
        e.operand = *desc.state_index(state);
        e.coefficient = t.coefficient * weight;
        out.push_back(e);
      }
    }
  }
  return out;
}

cvec stack(const std::vector<HarmonicVectord>& parts) {
  if (parts.empty()) return cvec();
  const Eigen::Index b = parts.front().size();
  cvec out(b * static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].size() != b) fail(ErrorKind::domain, "stack: truncation orders differ");
    out.segment(static_cast<Eigen::Index>(i) * b, b) = parts[i].coeffs();
  }
  return out;
}

std::vector<HarmonicVectord> unstack(const cvec& stacked, int count, double omega) {
  if (count <= 0 || stacked.size() % count != 0)
    fail(ErrorKind::domain, "unstack: size is not a multiple of the state count");
  const Eigen::Index b = stacked.size() / count;
  std::vector<HarmonicVectord> out;
  for (int i = 0; i < count; ++i)
    out.push_back(HarmonicVectord::real_part_of(stacked.segment(i * b, b), omega, 1e-8,
                                                      stacked.cwiseAbs().maxCoeff()));
  return out;
}

LiftedModel::LiftedModel(CircuitDescription desc, int order, double omega)
    : desc_(std::move(desc)), order_(order), omega_(omega) {
  if (order < 0) fail(ErrorKind::domain, "truncation order must be >= 0");
  if (!(omega > 0)) fail(ErrorKind::domain, "fundamental angular frequency must be positive");
  terms_ = resolve_terms(desc_);
  energy_.resize(state_count());
  for (int i = 0; i < state_count(); ++i) energy_(i) = desc_.states[i].energy;
}

void LiftedModel::check_signals(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                                const std::vector<HarmonicVectord>& switches) const {
  if (x.size() != dimension()) fail(ErrorKind::domain, "state vector has the wrong dimension");
  if (inputs.size() != desc_.inputs.size())
    fail(ErrorKind::domain, "wrong number of input vectors");
  if (switches.size() != desc_.switches.size())
    fail(ErrorKind::domain, "wrong number of switching-signal vectors");
  auto check = [&](const HarmonicVectord& v) {
    if (v.order() != order_ || std::abs(v.omega() - omega_) > 1e-12 * omega_)
      fail(ErrorKind::domain, "signal vector does not match the model order or frequency");
  };
  for (const auto& v : inputs) check(v);
  for (const auto& v : switches) check(v);
}

HarmonicVectord LiftedModel::product(const ResolvedTerm& term,
                                     const std::vector<HarmonicVectord>& switches) const {
  HarmonicVectord p = switches[term.switches.front()];
  for (std::size_t k = 1; k < term.switches.size(); ++k)
    p = convolve(p, switches[term.switches[k]]);
  return p;
}

cvec LiftedModel::rhs(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                      const std::vector<HarmonicVectord>& switches) const {
  check_signals(x, inputs, switches);
  const int b = block();
  cvec out = cvec::Zero(dimension());
  for (const auto& t : terms_) {
    HarmonicVectord operand(order_, omega_);
    switch (t.kind) {
      case OperandKind::unit: operand = HarmonicVectord::unit(order_, omega_); break;
      case OperandKind::state:
        operand = HarmonicVectord::real_part_of(x.segment(t.operand * b, b), omega_, 1e-8,
                                                   x.cwiseAbs().maxCoeff());
        break;
      case OperandKind::input: operand = inputs[t.operand]; break;
    }
    const auto value = t.switches.empty() ? operand : convolve(product(t, switches), operand);
    out.segment(t.equation * b, b) += t.coefficient * value.coeffs();
  }
  const auto n = index_matrix<double>(order_);
  for (int i = 0; i < state_count(); ++i)
    out.segment(i * b, b) -= std::complex<double>(0, omega_ * energy_(i)) *
                             (n * x.segment(i * b, b)).eval();
  return out;
}

cvec LiftedModel::derivative(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                             const std::vector<HarmonicVectord>& switches) const {
  cvec d = rhs(x, inputs, switches);
  const int b = block();
  for (int i = 0; i < state_count(); ++i) d.segment(i * b, b) /= energy_(i);
  return d;
}

cmat LiftedModel::state_matrix(const std::vector<HarmonicVectord>& switches) const {
  if (switches.size() != desc_.switches.size())
    fail(ErrorKind::domain, "wrong number of switching-signal vectors");
  const int b = block();
  cmat a = cmat::Zero(dimension(), dimension());
  for (const auto& t : terms_) {
    if (t.kind != OperandKind::state) continue;
    auto blk = a.block(t.equation * b, t.operand * b, b, b);
    if (t.switches.empty())
      blk.diagonal().array() += t.coefficient;
    else
      blk += t.coefficient * toeplitz(product(t, switches));
  }
  for (int i = 0; i < state_count(); ++i)
    for (int n = -order_; n <= order_; ++n)
      a(i * b + n + order_, i * b + n + order_) -= std::complex<double>(0, n * omega_ * energy_(i));
  return a;
}

cvec LiftedModel::source_vector(const std::vector<HarmonicVectord>& inputs,
                                const std::vector<HarmonicVectord>& switches) const {
  const int b = block();
  cvec x0 = cvec::Zero(dimension());
  check_signals(x0, inputs, switches);
  cvec out = cvec::Zero(dimension());
  for (const auto& t : terms_) {
    if (t.kind == OperandKind::state) continue;
    const HarmonicVectord operand =
        t.kind == OperandKind::unit ? HarmonicVectord::unit(order_, omega_) : inputs[t.operand];
    const auto value = t.switches.empty() ? operand : convolve(product(t, switches), operand);
    out.segment(t.equation * b, b) += t.coefficient * value.coeffs();
  }
  return out;
}

SmallSignalBlocks LiftedModel::linearize(const cvec& x, const std::vector<HarmonicVectord>& inputs,
                                         const std::vector<HarmonicVectord>& switches) const {
  check_signals(x, inputs, switches);
  const int b = block();
  SmallSignalBlocks blocks;
  blocks.order = order_;
  blocks.omega = omega_;
  blocks.energy.resize(dimension());
  for (int i = 0; i < state_count(); ++i) blocks.energy.segment(i * b, b).setConstant(energy_(i));
  blocks.A = state_matrix(switches);
  blocks.B_s.assign(desc_.switches.size(), cmat::Zero(dimension(), b));
  blocks.B_u.assign(desc_.inputs.size(), cmat::Zero(dimension(), b));

  for (const auto& t : terms_) {
    // operand as a Toeplitz operator, and the product prefixes p_1..p_K
    HarmonicVectord operand(order_, omega_);
    switch (t.kind) {
      case OperandKind::unit: operand = HarmonicVectord::unit(order_, omega_); break;
      case OperandKind::state:
        operand = HarmonicVectord::real_part_of(x.segment(t.operand * b, b), omega_, 1e-8,
                                                   x.cwiseAbs().maxCoeff());
        break;
      case OperandKind::input: operand = inputs[t.operand]; break;
    }
    if (t.kind == OperandKind::input) {
      auto blk = blocks.B_u[t.operand].middleRows(t.equation * b, b);
      if (t.switches.empty())
        blk.diagonal().array() += t.coefficient;
      else
        blk += t.coefficient * toeplitz(product(t, switches));
    }
    const std::size_t k = t.switches.size();
    if (k == 0) continue;
    std::vector<HarmonicVectord> prefix;
    prefix.push_back(switches[t.switches[0]]);
    for (std::size_t j = 1; j < k; ++j)
      prefix.push_back(convolve(prefix.back(), switches[t.switches[j]]));

    const cmat op = toeplitz(operand);
    for (std::size_t j = 0; j < k; ++j) {
      // d p_K / d f_j = [f_K] ... [f_{j+1}] [p_{j-1}]
      cmat d = j == 0 ? cmat(cmat::Identity(b, b)) : toeplitz(prefix[j - 1]);
      for (std::size_t i = j + 1; i < k; ++i) d = toeplitz(switches[t.switches[i]]) * d;
      blocks.B_s[t.switches[j]].middleRows(t.equation * b, b) += t.coefficient * (op * d);
    }
  }
  for (const auto& o : desc_.outputs) blocks.C.push_back(output_matrix(o.name));
  return blocks;
}

cmat LiftedModel::output_matrix(const std::string& name) const {
  const int b = block();
  cmat c = cmat::Zero(b, dimension());
  if (auto oi = desc_.output_index(name)) {
    for (const auto& [state, weight] : desc_.outputs[*oi].weights) {
      const int si = *desc_.state_index(state);
      c.block(0, si * b, b, b).diagonal().array() += weight;
    }
    return c;
  }
  if (auto si = desc_.state_index(name)) {
    c.block(0, *si * b, b, b).setIdentity();
    return c;
  }
  fail(ErrorKind::domain, "unknown output or state '" + name + "'");
}

HarmonicVectord LiftedModel::signal(const std::string& name, const cvec& x) const {
  if (x.size() != dimension()) fail(ErrorKind::domain, "state vector has the wrong dimension");
  return HarmonicVectord::real_part_of(output_matrix(name) * x, omega_, 1e-8,
                                        x.cwiseAbs().maxCoeff());
}

std::vector<HarmonicVectord> LiftedModel::input_vectors() const {
  std::vector<HarmonicVectord> out;
  for (const auto& u : desc_.inputs) out.push_back(HarmonicVectord::constant(u.value, order_, omega_));
  return out;
}

}  // namespace gam
