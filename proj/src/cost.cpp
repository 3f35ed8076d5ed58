#include "qco/cost.hpp"

#include <cmath>
#include <stdexcept>

namespace qco {

namespace {

constexpr double kFidelityFloor = 1e-300;

double floored_log(double f) {
  if (f <= kFidelityFloor)
    throw std::runtime_error("vanishing overlap: disconnected sector or bad initialization");
  return std::log(f);
}

void check_target(const MpsState& target) {
  if (std::abs(target.norm() - 1.0) > 1e-10)
    throw std::invalid_argument("cost: target state must be normalized");
}

// Left partial-overlap environment between bra `target` and ket `state`
// after each site; env[i] covers sites 1..i, legs (In bra-bond, Out ket-bond).
BlockTensor initial_env(const MpsState& bra, const IndexSpace& ket_left) {
  BlockTensor env({bra.a[0].space(0), ket_left.flipped()});
  const Charge qb = bra.a[0].space(0).sectors.front().charge;
  const Charge qk = ket_left.sectors.front().charge;
  if (qb == qk) env.block({qb, qk}).data[0] = 1.0;
  return env;
}

// M_i = C_i^{target dagger} E_i C_i^{state}, legs (In, Out).
BlockTensor cut_matrix(const BlockTensor& env, const BlockTensor& c_target,
                       const BlockTensor& c_state) {
  BlockTensor t = contract(env, c_state, {{1, 0}});
  return contract(conj(c_target), t, {{0, 0}});
}

double cut_fidelity(const BlockTensor& m) {
  if (m.is_zero()) return 0.0;  // no compatible charge sectors at this cut
  SvdResult r = svd_truncated(m, 1, {});
  const double s = r.s.sum();
  return s * s;
}

}  // namespace

CostFunction energy_cost(MpoOperator h) {
  if (!h.hermitian) throw std::invalid_argument("energy_cost: operator must be Hermitian-flagged");
  CostFunction c;
  c.kind = CostFunction::Kind::Energy;
  c.h = std::move(h);
  return c;
}

CostFunction neg_log_total_fidelity_cost(MpsState target) {
  check_target(target);
  CostFunction c;
  c.kind = CostFunction::Kind::NegLogTotalFidelity;
  c.target = std::move(target);
  return c;
}

CostFunction mean_neg_log_subspace_cost(MpsState target) {
  check_target(target);
  CostFunction c;
  c.kind = CostFunction::Kind::MeanNegLogSubspaceFidelity;
  c.target = std::move(target);
  return c;
}

double total_fidelity(const MpsState& target, const MpsState& state) {
  return std::norm(overlap(target, state));
}

double neg_log_total_fidelity(const MpsState& target, const MpsState& state) {
  return -floored_log(total_fidelity(target, state));
}

std::vector<double> subspace_fidelity_profile(const MpsState& target, const MpsState& state) {
  if (target.length() != state.length())
    throw std::invalid_argument("subspace_fidelity_profile: length mismatch");
  const int L = state.length();
  std::vector<double> profile;
  profile.reserve(static_cast<std::size_t>(L));
  BlockTensor env = initial_env(target, state.a[0].space(0));
  for (int n = 0; n < L; ++n) {
    const auto i = static_cast<std::size_t>(n);
    BlockTensor t = contract(env, state.a[i], {{1, 0}});
    env = contract(conj(target.a[i]), t, {{0, 0}, {1, 1}});
    profile.push_back(cut_fidelity(cut_matrix(env, target.c[i + 1], state.c[i + 1])));
  }
  return profile;
}

double mean_neg_log_subspace(const MpsState& target, const MpsState& state) {
  std::vector<double> profile = subspace_fidelity_profile(target, state);
  const int L = state.length();
  double acc = 0.0;
  for (int i = 0; i + 1 < L; ++i) acc += floored_log(profile[static_cast<std::size_t>(i)]);
  return -acc / static_cast<double>(L - 1);
}

double evaluate_cost(const CostFunction& cost, const MpsState& state) {
  switch (cost.kind) {
    case CostFunction::Kind::Energy:
      return expectation(state, cost.h);
    case CostFunction::Kind::NegLogTotalFidelity:
      return neg_log_total_fidelity(cost.target, state);
    case CostFunction::Kind::MeanNegLogSubspaceFidelity:
      return mean_neg_log_subspace(cost.target, state);
  }
  throw std::logic_error("evaluate_cost: unreachable");
}

namespace {

ad::NodeId tape_overlap(ad::Tape& tape, const MpsState& target, const TapeMps& st) {
  const int L = static_cast<int>(st.a.size());
  ad::NodeId env = tape.leaf(initial_env(target, tape.tensor(st.a[0]).space(0)));
  for (int n = 0; n < L; ++n) {
    const auto i = static_cast<std::size_t>(n);
    ad::NodeId t = tape.contract(env, st.a[i], {{1, 0}});
    env = tape.contract(tape.leaf(conj(target.a[i])), t, {{0, 0}, {1, 1}});
  }
  ad::NodeId t = tape.contract(env, st.c.back(), {{1, 0}});
  return tape.to_scalar(
      tape.contract(tape.leaf(conj(target.c.back())), t, {{0, 0}, {1, 1}}));
}

ad::NodeId tape_energy(ad::Tape& tape, const MpoOperator& op, const TapeMps& st) {
  const int L = static_cast<int>(st.a.size());
  if (op.length() != L) throw std::invalid_argument("cost: operator/state length mismatch");
  const IndexSpace& left0 = tape.tensor(st.a[0]).space(0);
  const IndexSpace& m0 = op.w[0].space(0);
  if (m0.sectors.size() != 1 || m0.sectors.front().charge != m0.group.identity())
    throw std::invalid_argument("cost: operator boundary must be a charge-0 singleton");
  BlockTensor env0({left0, m0.flipped(), left0.flipped()});
  const Charge q0 = left0.sectors.front().charge;
  env0.block({q0, m0.sectors.front().charge, q0}).data[0] = 1.0;
  ad::NodeId env = tape.leaf(env0);
  for (int n = 0; n < L; ++n) {
    const auto i = static_cast<std::size_t>(n);
    ad::NodeId t1 = tape.contract(env, st.a[i], {{2, 0}});
    ad::NodeId t2 = tape.contract(t1, tape.leaf(op.w[i]), {{1, 0}, {2, 2}});
    ad::NodeId t3 = tape.contract(tape.conjugate(st.a[i]), t2, {{0, 0}, {1, 2}});
    env = tape.permute(t3, {0, 2, 1});
  }
  // cap the dim-1 operator boundary, then fold C(L) on both sides
  const IndexSpace rsp = op.w.back().space(3).flipped();
  BlockTensor rcap({rsp});
  rcap.block({rsp.sectors.front().charge}).data[0] = 1.0;
  env = tape.contract(env, tape.leaf(rcap), {{1, 0}});
  ad::NodeId t = tape.contract(env, st.c.back(), {{1, 0}});
  ad::NodeId val = tape.to_scalar(
      tape.contract(tape.conjugate(st.c.back()), t, {{0, 0}, {1, 1}}));
  return tape.real_part(val);
}

ad::NodeId tape_mean_subspace(ad::Tape& tape, const MpsState& target, const TapeMps& st) {
  const int L = static_cast<int>(st.a.size());
  if (target.length() != L) throw std::invalid_argument("cost: target/state length mismatch");
  ad::NodeId env = tape.leaf(initial_env(target, tape.tensor(st.a[0]).space(0)));
  ad::NodeId acc = -1;
  for (int n = 0; n + 1 < L; ++n) {
    const auto i = static_cast<std::size_t>(n);
    ad::NodeId t = tape.contract(env, st.a[i], {{1, 0}});
    env = tape.contract(tape.leaf(conj(target.a[i])), t, {{0, 0}, {1, 1}});
    ad::NodeId tt = tape.contract(env, st.c[i + 1], {{1, 0}});
    ad::NodeId m = tape.contract(tape.leaf(conj(target.c[i + 1])), tt, {{0, 0}});
    if (tape.tensor(m).is_zero())
      throw std::runtime_error("vanishing overlap: disconnected sector or bad initialization");
    auto s = tape.svd(m, 1, {});
    ad::NodeId f = tape.square_real(tape.spectrum_sum(s.s));
    if (tape.scalar(f).real() <= kFidelityFloor)
      throw std::runtime_error("vanishing overlap: disconnected sector or bad initialization");
    ad::NodeId lg = tape.log_real(f);
    acc = acc < 0 ? lg : tape.add_scalars(acc, lg);
  }
  return tape.scale_scalar(acc, Complex(-1.0 / static_cast<double>(L - 1), 0));
}

}  // namespace

CostGradient cost_and_gradient(const CostFunction& cost, const Circuit& circuit,
                               const MpsState& init, const TruncationPolicy& policy) {
  ad::Tape tape;
  TapeMps tin = mps_to_tape(tape, init);
  std::map<int, ad::NodeId> param_nodes;
  for (const auto& [id, g] : circuit.params) param_nodes[id] = tape.leaf(g);
  CostGradient out;
  TapeMps st = apply_circuit(tape, tin, circuit, param_nodes, policy, &out.total_discarded);
  ad::NodeId loss = -1;
  switch (cost.kind) {
    case CostFunction::Kind::Energy:
      loss = tape_energy(tape, cost.h, st);
      break;
    case CostFunction::Kind::NegLogTotalFidelity: {
      ad::NodeId f = tape.abs2(tape_overlap(tape, cost.target, st));
      if (tape.scalar(f).real() <= kFidelityFloor)
        throw std::runtime_error("vanishing overlap: disconnected sector or bad initialization");
      loss = tape.scale_scalar(tape.log_real(f), Complex(-1, 0));
      break;
    }
    case CostFunction::Kind::MeanNegLogSubspaceFidelity:
      loss = tape_mean_subspace(tape, cost.target, st);
      break;
  }
  out.value = tape.scalar(loss).real();
  tape.backward(loss);
  for (const auto& [id, node] : param_nodes) out.grads[id] = tape.tensor_adjoint(node);
  out.diagnostics = tape.diagnostics;
  return out;
}

}  // namespace qco
