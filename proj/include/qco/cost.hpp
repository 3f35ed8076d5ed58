#pragma once

#include <map>
#include <vector>

#include "qco/autodiff.hpp"
#include "qco/circuit.hpp"
#include "qco/mps.hpp"

namespace qco {

// Scalar objective driving the optimization: plain energy, or a fidelity
// distance to a target state (negative log of the total fidelity, or of the
// mean subspace fidelity over the interior cuts).
struct CostFunction {
  enum class Kind { Energy, NegLogTotalFidelity, MeanNegLogSubspaceFidelity };
  Kind kind = Kind::Energy;
  MpoOperator h;
  MpsState target;
};

CostFunction energy_cost(MpoOperator h);
CostFunction neg_log_total_fidelity_cost(MpsState target);
CostFunction mean_neg_log_subspace_cost(MpsState target);

double total_fidelity(const MpsState& target, const MpsState& state);
// Errors with "vanishing overlap" when the fidelity falls below 1e-300.
double neg_log_total_fidelity(const MpsState& target, const MpsState& state);

// F_1..F_L: Uhlmann fidelities of the reduced density operators on sites
// 1..i, computed from one extra SVD per cut; F_L is the total fidelity.
std::vector<double> subspace_fidelity_profile(const MpsState& target, const MpsState& state);
// -(1/(L-1)) sum_i log F_i over the L-1 interior cuts, logs floored as above.
double mean_neg_log_subspace(const MpsState& target, const MpsState& state);

double evaluate_cost(const CostFunction& cost, const MpsState& state);

struct CostGradient {
  double value = 0.0;
  std::map<int, BlockTensor> grads;  // Euclidean adjoints per parameter id
  double total_discarded = 0.0;
  ad::Diagnostics diagnostics;
};

// Differentiates cost(apply_circuit(init)) end to end through the TEBD
// evolution, including all truncations.
CostGradient cost_and_gradient(const CostFunction& cost, const Circuit& circuit,
                               const MpsState& init, const TruncationPolicy& policy);

}  // namespace qco
