#pragma once

#include <map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qco/block_tensor.hpp"

namespace qco {

// Matrix adjoint of a gate-layout tensor (out1, out2, in1, in2).
BlockTensor gate_adjoint(const BlockTensor& g);

// Riemann gradient: X = 1/2 (U^dag grad - grad^dag U), skew-Hermitian per
// charge block. `grad` is the Euclidean adjoint dL/dRe + i dL/dIm.
BlockTensor lift(const BlockTensor& u, const BlockTensor& grad);

// Geodesic update U exp(-eta X) for skew-Hermitian X, computed per fused
// charge block through an eigendecomposition of the Hermitian iX.
BlockTensor retract(const BlockTensor& u, const BlockTensor& x, double eta);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double eta = 0.01;
};

// ADAM moments over Riemann gradients; second moments are kept separately for
// the real and imaginary parts.
struct AdamState {
  AdamConfig cfg;
  std::int64_t t = 0;
  std::map<int, BlockTensor> m;
  std::map<int, BlockTensor> v_re, v_im;  // elementwise nonnegative, stored real
};

AdamState make_adam_state(const std::vector<int>& param_ids, const AdamConfig& cfg = {});

// One optimizer step over all parameters present in `grads`; the scaled
// update is re-projected to skew-Hermitian before the retraction. Throws if a
// gradient id is unknown to the state.
void adam_step(AdamState& state, const std::map<int, BlockTensor>& grads,
               std::map<int, BlockTensor>& params);

nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

}  // namespace qco
