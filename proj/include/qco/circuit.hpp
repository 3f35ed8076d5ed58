#pragma once

#include <map>
#include <random>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qco/autodiff.hpp"
#include "qco/mps.hpp"

namespace qco {

// One gate placement inside a sublayer: acts on sites (bond, bond+1),
// materializing parameter `param`, optionally through the mirror transform.
struct Placement {
  int bond = 0;
  int param = 0;
  bool mirrored = false;
};

// Brick-wall circuit: per layer an odd-bond sublayer (bonds 0,2,4,... in
// 0-based labels) applied first, then the even-bond sublayer. Parameters are
// two-site unitaries with legs (out1, out2, in1, in2); with inversion
// symmetry, spatially mirrored placements share one parameter.
struct Circuit {
  int length = 0;
  IndexSpace phys;
  bool inversion_symmetric = false;
  struct Layer {
    std::vector<Placement> odd, even;
  };
  std::vector<Layer> layers;
  std::map<int, BlockTensor> params;
  int next_param = 0;

  int depth() const { return static_cast<int>(layers.size()); }
};

Circuit make_circuit(int length, const IndexSpace& phys, bool inversion_symmetric);

// Appends one layer; existing parameters are untouched, new gates are
// eps-close to the identity. Self-mirrored placements get swap-symmetric
// gates so a symmetric layer commutes with spatial inversion exactly.
void grow(Circuit& circuit, double eps, std::mt19937_64& rng);

// Swap-conjugation S g S: legs spatially reversed on inputs and outputs.
BlockTensor mirror_transform(const BlockTensor& gate);

double unitarity_error(const BlockTensor& gate);

// One TEBD step on sites (k, k+1) in the A/C representation. c1 is part of
// the interface but not consumed: the split of the gated two-site block
// regenerates the bond matrix, so no inverse of c1 is ever needed.
struct TebdStepResult {
  BlockTensor a1, c1, a2, c2;
  double discarded = 0.0;
};
TebdStepResult tebd_step(const BlockTensor& a1, const BlockTensor& c1, const BlockTensor& a2,
                         const BlockTensor& c2, const BlockTensor& gate,
                         const TruncationPolicy& policy);

struct ApplyResult {
  MpsState state;
  double total_discarded = 0.0;
  std::vector<double> per_step;
};
ApplyResult apply_circuit(const MpsState& in, const Circuit& circuit,
                          const TruncationPolicy& policy);

// Differentiable application: MPS tensors live on the tape; every TEBD step
// lands as a single fused record. Parameter adjoints accumulate into
// param_nodes (shared placements sum in reverse application order).
struct TapeMps {
  std::vector<ad::NodeId> a;  // a[0..L-1]
  std::vector<ad::NodeId> c;  // c[0..L]
};
TapeMps mps_to_tape(ad::Tape& tape, const MpsState& state);
MpsState tape_to_mps(const ad::Tape& tape, const TapeMps& nodes);

TapeMps apply_circuit(ad::Tape& tape, const TapeMps& in, const Circuit& circuit,
                      const std::map<int, ad::NodeId>& param_nodes,
                      const TruncationPolicy& policy, double* total_discarded = nullptr);

// "ckt1" checkpoint container.
nlohmann::json circuit_to_json(const Circuit& circuit);
Circuit circuit_from_json(const nlohmann::json& j);

}  // namespace qco
