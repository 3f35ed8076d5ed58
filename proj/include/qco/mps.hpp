#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qco/block_tensor.hpp"

namespace qco {

// Matrix product state in the A/C representation: left-canonical site tensors
// A(n) with legs (left In, physical Out, right Out) and bond matrices C(n)
// with legs (In, Out) sitting right of site n. c[0] is the trivial left
// boundary, so the state as a vector is A(1)...A(L) C(L).
struct MpsState {
  std::vector<BlockTensor> a;  // a[0..L-1]
  std::vector<BlockTensor> c;  // c[0..L]

  int length() const { return static_cast<int>(a.size()); }
  const IndexSpace& phys(int n) const { return a.at(static_cast<std::size_t>(n)).space(1); }
  double norm() const { return c.back().norm(); }
  // Total charge of the state (fused physical charges).
  Charge sector() const;
};

// Matrix product operator: rank-4 site tensors with legs
// (left-virtual In, phys-out Out, phys-in In, right-virtual Out) and dim-1
// charge-0 boundary virtual legs.
struct MpoOperator {
  std::vector<BlockTensor> w;
  bool hermitian = false;

  int length() const { return static_cast<int>(w.size()); }
};

// Product state from one basis index per site (dense index in sector order).
// When `sector` is given, the fused configuration charge must match.
MpsState product_state(const IndexSpace& phys, const std::vector<int>& config,
                       std::optional<Charge> sector = std::nullopt);
// Product state of arbitrary local vectors (size d each); with a nontrivial
// group every local vector must be supported on a single charge sector.
MpsState product_state(const IndexSpace& phys, const std::vector<std::vector<Complex>>& locals,
                       std::optional<Charge> sector = std::nullopt);

// Restores the left-canonical invariant: LQ sweep right-to-left, then QR sweep
// left-to-right; all C(n) are the R-factors of the second sweep.
MpsState canonicalize(const MpsState& state);

// B(n) = C(n-1)^{-1} A(n) C(n), right-canonical; n is 1-based.
BlockTensor b_tensor(const MpsState& state, int n, double pinv_tol = 1e-12);

// <bra|ket>; different total sectors give an exact structural zero.
Complex overlap(const MpsState& bra, const MpsState& ket);

// <state|op|state>; asserts the imaginary part below 1e-10 for Hermitian ops.
double expectation(const MpsState& state, const MpoOperator& op);

// Dense bridges. The dense layout is row-major over sites with each physical
// index in sector order; `sector` selects the charge block the vector lives in.
MpsState dense_to_mps(const std::vector<Complex>& vec, const IndexSpace& phys, int L,
                      const TruncationPolicy& policy, Charge sector = 0);
std::vector<Complex> mps_to_dense(const MpsState& state);

// "mps1" JSON container.
nlohmann::json mps_to_json(const MpsState& state);
MpsState mps_from_json(const nlohmann::json& j);

}  // namespace qco
