#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qco/charges.hpp"

namespace qco {

using Complex = std::complex<double>;

// Dense row-major array of complex values.
struct DenseBlock {
  std::vector<std::int64_t> shape;
  std::vector<Complex> data;

  DenseBlock() = default;
  explicit DenseBlock(std::vector<std::int64_t> sh);
  std::int64_t size() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

DenseBlock permute_dense(const DenseBlock& b, const std::vector<int>& perm);

// One charge per index; only keys whose signed charges fuse to the identity
// are storable.
using BlockKey = std::vector<Charge>;

class BlockTensor {
 public:
  BlockTensor() = default;
  explicit BlockTensor(std::vector<IndexSpace> spaces);

  int rank() const { return static_cast<int>(spaces_.size()); }
  const std::vector<IndexSpace>& spaces() const { return spaces_; }
  const IndexSpace& space(int i) const { return spaces_.at(static_cast<std::size_t>(i)); }

  const std::map<BlockKey, DenseBlock>& blocks() const { return blocks_; }
  std::map<BlockKey, DenseBlock>& blocks() { return blocks_; }

  bool admissible(const BlockKey& key) const;
  std::vector<std::int64_t> block_shape(const BlockKey& key) const;

  // Returns the block for `key`, creating it zero-filled; throws on
  // charge-violating keys.
  DenseBlock& block(const BlockKey& key);
  const DenseBlock* find(const BlockKey& key) const;
  void insert(const BlockKey& key, DenseBlock b);

  double norm2() const;
  double norm() const;
  bool is_zero(double tol = 0.0) const;

  BlockTensor& operator+=(const BlockTensor& o);
  BlockTensor& operator-=(const BlockTensor& o);
  BlockTensor& operator*=(Complex c);

  // Drops blocks with norm exactly zero (used to keep maps tidy).
  void prune(double tol = 0.0);

  // Structural self-check; throws on violated invariants.
  void check() const;

 private:
  std::vector<IndexSpace> spaces_;
  std::map<BlockKey, DenseBlock> blocks_;
};

BlockTensor operator+(BlockTensor a, const BlockTensor& b);
BlockTensor operator-(BlockTensor a, const BlockTensor& b);
BlockTensor operator*(Complex c, BlockTensor t);

// Elementwise conjugate; flips every arrow so the result contracts against
// the legs the original tensor's legs contracted against.
BlockTensor conj(const BlockTensor& t);

// perm[i] = index of the original tensor that becomes index i.
BlockTensor permuted(const BlockTensor& t, const std::vector<int>& perm);

// Pairwise contraction over `pairs` of (index-of-a, index-of-b). Result
// carries the unpaired indices of a then of b, in order.
BlockTensor contract(const BlockTensor& a, const BlockTensor& b,
                     const std::vector<std::pair<int, int>>& pairs);

// Inner product <a|b> = contract(conj(a), b) over all legs.
Complex dot(const BlockTensor& a, const BlockTensor& b);

struct TruncationPolicy {
  std::int64_t chi_max = 1'000'000'000;
  double cutoff = 0.0;  // relative to the largest singular value
};

// Nonnegative singular values per charge of a bond space.
struct SingularSpectrum {
  IndexSpace space;  // Out-directed bond as it appears on u's last leg
  std::map<Charge, std::vector<double>> values;

  double sum() const;
  double norm2() const;
};

// Full (pre-truncation) factors saved for differentiation.
struct SvdSaved {
  // Per fused charge: A_c = U_c diag(s_c) Vh_c, thin full-rank factors.
  struct ChargeFactors {
    std::vector<Complex> u;   // rows x r, row-major
    std::vector<double> s;    // r
    std::vector<Complex> vh;  // r x cols, row-major
    std::int64_t rows = 0, cols = 0, r = 0, kept = 0;
  };
  std::map<Charge, ChargeFactors> factors;
  // Row/col combo layouts per fused charge (keys into the original tensor).
  struct Combo {
    BlockKey key;
    std::int64_t dim = 0, offset = 0;
  };
  std::map<Charge, std::vector<Combo>> row_combos, col_combos;
  int n_left = 0;
  std::vector<IndexSpace> spaces;
};

struct SvdResult {
  BlockTensor u;        // (left..., bond Out)
  SingularSpectrum s;   // kept values
  BlockTensor v;        // (bond In, right...), rows of V^dagger
  double discarded_weight = 0.0;
};

// Truncated SVD across the bipartition (first n_left legs | rest). Singular
// values are sorted descending globally across charges before truncation.
SvdResult svd_truncated(const BlockTensor& t, int n_left, const TruncationPolicy& policy,
                        SvdSaved* saved = nullptr);
// Convenience overload taking an arbitrary left index subset.
SvdResult svd_truncated(const BlockTensor& t, const std::vector<int>& left,
                        const TruncationPolicy& policy);

struct QrResult {
  BlockTensor q;  // (left..., bond Out), isometric
  BlockTensor r;  // (bond In, right...), upper-triangular, positive diagonal
};
QrResult qr_positive(const BlockTensor& t, int n_left);

struct LqResult {
  BlockTensor l;  // (left..., bond Out), lower-triangular, positive diagonal
  BlockTensor q;  // (bond In, right...), rows orthonormal
};
LqResult lq_positive(const BlockTensor& t, int n_left);

// m = r q with r upper-triangular; the left-factor convention matching the
// R-factors of qr_positive, which makes canonical sweeps reproducible.
struct RqResult {
  BlockTensor r;  // (left..., bond Out), upper-triangular, positive diagonal
  BlockTensor q;  // (bond In, right...), rows orthonormal
};
RqResult rq_positive(const BlockTensor& t, int n_left);

// Embeds a spectrum as a diagonal rank-2 tensor (In(bond), Out(bond)).
BlockTensor diag_tensor(const SingularSpectrum& s);

// Identity on `space`: legs (In(sectors), Out(sectors)) matching a bond.
BlockTensor identity_tensor(const IndexSpace& space);

// Moore-Penrose inverse of a rank-2 tensor, discarding singular values below
// tol * s_max. Result has the same (In, Out) leg layout.
BlockTensor pinv(const BlockTensor& c, double tol = 1e-12);

// Two-site unitary exp(eps*K), K block-wise skew-Hermitian with iid normal
// entries. Legs: (Out s1, Out s2, In s1, In s2). With swap_symmetric (needs
// site1 == site2) the generator is symmetrized under spatial swap, so the
// gate commutes with site exchange conjugation.
BlockTensor random_unitary(const IndexSpace& site1, const IndexSpace& site2, double eps,
                           std::mt19937_64& rng, bool swap_symmetric = false);

// Dense bridge. Layout: row-major over indices, sectors in listed order.
DenseBlock to_dense(const BlockTensor& t);
BlockTensor from_dense(const DenseBlock& dense, const std::vector<IndexSpace>& spaces,
                       double tol = 1e-12);

// "gt1" JSON container.
nlohmann::json tensor_to_json(const BlockTensor& t);
BlockTensor tensor_from_json(const nlohmann::json& j);
nlohmann::json space_to_json(const IndexSpace& s);
IndexSpace space_from_json(const nlohmann::json& j);

}  // namespace qco
