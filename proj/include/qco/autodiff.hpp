#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "qco/block_tensor.hpp"

namespace qco::ad {

using NodeId = std::int32_t;

// A tape value: graded tensor, per-charge singular spectrum, or scalar.
struct Value {
  enum class Kind { Empty, Tensor, Spectrum, Scalar };
  Kind kind = Kind::Empty;
  BlockTensor t;
  SingularSpectrum s;
  Complex z{0, 0};

  static Value tensor(BlockTensor x) {
    Value v;
    v.kind = Kind::Tensor;
    v.t = std::move(x);
    return v;
  }
  static Value spectrum(SingularSpectrum x) {
    Value v;
    v.kind = Kind::Spectrum;
    v.s = std::move(x);
    return v;
  }
  static Value scalar(Complex x) {
    Value v;
    v.kind = Kind::Scalar;
    v.z = x;
    return v;
  }
};

struct Diagnostics {
  std::int64_t degenerate_svd_events = 0;
  double max_adjoint_norm = 0.0;
};

// Per-evaluation reverse-mode tape. Nodes are appended in execution order;
// backward() walks them in reverse, combining pullbacks by the chain rule.
class Tape {
 public:
  struct Node {
    Value value;
    Value adjoint;
    bool has_adjoint = false;
    bool always_run = false;
    std::vector<NodeId> inputs;
    std::function<void(Tape&, NodeId)> pullback;  // empty for leaves
  };

  NodeId leaf(BlockTensor t) { return push(Value::tensor(std::move(t)), {}, nullptr); }
  NodeId leaf(Complex z) { return push(Value::scalar(z), {}, nullptr); }

  const Value& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const BlockTensor& tensor(NodeId id) const { return value(id).t; }
  const SingularSpectrum& spectrum(NodeId id) const { return value(id).s; }
  Complex scalar(NodeId id) const { return value(id).z; }

  bool has_adjoint(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).has_adjoint; }
  const Value& adjoint(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).adjoint; }
  // Tensor adjoint, zero-filled with the primal's spaces when never touched.
  BlockTensor tensor_adjoint(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(output)/d(output) = 1 and propagates; output must be scalar.
  void backward(NodeId output);
  // Propagates from already-deposited adjoints (used by fused pullbacks).
  void backward_accumulated();

  void accumulate(NodeId id, Value contribution);

  NodeId push(Value v, std::vector<NodeId> inputs, std::function<void(Tape&, NodeId)> pb,
              bool always_run = false);

  // --- tensor primitives -------------------------------------------------
  NodeId contract(NodeId a, NodeId b, std::vector<std::pair<int, int>> pairs);
  NodeId conjugate(NodeId a);
  NodeId permute(NodeId a, std::vector<int> perm);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, Complex c);

  struct SvdIds {
    NodeId u = -1, s = -1, v = -1;
    double discarded_weight = 0.0;
  };
  // Truncated SVD across (first n_left legs | rest); the pullback uses the
  // saved pre-truncation factors so rank truncation is accounted for.
  SvdIds svd(NodeId a, int n_left, const TruncationPolicy& policy, double delta = 1e-12);

  NodeId diag(NodeId s);          // spectrum -> rank-2 diagonal tensor
  NodeId spectrum_sum(NodeId s);  // real scalar, sum of all singular values
  NodeId norm2(NodeId a);         // real scalar, squared Frobenius norm

  // --- scalar primitives -------------------------------------------------
  NodeId to_scalar(NodeId t);  // rank-0 tensor -> scalar
  NodeId abs2(NodeId z);
  NodeId log_real(NodeId x);
  NodeId square_real(NodeId x);
  NodeId add_scalars(NodeId a, NodeId b);
  NodeId scale_scalar(NodeId a, Complex c);
  NodeId real_part(NodeId z);

  // Fused multi-output op: `builder` records the forward on a private
  // sub-tape; only one anchor record lands on this tape. Returns the ids of
  // the declared outputs.
  std::vector<NodeId> fused(
      std::vector<NodeId> inputs,
      const std::function<std::vector<NodeId>(Tape&, const std::vector<NodeId>&)>& builder);

  Diagnostics diagnostics;
  double svd_delta = 1e-12;

 private:
  std::vector<Node> nodes_;
};

}  // namespace qco::ad
