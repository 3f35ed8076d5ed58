#include "qco/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace qco::ad {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using RowMajorMatrixXcd = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

double value_norm(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Tensor: return v.t.norm();
    case Value::Kind::Spectrum: {
      double n = 0;
      for (const auto& [c, vals] : v.s.values)
        for (double x : vals) n += x * x;
      return std::sqrt(n);
    }
    case Value::Kind::Scalar: return std::abs(v.z);
    case Value::Kind::Empty: return 0;
  }
  return 0;
}

// Cotangent of the truncated SVD, assembled against the full pre-truncation
// factors; missing cotangents enter as zeros, which is exactly how the
// discarded singular triples are treated.
BlockTensor svd_pullback(const SvdSaved& saved, const BlockTensor* ubar,
                         const SingularSpectrum* sbar, const BlockTensor* vbar, double delta,
                         std::int64_t* degenerate_events) {
  BlockTensor out(saved.spaces);
  for (const auto& [c, f] : saved.factors) {
    const auto rows = f.rows, cols = f.cols, r = f.r, kept = f.kept;
    Eigen::Map<const RowMajorMatrixXcd> U(f.u.data(), rows, r);
    Eigen::Map<const RowMajorMatrixXcd> Vh(f.vh.data(), r, cols);

    MatrixXcd Ubar = MatrixXcd::Zero(rows, r);
    if (ubar && kept > 0) {
      for (const auto& combo : saved.row_combos.at(c)) {
        BlockKey key = combo.key;
        key.push_back(c);
        if (const DenseBlock* blk = ubar->find(key))
          Ubar.block(combo.offset, 0, combo.dim, kept) =
              Eigen::Map<const RowMajorMatrixXcd>(blk->data.data(), combo.dim, kept);
      }
    }
    VectorXd sb = VectorXd::Zero(r);
    if (sbar) {
      auto it = sbar->values.find(c);
      if (it != sbar->values.end())
        for (std::int64_t i = 0; i < kept && i < static_cast<std::int64_t>(it->second.size()); ++i)
          sb(i) = it->second[static_cast<std::size_t>(i)];
    }
    MatrixXcd Vbar = MatrixXcd::Zero(cols, r);
    if (vbar && kept > 0) {
      MatrixXcd Bbar = MatrixXcd::Zero(kept, cols);  // cotangent of the stored V^dagger rows
      for (const auto& combo : saved.col_combos.at(c)) {
        BlockKey key{c};
        key.insert(key.end(), combo.key.begin(), combo.key.end());
        if (const DenseBlock* blk = vbar->find(key))
          Bbar.block(0, combo.offset, kept, combo.dim) =
              Eigen::Map<const RowMajorMatrixXcd>(blk->data.data(), kept, combo.dim);
      }
      Vbar.leftCols(kept) = Bbar.adjoint();
    }
    if (Ubar.isZero(0) && Vbar.isZero(0) && sb.isZero(0)) continue;

    MatrixXcd V = Vh.adjoint();
    MatrixXcd G = U.adjoint() * Ubar;
    MatrixXcd H = V.adjoint() * Vbar;
    VectorXd sinv(r);
    for (std::int64_t i = 0; i < r; ++i) {
      const double s = f.s[static_cast<std::size_t>(i)];
      sinv(i) = s / (s * s + delta * delta);
    }
    MatrixXcd C(r, r);
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < r; ++j) {
        if (i == j) continue;
        const double si = f.s[static_cast<std::size_t>(i)], sj = f.s[static_cast<std::size_t>(j)];
        const double x = sj * sj - si * si;
        if (degenerate_events && i < j && std::abs(x) <= 1e3 * delta) ++*degenerate_events;
        const double F = x / (x * x + delta * delta);
        C(i, j) = sj * F * (G(i, j) - std::conj(G(j, i))) +
                  si * F * (H(i, j) - std::conj(H(j, i)));
      }
      C(i, i) = Complex(sb(i), 0.5 * (G(i, i).imag() - H(i, i).imag()) * sinv(i));
    }
    MatrixXcd Abar = U * C * Vh;
    if (rows > r) Abar += (Ubar - U * G) * sinv.asDiagonal() * Vh;
    if (cols > r) {
      MatrixXcd Vbh = Vbar.adjoint();
      Abar += U * sinv.asDiagonal() * (Vbh - (Vbh * V) * Vh);
    }

    for (const auto& rc : saved.row_combos.at(c)) {
      for (const auto& cc : saved.col_combos.at(c)) {
        BlockKey key = rc.key;
        key.insert(key.end(), cc.key.begin(), cc.key.end());
        DenseBlock blk(out.block_shape(key));
        Eigen::Map<RowMajorMatrixXcd>(blk.data.data(), rc.dim, cc.dim) =
            Abar.block(rc.offset, cc.offset, rc.dim, cc.dim);
        out.insert(key, std::move(blk));
      }
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape core

BlockTensor Tape::tensor_adjoint(NodeId id) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.value.kind != Value::Kind::Tensor)
    throw std::logic_error("Tape: tensor adjoint requested for non-tensor node");
  if (n.has_adjoint) return n.adjoint.t;
  return BlockTensor(n.value.t.spaces());
}

NodeId Tape::push(Value v, std::vector<NodeId> inputs, std::function<void(Tape&, NodeId)> pb,
                  bool always_run) {
  Node n;
  n.value = std::move(v);
  n.inputs = std::move(inputs);
  n.pullback = std::move(pb);
  n.always_run = always_run;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::accumulate(NodeId id, Value contribution) {
  auto& n = nodes_.at(static_cast<std::size_t>(id));
  if (contribution.kind != n.value.kind && n.value.kind != Value::Kind::Empty)
    throw std::logic_error("Tape: adjoint kind does not match the primal value");
  if (!n.has_adjoint) {
    n.adjoint = std::move(contribution);
    n.has_adjoint = true;
  } else {
    switch (contribution.kind) {
      case Value::Kind::Tensor: n.adjoint.t += contribution.t; break;
      case Value::Kind::Spectrum:
        for (const auto& [c, vals] : contribution.s.values) {
          auto& dst = n.adjoint.s.values[c];
          if (dst.size() < vals.size()) dst.resize(vals.size(), 0.0);
          for (std::size_t i = 0; i < vals.size(); ++i) dst[i] += vals[i];
        }
        break;
      case Value::Kind::Scalar: n.adjoint.z += contribution.z; break;
      case Value::Kind::Empty: break;
    }
  }
  diagnostics.max_adjoint_norm = std::max(diagnostics.max_adjoint_norm, value_norm(n.adjoint));
}

void Tape::backward(NodeId output) {
  const auto& n = nodes_.at(static_cast<std::size_t>(output));
  if (n.value.kind != Value::Kind::Scalar)
    throw std::invalid_argument("Tape::backward: output node is not a scalar");
  accumulate(output, Value::scalar(Complex(1, 0)));
  for (NodeId id = output; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.pullback && (node.has_adjoint || node.always_run)) node.pullback(*this, id);
  }
}

void Tape::backward_accumulated() {
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.pullback && (node.has_adjoint || node.always_run)) node.pullback(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Tensor primitives

NodeId Tape::contract(NodeId a, NodeId b, std::vector<std::pair<int, int>> pairs) {
  BlockTensor y = qco::contract(tensor(a), tensor(b), pairs);
  const int ra = tensor(a).rank(), rb = tensor(b).rank();
  std::vector<int> free_a, free_b, paired_a, paired_b;
  {
    std::vector<bool> ua(static_cast<std::size_t>(ra), false), ub(static_cast<std::size_t>(rb), false);
    for (const auto& [ia, ib] : pairs) {
      ua[static_cast<std::size_t>(ia)] = ub[static_cast<std::size_t>(ib)] = true;
    }
    for (int i = 0; i < ra; ++i) (ua[static_cast<std::size_t>(i)] ? paired_a : free_a).push_back(i);
    for (int i = 0; i < rb; ++i) (ub[static_cast<std::size_t>(i)] ? paired_b : free_b).push_back(i);
  }
  auto rank_of = [](const std::vector<int>& v, int x) {
    return static_cast<int>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };
  auto pb = [a, b, pairs, free_a, free_b, paired_a, paired_b, ra, rb, rank_of](Tape& tp,
                                                                              NodeId self) {
    const BlockTensor ybar = tp.tensor_adjoint(self);
    const int nfa = static_cast<int>(free_a.size());
    const int np = static_cast<int>(pairs.size());
    {  // abar = ybar contracted with conj(b) over b's free legs
      BlockTensor cb = qco::conj(tp.tensor(b));
      std::vector<std::pair<int, int>> p2;
      for (std::size_t j = 0; j < free_b.size(); ++j)
        p2.emplace_back(nfa + static_cast<int>(j), free_b[j]);
      BlockTensor raw = qco::contract(ybar, cb, p2);
      // raw legs: (free_a..., b's paired legs in ascending b-index order)
      std::vector<int> perm(static_cast<std::size_t>(ra));
      for (int i = 0; i < ra; ++i) {
        auto it = std::find(free_a.begin(), free_a.end(), i);
        if (it != free_a.end()) {
          perm[static_cast<std::size_t>(i)] = static_cast<int>(it - free_a.begin());
        } else {
          int q = 0;
          while (pairs[static_cast<std::size_t>(q)].first != i) ++q;
          perm[static_cast<std::size_t>(i)] =
              nfa + rank_of(paired_b, pairs[static_cast<std::size_t>(q)].second);
        }
      }
      tp.accumulate(a, Value::tensor(qco::permuted(raw, perm)));
    }
    {  // bbar = conj(a) contracted with ybar over a's free legs
      BlockTensor ca = qco::conj(tp.tensor(a));
      std::vector<std::pair<int, int>> p3;
      for (std::size_t t = 0; t < free_a.size(); ++t)
        p3.emplace_back(free_a[t], static_cast<int>(t));
      BlockTensor raw = qco::contract(ca, ybar, p3);
      // raw legs: (a's paired legs ascending, free_b...)
      std::vector<int> perm(static_cast<std::size_t>(rb));
      for (int i = 0; i < rb; ++i) {
        auto it = std::find(free_b.begin(), free_b.end(), i);
        if (it != free_b.end()) {
          perm[static_cast<std::size_t>(i)] = np + static_cast<int>(it - free_b.begin());
        } else {
          int q = 0;
          while (pairs[static_cast<std::size_t>(q)].second != i) ++q;
          perm[static_cast<std::size_t>(i)] =
              rank_of(paired_a, pairs[static_cast<std::size_t>(q)].first);
        }
      }
      tp.accumulate(b, Value::tensor(qco::permuted(raw, perm)));
    }
  };
  return push(Value::tensor(std::move(y)), {a, b}, pb);
}

NodeId Tape::conjugate(NodeId a) {
  return push(Value::tensor(qco::conj(tensor(a))), {a}, [a](Tape& tp, NodeId self) {
    tp.accumulate(a, Value::tensor(qco::conj(tp.tensor_adjoint(self))));
  });
}

NodeId Tape::permute(NodeId a, std::vector<int> perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return push(Value::tensor(permuted(tensor(a), perm)), {a}, [a, inv](Tape& tp, NodeId self) {
    tp.accumulate(a, Value::tensor(permuted(tp.tensor_adjoint(self), inv)));
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  return push(Value::tensor(tensor(a) + tensor(b)), {a, b}, [a, b](Tape& tp, NodeId self) {
    BlockTensor ybar = tp.tensor_adjoint(self);
    tp.accumulate(a, Value::tensor(ybar));
    tp.accumulate(b, Value::tensor(std::move(ybar)));
  });
}

NodeId Tape::scale(NodeId a, Complex c) {
  return push(Value::tensor(c * tensor(a)), {a}, [a, c](Tape& tp, NodeId self) {
    tp.accumulate(a, Value::tensor(std::conj(c) * tp.tensor_adjoint(self)));
  });
}

Tape::SvdIds Tape::svd(NodeId a, int n_left, const TruncationPolicy& policy, double delta) {
  auto saved = std::make_shared<SvdSaved>();
  SvdResult r = svd_truncated(tensor(a), n_left, policy, saved.get());
  auto dep = std::make_shared<std::array<Value, 3>>();
  NodeId anchor = push(
      Value{}, {a},
      [a, saved, dep, delta](Tape& tp, NodeId) {
        const Value& du = (*dep)[0];
        const Value& ds = (*dep)[1];
        const Value& dv = (*dep)[2];
        const bool any = du.kind != Value::Kind::Empty || ds.kind != Value::Kind::Empty ||
                         dv.kind != Value::Kind::Empty;
        if (!any) return;
        BlockTensor abar = svd_pullback(
            *saved, du.kind == Value::Kind::Tensor ? &du.t : nullptr,
            ds.kind == Value::Kind::Spectrum ? &ds.s : nullptr,
            dv.kind == Value::Kind::Tensor ? &dv.t : nullptr, delta,
            &tp.diagnostics.degenerate_svd_events);
        tp.accumulate(a, Value::tensor(std::move(abar)));
      },
      /*always_run=*/true);
  auto depositor = [dep](std::size_t slot) {
    return [dep, slot](Tape& tp, NodeId self) { (*dep)[slot] = tp.adjoint(self); };
  };
  SvdIds ids;
  ids.u = push(Value::tensor(std::move(r.u)), {anchor}, depositor(0));
  ids.s = push(Value::spectrum(std::move(r.s)), {anchor}, depositor(1));
  ids.v = push(Value::tensor(std::move(r.v)), {anchor}, depositor(2));
  ids.discarded_weight = r.discarded_weight;
  return ids;
}

NodeId Tape::diag(NodeId s) {
  return push(Value::tensor(diag_tensor(spectrum(s))), {s}, [s](Tape& tp, NodeId self) {
    const BlockTensor ybar = tp.tensor_adjoint(self);
    SingularSpectrum grad;
    grad.space = tp.spectrum(s).space;
    for (const auto& [c, vals] : tp.spectrum(s).values) {
      auto& g = grad.values[c];
      g.assign(vals.size(), 0.0);
      if (const DenseBlock* blk = ybar.find({c, c})) {
        const auto n = static_cast<std::int64_t>(vals.size());
        for (std::int64_t i = 0; i < n; ++i)
          g[static_cast<std::size_t>(i)] = blk->data[static_cast<std::size_t>(i * n + i)].real();
      }
    }
    tp.accumulate(s, Value::spectrum(std::move(grad)));
  });
}

NodeId Tape::spectrum_sum(NodeId s) {
  return push(Value::scalar(Complex(spectrum(s).sum(), 0)), {s}, [s](Tape& tp, NodeId self) {
    const double y = tp.adjoint(self).z.real();
    SingularSpectrum grad;
    grad.space = tp.spectrum(s).space;
    for (const auto& [c, vals] : tp.spectrum(s).values) grad.values[c].assign(vals.size(), y);
    tp.accumulate(s, Value::spectrum(std::move(grad)));
  });
}

NodeId Tape::norm2(NodeId a) {
  return push(Value::scalar(Complex(tensor(a).norm2(), 0)), {a}, [a](Tape& tp, NodeId self) {
    const double y = tp.adjoint(self).z.real();
    tp.accumulate(a, Value::tensor(Complex(2 * y, 0) * tp.tensor(a)));
  });
}

// ---------------------------------------------------------------------------
// Scalar primitives

NodeId Tape::to_scalar(NodeId t) {
  const BlockTensor& x = tensor(t);
  if (x.rank() != 0) throw std::invalid_argument("Tape::to_scalar: rank-0 tensor required");
  const DenseBlock* blk = x.find(BlockKey{});
  Complex z = blk ? blk->data[0] : Complex(0, 0);
  return push(Value::scalar(z), {t}, [t](Tape& tp, NodeId self) {
    BlockTensor g(tp.tensor(t).spaces());
    g.block(BlockKey{}).data[0] = tp.adjoint(self).z;
    tp.accumulate(t, Value::tensor(std::move(g)));
  });
}

NodeId Tape::abs2(NodeId z) {
  return push(Value::scalar(Complex(std::norm(scalar(z)), 0)), {z}, [z](Tape& tp, NodeId self) {
    const double y = tp.adjoint(self).z.real();
    tp.accumulate(z, Value::scalar(2.0 * y * tp.scalar(z)));
  });
}

NodeId Tape::log_real(NodeId x) {
  const double v = scalar(x).real();
  if (!(v > 0)) throw std::domain_error("Tape::log_real: argument must be positive");
  return push(Value::scalar(Complex(std::log(v), 0)), {x}, [x, v](Tape& tp, NodeId self) {
    tp.accumulate(x, Value::scalar(Complex(tp.adjoint(self).z.real() / v, 0)));
  });
}

NodeId Tape::square_real(NodeId x) {
  const double v = scalar(x).real();
  return push(Value::scalar(Complex(v * v, 0)), {x}, [x, v](Tape& tp, NodeId self) {
    tp.accumulate(x, Value::scalar(Complex(2 * v * tp.adjoint(self).z.real(), 0)));
  });
}

NodeId Tape::add_scalars(NodeId a, NodeId b) {
  return push(Value::scalar(scalar(a) + scalar(b)), {a, b}, [a, b](Tape& tp, NodeId self) {
    tp.accumulate(a, Value::scalar(tp.adjoint(self).z));
    tp.accumulate(b, Value::scalar(tp.adjoint(self).z));
  });
}

NodeId Tape::scale_scalar(NodeId a, Complex c) {
  return push(Value::scalar(c * scalar(a)), {a}, [a, c](Tape& tp, NodeId self) {
    tp.accumulate(a, Value::scalar(std::conj(c) * tp.adjoint(self).z));
  });
}

NodeId Tape::real_part(NodeId z) {
  return push(Value::scalar(Complex(scalar(z).real(), 0)), {z}, [z](Tape& tp, NodeId self) {
    tp.accumulate(z, Value::scalar(Complex(tp.adjoint(self).z.real(), 0)));
  });
}

// ---------------------------------------------------------------------------
// Fused sub-tape ops

std::vector<NodeId> Tape::fused(
    std::vector<NodeId> inputs,
    const std::function<std::vector<NodeId>(Tape&, const std::vector<NodeId>&)>& builder) {
  auto sub = std::make_shared<Tape>();
  sub->svd_delta = svd_delta;
  std::vector<NodeId> sub_inputs;
  sub_inputs.reserve(inputs.size());
  for (NodeId id : inputs) {
    const Value& v = value(id);
    if (v.kind == Value::Kind::Tensor)
      sub_inputs.push_back(sub->leaf(v.t));
    else if (v.kind == Value::Kind::Scalar)
      sub_inputs.push_back(sub->leaf(v.z));
    else
      throw std::invalid_argument("Tape::fused: inputs must be tensors or scalars");
  }
  std::vector<NodeId> sub_outputs = builder(*sub, sub_inputs);
  auto dep = std::make_shared<std::vector<Value>>(sub_outputs.size());
  NodeId anchor = push(
      Value{}, inputs,
      [sub, sub_inputs, sub_outputs, dep, inputs](Tape& tp, NodeId) {
        bool any = false;
        for (std::size_t i = 0; i < sub_outputs.size(); ++i) {
          if ((*dep)[i].kind != Value::Kind::Empty) {
            sub->accumulate(sub_outputs[i], (*dep)[i]);
            any = true;
          }
        }
        if (!any) return;
        sub->backward_accumulated();
        tp.diagnostics.degenerate_svd_events += sub->diagnostics.degenerate_svd_events;
        sub->diagnostics.degenerate_svd_events = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i)
          if (sub->has_adjoint(sub_inputs[i])) tp.accumulate(inputs[i], sub->adjoint(sub_inputs[i]));
      },
      /*always_run=*/true);
  std::vector<NodeId> outs;
  outs.reserve(sub_outputs.size());
  for (std::size_t i = 0; i < sub_outputs.size(); ++i) {
    outs.push_back(push(sub->value(sub_outputs[i]), {anchor}, [dep, i](Tape& tp, NodeId self) {
      (*dep)[i] = tp.adjoint(self);
    }));
  }
  return outs;
}

}  // namespace qco::ad
