#include "qco/manifold.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace qco {

namespace {

using MatrixXcd = Eigen::MatrixXcd;

struct Combo {
  Charge q1 = 0, q2 = 0;
  std::int64_t d1 = 0, d2 = 0, off = 0;
};

// Fused (in1, in2) charge groups of a gate-layout tensor, in sector order.
std::map<Charge, std::vector<Combo>> fused_combos(const BlockTensor& g) {
  const IndexSpace& s1 = g.space(2);
  const IndexSpace& s2 = g.space(3);
  std::map<Charge, std::vector<Combo>> out;
  for (const auto& a : s1.sectors)
    for (const auto& b : s2.sectors) {
      const Charge c = s1.group.fuse(a.charge, b.charge);
      auto& v = out[c];
      std::int64_t off = 0;
      for (const auto& e : v) off += e.d1 * e.d2;
      v.push_back({a.charge, b.charge, a.dim, b.dim, off});
    }
  return out;
}

std::map<Charge, MatrixXcd> to_matrices(const BlockTensor& g,
                                        const std::map<Charge, std::vector<Combo>>& combos) {
  std::map<Charge, MatrixXcd> mats;
  for (const auto& [c, list] : combos) {
    std::int64_t dim = 0;
    for (const auto& e : list) dim += e.d1 * e.d2;
    MatrixXcd& m = mats.emplace(c, MatrixXcd::Zero(dim, dim)).first->second;
    for (const auto& r : list)
      for (const auto& col : list) {
        const DenseBlock* blk = g.find({r.q1, r.q2, col.q1, col.q2});
        if (!blk) continue;
        for (std::int64_t i1 = 0; i1 < r.d1; ++i1)
          for (std::int64_t i2 = 0; i2 < r.d2; ++i2)
            for (std::int64_t j1 = 0; j1 < col.d1; ++j1)
              for (std::int64_t j2 = 0; j2 < col.d2; ++j2)
                m(r.off + i1 * r.d2 + i2, col.off + j1 * col.d2 + j2) =
                    blk->data[static_cast<std::size_t>(((i1 * r.d2 + i2) * col.d1 + j1) * col.d2 +
                                                       j2)];
      }
  }
  return mats;
}

BlockTensor from_matrices(const std::vector<IndexSpace>& spaces,
                          const std::map<Charge, std::vector<Combo>>& combos,
                          const std::map<Charge, MatrixXcd>& mats) {
  BlockTensor g(spaces);
  for (const auto& [c, list] : combos) {
    const MatrixXcd& m = mats.at(c);
    for (const auto& r : list)
      for (const auto& col : list) {
        DenseBlock blk(g.block_shape({r.q1, r.q2, col.q1, col.q2}));
        for (std::int64_t i1 = 0; i1 < r.d1; ++i1)
          for (std::int64_t i2 = 0; i2 < r.d2; ++i2)
            for (std::int64_t j1 = 0; j1 < col.d1; ++j1)
              for (std::int64_t j2 = 0; j2 < col.d2; ++j2)
                blk.data[static_cast<std::size_t>(((i1 * r.d2 + i2) * col.d1 + j1) * col.d2 + j2)] =
                    m(r.off + i1 * r.d2 + i2, col.off + j1 * col.d2 + j2);
        g.insert({r.q1, r.q2, col.q1, col.q2}, std::move(blk));
      }
  }
  g.prune();
  return g;
}

void check_gate_layout(const BlockTensor& g, const char* who) {
  if (g.rank() != 4 || g.space(0) != g.space(2).flipped() || g.space(1) != g.space(3).flipped())
    throw std::invalid_argument(std::string(who) + ": expected a square gate-layout tensor");
}

}  // namespace

BlockTensor gate_adjoint(const BlockTensor& g) { return conj(permuted(g, {2, 3, 0, 1})); }

BlockTensor lift(const BlockTensor& u, const BlockTensor& grad) {
  check_gate_layout(u, "lift");
  // U^dag grad and grad^dag U in gate layout (matrices over the in legs)
  BlockTensor ug = contract(conj(u), grad, {{0, 0}, {1, 1}});
  BlockTensor gu = contract(conj(grad), u, {{0, 0}, {1, 1}});
  BlockTensor x = ug;
  x -= gu;
  x *= Complex(0.5, 0);
  return x;
}

BlockTensor retract(const BlockTensor& u, const BlockTensor& x, double eta) {
  check_gate_layout(u, "retract");
  auto combos = fused_combos(u);
  auto umats = to_matrices(u, combos);
  auto xmats = to_matrices(x, combos);
  std::map<Charge, MatrixXcd> out;
  for (const auto& [c, uc] : umats) {
    const MatrixXcd& xc = xmats.at(c);
    // exp(-eta x) through the eigendecomposition of the Hermitian ix
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(Complex(0, 1) * xc);
    const auto dim = xc.rows();
    Eigen::VectorXcd phases(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      phases(i) = std::exp(Complex(0, eta * es.eigenvalues()(i)));
    out.emplace(c, uc * (es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint()));
  }
  return from_matrices(u.spaces(), combos, out);
}

AdamState make_adam_state(const std::vector<int>& param_ids, const AdamConfig& cfg) {
  AdamState st;
  st.cfg = cfg;
  for (int id : param_ids) {
    st.m.emplace(id, BlockTensor());
    st.v_re.emplace(id, BlockTensor());
    st.v_im.emplace(id, BlockTensor());
  }
  return st;
}

void adam_step(AdamState& state, const std::map<int, BlockTensor>& grads,
               std::map<int, BlockTensor>& params) {
  const auto& cfg = state.cfg;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto& [id, x] : grads) {
    auto mit = state.m.find(id);
    if (mit == state.m.end())
      throw std::invalid_argument("adam_step: gradient for an unknown parameter id");
    BlockTensor& m = mit->second;
    BlockTensor& vre = state.v_re.at(id);
    BlockTensor& vim = state.v_im.at(id);
    if (m.rank() == 0) {
      m = BlockTensor(x.spaces());
      vre = BlockTensor(x.spaces());
      vim = BlockTensor(x.spaces());
    }
    for (auto& [k, b] : m.blocks())
      for (auto& z : b.data) z *= cfg.beta1;
    for (auto& [k, b] : vre.blocks())
      for (auto& z : b.data) z *= cfg.beta2;
    for (auto& [k, b] : vim.blocks())
      for (auto& z : b.data) z *= cfg.beta2;
    for (const auto& [k, b] : x.blocks()) {
      auto& mb = m.block(k);
      auto& vrb = vre.block(k);
      auto& vib = vim.block(k);
      for (std::size_t i = 0; i < b.data.size(); ++i) {
        mb.data[i] += (1.0 - cfg.beta1) * b.data[i];
        vrb.data[i] += (1.0 - cfg.beta2) * b.data[i].real() * b.data[i].real();
        vib.data[i] += (1.0 - cfg.beta2) * b.data[i].imag() * b.data[i].imag();
      }
    }
    BlockTensor d(m.spaces());
    for (const auto& [k, mb] : m.blocks()) {
      const DenseBlock* vrb = vre.find(k);
      const DenseBlock* vib = vim.find(k);
      auto& db = d.block(k);
      for (std::size_t i = 0; i < mb.data.size(); ++i) {
        const Complex mhat = mb.data[i] / bc1;
        const double vr = vrb ? vrb->data[i].real() / bc2 : 0.0;
        const double vi = vib ? vib->data[i].real() / bc2 : 0.0;
        db.data[i] = Complex(mhat.real() / (std::sqrt(vr) + cfg.eps),
                             mhat.imag() / (std::sqrt(vi) + cfg.eps));
      }
    }
    // elementwise scaling leaves the tangent space; project back
    BlockTensor dh = gate_adjoint(d);
    d -= dh;
    d *= Complex(0.5, 0);
    auto pit = params.find(id);
    if (pit == params.end()) throw std::invalid_argument("adam_step: missing parameter tensor");
    pit->second = retract(pit->second, d, cfg.eta);
  }
}

nlohmann::json adam_to_json(const AdamState& state) {
  nlohmann::json j;
  j["format"] = "adam1";
  j["beta1"] = state.cfg.beta1;
  j["beta2"] = state.cfg.beta2;
  j["eps"] = state.cfg.eps;
  j["eta"] = state.cfg.eta;
  j["t"] = state.t;
  auto dump = [](const std::map<int, BlockTensor>& store) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [id, t] : store) {
      nlohmann::json e;
      e["id"] = id;
      if (t.rank() > 0) e["tensor"] = tensor_to_json(t);
      arr.push_back(std::move(e));
    }
    return arr;
  };
  j["m"] = dump(state.m);
  j["v_re"] = dump(state.v_re);
  j["v_im"] = dump(state.v_im);
  return j;
}

AdamState adam_from_json(const nlohmann::json& j) {
  if (j.at("format") != "adam1")
    throw std::invalid_argument("adam_from_json: unsupported format tag");
  AdamState st;
  st.cfg.beta1 = j.at("beta1").get<double>();
  st.cfg.beta2 = j.at("beta2").get<double>();
  st.cfg.eps = j.at("eps").get<double>();
  st.cfg.eta = j.at("eta").get<double>();
  st.t = j.at("t").get<std::int64_t>();
  auto load = [](const nlohmann::json& arr, std::map<int, BlockTensor>& store) {
    for (const auto& e : arr) {
      BlockTensor t;
      if (e.contains("tensor")) t = tensor_from_json(e.at("tensor"));
      store.emplace(e.at("id").get<int>(), std::move(t));
    }
  };
  load(j.at("m"), st.m);
  load(j.at("v_re"), st.v_re);
  load(j.at("v_im"), st.v_im);
  return st;
}

}  // namespace qco
