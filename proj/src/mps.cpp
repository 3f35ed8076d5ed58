#include "qco/mps.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qco {

namespace {

// Sum of entries of a tensor whose legs are all dimension-1 boundaries.
Complex boundary_scalar(const BlockTensor& t) {
  Complex z(0, 0);
  for (const auto& [k, b] : t.blocks())
    for (const auto& x : b.data) z += x;
  return z;
}

// (sector charge, offset within sector) of a dense physical index.
std::pair<Charge, std::int64_t> locate(const IndexSpace& phys, std::int64_t idx) {
  std::int64_t off = 0;
  for (const auto& sec : phys.sectors) {
    if (idx < off + sec.dim) return {sec.charge, idx - off};
    off += sec.dim;
  }
  throw std::out_of_range("product_state: basis index out of range");
}

}  // namespace

Charge MpsState::sector() const {
  const auto& sp = c.back().space(1);
  return sp.group.inverse(sp.sectors.front().charge);
}

MpsState product_state(const IndexSpace& phys, const std::vector<int>& config,
                       std::optional<Charge> sector) {
  std::vector<std::vector<Complex>> locals;
  locals.reserve(config.size());
  for (int idx : config) {
    std::vector<Complex> v(static_cast<std::size_t>(phys.dim()), Complex(0, 0));
    v.at(static_cast<std::size_t>(idx)) = 1.0;
    locals.push_back(std::move(v));
  }
  return product_state(phys, locals, sector);
}

MpsState product_state(const IndexSpace& phys, const std::vector<std::vector<Complex>>& locals,
                       std::optional<Charge> sector) {
  const auto& g = phys.group;
  const int L = static_cast<int>(locals.size());
  if (L < 1) throw std::invalid_argument("product_state: empty configuration");
  MpsState st;
  st.a.reserve(static_cast<std::size_t>(L));
  st.c.reserve(static_cast<std::size_t>(L + 1));
  IndexSpace phys_out = phys;
  phys_out.dir = Direction::Out;
  Charge q = g.identity(), total = g.identity();
  st.c.push_back(identity_tensor(IndexSpace(g, {{q, 1}}, Direction::Out)));
  for (int n = 0; n < L; ++n) {
    const auto& v = locals[static_cast<std::size_t>(n)];
    if (static_cast<std::int64_t>(v.size()) != phys.dim())
      throw std::invalid_argument("product_state: local vector has wrong dimension");
    // the local vector must sit inside one charge sector
    std::optional<Charge> qs;
    double nrm2 = 0;
    std::int64_t off = 0;
    for (const auto& sec : phys.sectors) {
      for (std::int64_t i = 0; i < sec.dim; ++i) {
        const double a2 = std::norm(v[static_cast<std::size_t>(off + i)]);
        if (a2 > 0) {
          if (qs && *qs != sec.charge)
            throw std::invalid_argument("product_state: local vector spans multiple charge sectors");
          qs = sec.charge;
          nrm2 += a2;
        }
      }
      off += sec.dim;
    }
    if (!qs) throw std::invalid_argument("product_state: zero local vector");
    total = g.fuse(total, *qs);
    const Charge qn = g.fuse(q, g.inverse(*qs));
    IndexSpace left(g, {{q, 1}}, Direction::In);
    IndexSpace right(g, {{qn, 1}}, Direction::Out);
    BlockTensor a({left, phys_out, right});
    auto& blk = a.block({q, *qs, qn});
    const std::int64_t soff = phys.sector_offset(*qs);
    const double nrm = std::sqrt(nrm2);
    for (std::int64_t i = 0; i < phys.sector_dim(*qs); ++i)
      blk.data[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(soff + i)] / nrm;
    st.a.push_back(std::move(a));
    st.c.push_back(identity_tensor(IndexSpace(g, {{qn, 1}}, Direction::Out)));
    q = qn;
  }
  if (sector && g.canon(*sector) != total)
    throw std::invalid_argument("product_state: configuration charge does not match the sector");
  return st;
}

MpsState canonicalize(const MpsState& state) {
  const int L = state.length();
  std::vector<BlockTensor> b(static_cast<std::size_t>(L));
  BlockTensor m = contract(state.a.back(), state.c.back(), {{2, 0}});
  for (int n = L - 1; n >= 1; --n) {
    // upper-triangular left factors match the R-factor convention of the
    // second sweep, which makes the whole pass idempotent
    auto rq = rq_positive(m, 1);
    b[static_cast<std::size_t>(n)] = std::move(rq.q);
    m = contract(state.a[static_cast<std::size_t>(n - 1)], rq.r, {{2, 0}});
  }
  MpsState out;
  out.a.resize(static_cast<std::size_t>(L));
  out.c.resize(static_cast<std::size_t>(L + 1));
  for (int n = 0; n < L; ++n) {
    auto qr = qr_positive(m, 2);
    out.a[static_cast<std::size_t>(n)] = std::move(qr.q);
    out.c[static_cast<std::size_t>(n + 1)] = qr.r;
    if (n + 1 < L) m = contract(qr.r, b[static_cast<std::size_t>(n + 1)], {{1, 0}});
  }
  // C(0) carries the norm so that B(1) = C(0)^{-1} A(1) C(1) stays isometric
  out.c[0] = identity_tensor(state.a[0].space(0));
  out.c[0] *= Complex(out.c.back().norm(), 0);
  return out;
}

BlockTensor b_tensor(const MpsState& state, int n, double pinv_tol) {
  if (n < 1 || n > state.length()) throw std::out_of_range("b_tensor: site index out of range");
  BlockTensor p = pinv(state.c[static_cast<std::size_t>(n - 1)], pinv_tol);
  BlockTensor t = contract(p, state.a[static_cast<std::size_t>(n - 1)], {{1, 0}});
  return contract(t, state.c[static_cast<std::size_t>(n)], {{2, 0}});
}

Complex overlap(const MpsState& bra, const MpsState& ket) {
  if (bra.length() != ket.length()) throw std::invalid_argument("overlap: length mismatch");
  const int L = bra.length();
  BlockTensor env({bra.a[0].space(0), ket.a[0].space(0).flipped()});
  const Charge qb = bra.a[0].space(0).sectors.front().charge;
  const Charge qk = ket.a[0].space(0).sectors.front().charge;
  if (qb != qk) return Complex(0, 0);
  env.block({qb, qk}).data[0] = 1.0;
  for (int n = 0; n < L; ++n) {
    BlockTensor t = contract(env, ket.a[static_cast<std::size_t>(n)], {{1, 0}});
    env = contract(conj(bra.a[static_cast<std::size_t>(n)]), t, {{0, 0}, {1, 1}});
  }
  BlockTensor t = contract(env, ket.c.back(), {{1, 0}});
  return boundary_scalar(contract(conj(bra.c.back()), t, {{0, 0}}));
}

double expectation(const MpsState& state, const MpoOperator& op) {
  if (state.length() != op.length()) throw std::invalid_argument("expectation: length mismatch");
  const int L = state.length();
  const IndexSpace& m0 = op.w[0].space(0);
  if (m0.sectors.size() != 1 || m0.sectors.front().charge != m0.group.identity())
    throw std::invalid_argument("expectation: operator boundary must be a charge-0 singleton");
  BlockTensor env({state.a[0].space(0), m0.flipped(), state.a[0].space(0).flipped()});
  const Charge q0 = state.a[0].space(0).sectors.front().charge;
  env.block({q0, m0.sectors.front().charge, q0}).data[0] = 1.0;
  for (int n = 0; n < L; ++n) {
    const auto i = static_cast<std::size_t>(n);
    BlockTensor t1 = contract(env, state.a[i], {{2, 0}});          // (abar, m, s, beta)
    BlockTensor t2 = contract(t1, op.w[i], {{1, 0}, {2, 2}});      // (abar, beta, s', m')
    BlockTensor t3 = contract(conj(state.a[i]), t2, {{0, 0}, {1, 2}});  // (bbar, beta, m')
    env = permuted(t3, {0, 2, 1});
  }
  BlockTensor t = contract(env, state.c.back(), {{2, 0}});
  Complex val = boundary_scalar(contract(conj(state.c.back()), t, {{0, 0}}));
  if (op.hermitian && std::abs(val.imag()) > 1e-10)
    throw std::runtime_error("expectation: non-real value for a Hermitian operator");
  return val.real();
}

MpsState dense_to_mps(const std::vector<Complex>& vec, const IndexSpace& phys, int L,
                      const TruncationPolicy& policy, Charge sector) {
  const auto& g = phys.group;
  IndexSpace phys_out = phys;
  phys_out.dir = Direction::Out;
  std::vector<IndexSpace> spaces;
  spaces.push_back(IndexSpace(g, {{g.identity(), 1}}, Direction::In));
  for (int n = 0; n < L; ++n) spaces.push_back(phys_out);
  spaces.push_back(IndexSpace(g, {{g.inverse(sector), 1}}, Direction::Out));
  std::vector<std::int64_t> shape{1};
  for (int n = 0; n < L; ++n) shape.push_back(phys.dim());
  shape.push_back(1);
  DenseBlock d(shape);
  if (d.data.size() != vec.size()) throw std::invalid_argument("dense_to_mps: size mismatch");
  d.data = vec;
  BlockTensor t = from_dense(d, spaces);

  MpsState st;
  for (int n = 0; n < L - 1; ++n) {
    SvdResult r = svd_truncated(t, 2, policy);
    st.a.push_back(std::move(r.u));
    t = contract(diag_tensor(r.s), r.v, {{1, 0}});
  }
  st.a.push_back(std::move(t));
  st.c.resize(static_cast<std::size_t>(L + 1));
  st.c[0] = identity_tensor(st.a[0].space(0));
  for (int n = 0; n < L; ++n)
    st.c[static_cast<std::size_t>(n + 1)] = identity_tensor(st.a[static_cast<std::size_t>(n)].space(2));
  return canonicalize(st);
}

std::vector<Complex> mps_to_dense(const MpsState& state) {
  const int L = state.length();
  double total = 1;
  for (int n = 0; n < L; ++n) total *= static_cast<double>(state.phys(n).dim());
  if (total > double(1 << 24)) throw std::invalid_argument("mps_to_dense: state too large");
  BlockTensor t = state.a[0];
  for (int n = 1; n < L; ++n) t = contract(t, state.a[static_cast<std::size_t>(n)], {{t.rank() - 1, 0}});
  t = contract(t, state.c.back(), {{t.rank() - 1, 0}});
  return to_dense(t).data;
}

nlohmann::json mps_to_json(const MpsState& state) {
  nlohmann::json j;
  j["format"] = "mps1";
  j["length"] = state.length();
  auto& sites = j["sites"] = nlohmann::json::array();
  for (const auto& a : state.a) sites.push_back(tensor_to_json(a));
  auto& bonds = j["bonds"] = nlohmann::json::array();
  for (const auto& c : state.c) bonds.push_back(tensor_to_json(c));
  return j;
}

MpsState mps_from_json(const nlohmann::json& j) {
  if (j.at("format") != "mps1")
    throw std::invalid_argument("mps_from_json: unsupported format tag");
  MpsState st;
  for (const auto& s : j.at("sites")) st.a.push_back(tensor_from_json(s));
  for (const auto& c : j.at("bonds")) st.c.push_back(tensor_from_json(c));
  if (st.length() != j.at("length").get<int>() ||
      st.c.size() != st.a.size() + 1)
    throw std::invalid_argument("mps_from_json: inconsistent manifest");
  return st;
}

}  // namespace qco
