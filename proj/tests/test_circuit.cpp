#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <nlohmann/json.hpp>

#include "qco/circuit.hpp"
#include "test_support.hpp"

using namespace qco;
using namespace qcotest;

namespace {

IndexSpace qubit() { return z2_space(1, 1, Direction::Out); }

MpsState random_canonical(std::mt19937_64& rng) {
  // L=4 qubit chain, normalized
  IndexSpace p = qubit();
  IndexSpace b0(ChargeGroup::z(2), {{0, 1}}, Direction::Out);
  IndexSpace b1 = z2_space(1, 1, Direction::Out);
  IndexSpace b2 = z2_space(2, 2, Direction::Out);
  IndexSpace b3 = z2_space(1, 1, Direction::Out);
  IndexSpace b4(ChargeGroup::z(2), {{0, 1}}, Direction::Out);
  std::vector<IndexSpace> bs{b0, b1, b2, b3, b4};
  MpsState st;
  for (int n = 0; n < 4; ++n)
    st.a.push_back(random_tensor(
        {bs[static_cast<std::size_t>(n)].flipped(), p, bs[static_cast<std::size_t>(n + 1)]}, rng));
  for (int n = 0; n <= 4; ++n) st.c.push_back(identity_tensor(bs[static_cast<std::size_t>(n)]));
  st = canonicalize(st);
  st.c.back() *= Complex(1.0 / st.norm(), 0);
  return canonicalize(st);
}

Eigen::VectorXcd as_vector(const std::vector<Complex>& v) {
  return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Dense two-site gate matrix, rows (o1 o2), cols (i1 i2).
Eigen::MatrixXcd dense_gate(const BlockTensor& g) {
  DenseBlock d = to_dense(g);
  const auto d1 = d.shape[0], d2 = d.shape[1];
  Eigen::MatrixXcd m(d1 * d2, d1 * d2);
  for (std::int64_t r = 0; r < d1 * d2; ++r)
    for (std::int64_t c = 0; c < d1 * d2; ++c)
      m(r, c) = d.data[static_cast<std::size_t>(r * d1 * d2 + c)];
  return m;
}

// Applies a two-site gate at sites (site, site+1); vectors are site-major.
Eigen::VectorXcd apply_dense(const Eigen::VectorXcd& v, const Eigen::MatrixXcd& g, int site,
                             int L, std::int64_t d) {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(v.size());
  std::int64_t post = 1;
  for (int n = site + 2; n < L; ++n) post *= d;
  std::int64_t pre = v.size() / (post * d * d);
  for (std::int64_t p = 0; p < pre; ++p)
    for (std::int64_t q = 0; q < post; ++q)
      for (std::int64_t so = 0; so < d * d; ++so)
        for (std::int64_t si = 0; si < d * d; ++si)
          out((p * d * d + so) * post + q) += g(so, si) * v((p * d * d + si) * post + q);
  return out;
}

Eigen::VectorXcd simulate_dense(const Eigen::VectorXcd& v0, const Circuit& c) {
  Eigen::VectorXcd v = v0;
  const std::int64_t d = c.phys.dim();
  auto run = [&](const std::vector<Placement>& sub) {
    for (const auto& p : sub) {
      BlockTensor g = c.params.at(p.param);
      if (p.mirrored) g = mirror_transform(g);
      v = apply_dense(v, dense_gate(g), p.bond, c.length, d);
    }
  };
  for (const auto& layer : c.layers) {
    run(layer.odd);
    run(layer.even);
  }
  return v;
}

// Spatial reflection of a site-major product basis.
Eigen::VectorXcd reflect_dense(const Eigen::VectorXcd& v, int L, std::int64_t d) {
  Eigen::VectorXcd out(v.size());
  for (std::int64_t b = 0; b < v.size(); ++b) {
    std::int64_t digits[32];
    std::int64_t x = b;
    for (int n = L - 1; n >= 0; --n) {
      digits[n] = x % d;
      x /= d;
    }
    std::int64_t r = 0;
    for (int n = L - 1; n >= 0; --n) r = r * d + digits[n];
    out(r) = v(b);
  }
  return out;
}

BlockTensor swap_gate(const IndexSpace& phys) {
  const std::int64_t d = phys.dim();
  DenseBlock blk({d, d, d, d});
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      blk.data[static_cast<std::size_t>(((j * d + i) * d + i) * d + j)] = 1.0;
  IndexSpace o = phys, in = phys;
  o.dir = Direction::Out;
  in.dir = Direction::In;
  return from_dense(blk, {o, o, in, in});
}

}  // namespace

TEST_CASE("grow builds mirror-shared brick-wall layers") {
  auto rng = make_rng(51);
  Circuit c = make_circuit(6, qubit(), true);
  grow(c, 0.4, rng);
  REQUIRE(c.depth() == 1);
  const auto& l = c.layers[0];
  REQUIRE(l.odd.size() == 3);
  REQUIRE(l.even.size() == 2);
  CHECK(l.odd[0].bond == 0);
  CHECK(l.odd[2].bond == 4);
  // bond 4 mirrors bond 0; bond 2 is self-mirrored; bond 3 mirrors bond 1
  CHECK(l.odd[2].param == l.odd[0].param);
  CHECK(l.odd[2].mirrored);
  CHECK_FALSE(l.odd[1].mirrored);
  CHECK(l.even[1].param == l.even[0].param);
  CHECK(l.even[1].mirrored);
  CHECK(c.params.size() == 3);
  for (const auto& [id, g] : c.params) CHECK(unitarity_error(g) < 1e-10);
  // the self-mirrored gate commutes with site exchange
  const BlockTensor& mid = c.params.at(l.odd[1].param);
  CHECK(tensor_dist(mirror_transform(mid), mid) < 1e-12);

  // growing keeps old layers and parameters bit-identical
  std::map<int, BlockTensor> before = c.params;
  grow(c, 0.01, rng);
  CHECK(c.depth() == 2);
  CHECK(c.params.size() == 6);
  for (const auto& [id, g] : before) CHECK(tensor_dist(c.params.at(id), g) == 0);
  // new gates are unitary and close to the identity
  BlockTensor idg = random_unitary(qubit(), qubit(), 0.0, rng);
  for (int id = 3; id < 6; ++id) {
    CHECK(unitarity_error(c.params.at(id)) < 1e-10);
    CHECK(tensor_dist(c.params.at(id), idg) < 0.2);
  }
}

TEST_CASE("mirror transform is a swap conjugation and an involution") {
  auto rng = make_rng(52);
  BlockTensor g = random_unitary(qubit(), qubit(), 0.7, rng);
  CHECK(tensor_dist(mirror_transform(mirror_transform(g)), g) == 0);
  // dense check: M(g) = S g S
  Eigen::MatrixXcd gd = dense_gate(g);
  const std::int64_t d = 2;
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(d * d, d * d);
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < d; ++j) s(i * d + j, j * d + i) = 1.0;
  CHECK((dense_gate(mirror_transform(g)) - s * gd * s).norm() < 1e-14);
}

TEST_CASE("tebd step with the identity gate preserves the state") {
  auto rng = make_rng(53);
  MpsState st = random_canonical(rng);
  BlockTensor id_gate = random_unitary(qubit(), qubit(), 0.0, rng);
  auto v0 = as_vector(mps_to_dense(st));
  TebdStepResult r = tebd_step(st.a[1], st.c[2], st.a[2], st.c[3], id_gate, {64, 0.0});
  CHECK(r.discarded < 1e-24);
  MpsState out = st;
  out.a[1] = r.a1;
  out.c[2] = r.c1;
  out.a[2] = r.a2;
  CHECK((as_vector(mps_to_dense(out)) - v0).norm() < 1e-10);
  // new left tensor isometric, new bond matrix diagonal with the Schmidt values
  BlockTensor aa = contract(conj(r.a1), r.a1, {{0, 0}, {1, 1}});
  CHECK(tensor_dist(aa, identity_tensor(r.a1.space(2))) < 1e-10);
  for (const auto& [k, b] : r.c1.blocks())
    for (std::int64_t i = 0; i < b.shape[0]; ++i)
      for (std::int64_t j = 0; j < b.shape[1]; ++j)
        if (i != j) CHECK(std::abs(b.data[static_cast<std::size_t>(i * b.shape[1] + j)]) == 0);
}

TEST_CASE("swap gate exchanges basis states") {
  IndexSpace p = qubit();
  Circuit c = make_circuit(2, p, false);
  Circuit::Layer layer;
  layer.odd.push_back({0, 0, false});
  c.layers.push_back(layer);
  c.params.emplace(0, swap_gate(p));
  c.next_param = 1;
  MpsState in = product_state(p, std::vector<int>{0, 1});
  ApplyResult res = apply_circuit(in, c, {4, 0.0});
  MpsState want = product_state(p, std::vector<int>{1, 0});
  CHECK(std::abs(overlap(want, res.state) - 1.0) < 1e-12);
  CHECK(res.total_discarded < 1e-24);
}

TEST_CASE("circuit application matches a dense simulator") {
  auto rng = make_rng(54);
  const int L = 6;
  IndexSpace p = qubit();
  Circuit c = make_circuit(L, p, false);
  grow(c, 0.5, rng);
  grow(c, 0.5, rng);
  MpsState in = product_state(p, std::vector<int>{0, 1, 1, 0, 0, 1});
  ApplyResult res = apply_circuit(in, c, {64, 0.0});
  Eigen::VectorXcd want = simulate_dense(as_vector(mps_to_dense(in)), c);
  CHECK((as_vector(mps_to_dense(res.state)) - want).norm() < 1e-10);
  CHECK(std::abs(res.state.norm() - 1.0) < 1e-10);

  SUBCASE("truncation debits the squared norm") {
    // exact for one step from a canonical state ...
    auto rng2 = make_rng(60);
    MpsState st = random_canonical(rng2);
    BlockTensor g = random_unitary(qubit(), qubit(), 0.8, rng2);
    TebdStepResult r = tebd_step(st.a[1], st.c[2], st.a[2], st.c[3], g, {1, 0.0});
    CHECK(r.discarded > 1e-6);
    MpsState cut = st;
    cut.a[1] = r.a1;
    cut.c[2] = r.c1;
    cut.a[2] = r.a2;
    const double n2 = as_vector(mps_to_dense(cut)).squaredNorm();
    CHECK(std::abs(n2 - (1.0 - r.discarded)) < 1e-12);
    // ... and a first-order estimate across a whole circuit
    ApplyResult tr = apply_circuit(in, c, {2, 0.0});
    CHECK(tr.total_discarded > 1e-6);
    const double tn2 = as_vector(mps_to_dense(tr.state)).squaredNorm();
    CHECK(std::abs(tn2 - (1.0 - tr.total_discarded)) < 0.1 * tr.total_discarded);
  }
}

TEST_CASE("sublayer steps commute") {
  auto rng = make_rng(55);
  const int L = 6;
  Circuit c = make_circuit(L, qubit(), false);
  grow(c, 0.6, rng);
  Circuit rev = c;
  std::reverse(rev.layers[0].odd.begin(), rev.layers[0].odd.end());
  std::reverse(rev.layers[0].even.begin(), rev.layers[0].even.end());
  MpsState in = product_state(qubit(), std::vector<int>{0, 1, 0, 1, 0, 1});
  ApplyResult r1 = apply_circuit(in, c, {8, 1e-12});
  ApplyResult r2 = apply_circuit(in, rev, {8, 1e-12});
  for (int n = 0; n < L; ++n)
    CHECK(tensor_dist(r1.state.a[static_cast<std::size_t>(n)],
                      r2.state.a[static_cast<std::size_t>(n)]) < 1e-12);
  for (std::size_t n = 0; n < r1.state.c.size(); ++n)
    CHECK(tensor_dist(r1.state.c[n], r2.state.c[n]) < 1e-12);
}

TEST_CASE("a symmetric layer commutes with spatial reflection") {
  auto rng = make_rng(56);
  const int L = 6;
  Circuit c = make_circuit(L, qubit(), true);
  grow(c, 0.5, rng);
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(1 << L);
  std::normal_distribution<double> normal;
  for (std::int64_t b = 0; b < v.size(); ++b) v(b) = Complex(normal(rng), normal(rng));
  Eigen::VectorXcd lhs = simulate_dense(reflect_dense(v, L, 2), c);
  Eigen::VectorXcd rhs = reflect_dense(simulate_dense(v, c), L, 2);
  CHECK((lhs - rhs).norm() < 1e-12 * v.norm());
}

TEST_CASE("charge sector is preserved") {
  auto rng = make_rng(57);
  IndexSpace p = u1_space({{-1, 1}, {1, 1}}, Direction::Out);
  Circuit c = make_circuit(4, p, false);
  grow(c, 0.5, rng);
  MpsState in = product_state(p, std::vector<int>{1, 0, 1, 1});
  const Charge q = in.sector();
  ApplyResult res = apply_circuit(in, c, {16, 0.0});
  CHECK(res.state.sector() == q);
  CHECK(std::abs(res.state.norm() - 1.0) < 1e-10);
}

TEST_CASE("parameter gradients agree with finite differences") {
  auto rng = make_rng(58);
  const int L = 4;
  IndexSpace p = qubit();
  Circuit c = make_circuit(L, p, true);  // exercises mirrored sharing
  grow(c, 0.5, rng);
  MpsState in = product_state(p, std::vector<int>(L, 0));
  MpsState target = product_state(p, std::vector<int>{0, 1, 1, 0});
  const TruncationPolicy policy{64, 0.0};

  auto plain_loss = [&](const Circuit& cc) {
    ApplyResult res = apply_circuit(in, cc, policy);
    return std::norm(overlap(target, res.state));
  };

  ad::Tape tape;
  TapeMps tin = mps_to_tape(tape, in);
  std::map<int, ad::NodeId> pn;
  for (const auto& [id, g] : c.params) pn[id] = tape.leaf(g);
  TapeMps out = apply_circuit(tape, tin, c, pn, policy);
  ad::NodeId env = tape.leaf([&] {
    BlockTensor e({target.a[0].space(0), in.a[0].space(0).flipped()});
    e.block({target.a[0].space(0).sectors.front().charge,
             in.a[0].space(0).sectors.front().charge})
        .data[0] = 1.0;
    return e;
  }());
  for (int n = 0; n < L; ++n) {
    ad::NodeId t = tape.contract(env, out.a[static_cast<std::size_t>(n)], {{1, 0}});
    env = tape.contract(tape.leaf(conj(target.a[static_cast<std::size_t>(n)])), t,
                        {{0, 0}, {1, 1}});
  }
  ad::NodeId t = tape.contract(env, out.c.back(), {{1, 0}});
  ad::NodeId ov = tape.to_scalar(tape.contract(tape.leaf(conj(target.c.back())), t,
                                               {{0, 0}, {1, 1}}));
  ad::NodeId loss = tape.abs2(ov);
  CHECK(std::abs(tape.scalar(loss).real() - plain_loss(c)) < 1e-12);
  tape.backward(loss);

  const double h = 1e-5;
  double worst = 0;
  for (const auto& [id, g] : c.params) {
    BlockTensor adj = tape.tensor_adjoint(pn.at(id));
    for (const auto& [key, blk] : g.blocks())
      for (std::size_t i = 0; i < blk.data.size(); ++i)
        for (int comp = 0; comp < 2; ++comp) {
          const Complex dz = comp == 0 ? Complex(h, 0) : Complex(0, h);
          Circuit cp = c, cm = c;
          cp.params.at(id).block(key).data[i] += dz;
          cm.params.at(id).block(key).data[i] -= dz;
          const double fd = (plain_loss(cp) - plain_loss(cm)) / (2 * h);
          const Complex a = adj.find(key) ? adj.find(key)->data[i] : Complex(0, 0);
          const double got = comp == 0 ? a.real() : a.imag();
          worst = std::max(worst, std::abs(got - fd));
        }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("ckt1 serialization round trip") {
  auto rng = make_rng(59);
  Circuit c = make_circuit(5, qubit(), true);
  grow(c, 0.3, rng);
  grow(c, 0.01, rng);
  nlohmann::json j = circuit_to_json(c);
  Circuit back = circuit_from_json(j);
  CHECK(back.length == c.length);
  CHECK(back.inversion_symmetric == c.inversion_symmetric);
  CHECK(back.next_param == c.next_param);
  REQUIRE(back.depth() == c.depth());
  for (int d = 0; d < c.depth(); ++d) {
    const auto dd = static_cast<std::size_t>(d);
    REQUIRE(back.layers[dd].odd.size() == c.layers[dd].odd.size());
    REQUIRE(back.layers[dd].even.size() == c.layers[dd].even.size());
    for (std::size_t i = 0; i < c.layers[dd].odd.size(); ++i) {
      CHECK(back.layers[dd].odd[i].bond == c.layers[dd].odd[i].bond);
      CHECK(back.layers[dd].odd[i].param == c.layers[dd].odd[i].param);
      CHECK(back.layers[dd].odd[i].mirrored == c.layers[dd].odd[i].mirrored);
    }
  }
  for (const auto& [id, g] : c.params) CHECK(tensor_dist(back.params.at(id), g) == 0);
  nlohmann::json bad = j;
  bad["format"] = "ckt9";
  CHECK_THROWS(circuit_from_json(bad));
}
