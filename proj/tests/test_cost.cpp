#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "qco/cost.hpp"
#include "test_support.hpp"

using namespace qco;
using namespace qcotest;

namespace {

IndexSpace qubit() { return z2_space(1, 1, Direction::Out); }
IndexSpace free_qubit() { return trivial_space(2, Direction::Out); }

Eigen::VectorXcd as_vector(const std::vector<Complex>& v) {
  return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

MpsState random_state(const IndexSpace& p, int L, std::mt19937_64& rng, bool even_parity) {
  std::vector<Complex> v(static_cast<std::size_t>(1) << L);
  std::normal_distribution<double> normal;
  for (std::size_t b = 0; b < v.size(); ++b) {
    if (even_parity && __builtin_popcount(static_cast<unsigned>(b)) % 2 != 0) continue;
    v[b] = Complex(normal(rng), normal(rng));
  }
  double n2 = 0;
  for (const auto& z : v) n2 += std::norm(z);
  for (auto& z : v) z /= std::sqrt(n2);
  return dense_to_mps(v, p, L, {});
}

// rho on sites 1..i (site-major dense layout)
Eigen::MatrixXcd reduced_density(const Eigen::VectorXcd& v, int i, int L) {
  const std::int64_t dl = std::int64_t(1) << i, dr = std::int64_t(1) << (L - i);
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dl, dl);
  for (std::int64_t a = 0; a < dl; ++a)
    for (std::int64_t b = 0; b < dl; ++b)
      for (std::int64_t r = 0; r < dr; ++r) rho(a, b) += v(a * dr + r) * std::conj(v(b * dr + r));
  return rho;
}

Eigen::MatrixXcd herm_sqrt(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

double uhlmann(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& sigma) {
  Eigen::MatrixXcd s = herm_sqrt(rho);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(s * sigma * s);
  double tr = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    tr += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  return tr * tr;
}

// Same fidelity through the purification X of each rho: the trace norm of
// X1^dag X2; equal to uhlmann() but conditioned like the inputs (the sqrt of
// a rank-deficient rho is only accurate to about sqrt(machine eps)).
double uhlmann_pure(const Eigen::VectorXcd& v1, const Eigen::VectorXcd& v2, int i, int L) {
  const std::int64_t dl = std::int64_t(1) << i, dr = std::int64_t(1) << (L - i);
  using RowMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> x(v1.data(), dl, dr), y(v2.data(), dl, dr);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(x.adjoint() * y);
  const double tr = svd.singularValues().sum();
  return tr * tr;
}

// W = [[I, Z], [0, I]]: total-Z operator on a z2 qubit chain
MpoOperator total_z(int L) {
  IndexSpace p = qubit();
  MpoOperator op;
  op.hermitian = true;
  auto wsite = [&](std::int64_t dl, std::int64_t dr) {
    DenseBlock d({dl, 2, 2, dr});
    auto set = [&](std::int64_t i, int so, int si, std::int64_t j, double v) {
      d.data[static_cast<std::size_t>(((i * 2 + so) * 2 + si) * dr + j)] = v;
    };
    auto putI = [&](std::int64_t i, std::int64_t j) {
      for (int s = 0; s < 2; ++s) set(i, s, s, j, 1.0);
    };
    auto putZ = [&](std::int64_t i, std::int64_t j) {
      set(i, 0, 0, j, 1.0);
      set(i, 1, 1, j, -1.0);
    };
    if (dl == 1) {
      putI(0, 0);
      putZ(0, 1);
    } else if (dr == 2) {
      putI(0, 0);
      putZ(0, 1);
      putI(1, 1);
    } else {
      putZ(0, 0);
      putI(1, 0);
    }
    IndexSpace lv(ChargeGroup::z(2), {{0, dl}}, Direction::In);
    IndexSpace rv(ChargeGroup::z(2), {{0, dr}}, Direction::Out);
    return from_dense(d, {lv, p, p.flipped(), rv});
  };
  op.w.push_back(wsite(1, 2));
  for (int n = 1; n < L - 1; ++n) op.w.push_back(wsite(2, 2));
  op.w.push_back(wsite(2, 1));
  return op;
}

}  // namespace

TEST_CASE("total fidelity") {
  auto rng = make_rng(81);
  MpsState s1 = random_state(free_qubit(), 6, rng, false);
  MpsState s2 = random_state(free_qubit(), 6, rng, false);
  CHECK(total_fidelity(s1, s1) == doctest::Approx(1.0).epsilon(1e-12));
  const Complex dense_ov = as_vector(mps_to_dense(s1)).dot(as_vector(mps_to_dense(s2)));
  CHECK(std::abs(total_fidelity(s1, s2) - std::norm(dense_ov)) < 1e-12);
  // orthogonal sectors give an exact structural zero
  IndexSpace p = qubit();
  MpsState even = product_state(p, std::vector<int>{0, 0});
  MpsState odd = product_state(p, std::vector<int>{0, 1});
  CHECK(total_fidelity(even, odd) == 0.0);
  CHECK_THROWS_WITH_AS(neg_log_total_fidelity(even, odd),
                       doctest::Contains("vanishing overlap"), std::runtime_error);
}

TEST_CASE("negative log total fidelity of product states") {
  IndexSpace p = free_qubit();
  const int L = 5;
  const double c = 0.8;
  std::vector<std::vector<Complex>> locals(
      L, {Complex(c, 0), Complex(std::sqrt(1 - c * c), 0)});
  MpsState tilted = product_state(p, locals);
  MpsState zeros = product_state(p, std::vector<int>(L, 0));
  CHECK(neg_log_total_fidelity(zeros, zeros) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(neg_log_total_fidelity(zeros, tilted) ==
        doctest::Approx(-L * std::log(c * c)).epsilon(1e-10));
}

TEST_CASE("subspace fidelity profile") {
  auto rng = make_rng(82);
  SUBCASE("identical states give ones") {
    MpsState s = random_state(free_qubit(), 5, rng, false);
    for (double f : subspace_fidelity_profile(s, s))
      CHECK(f == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(mean_neg_log_subspace(s, s) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("a flipped site cuts the profile") {
    IndexSpace p = free_qubit();
    MpsState a = product_state(p, std::vector<int>{0, 0, 0, 0, 0});
    MpsState b = product_state(p, std::vector<int>{0, 0, 1, 0, 0});
    std::vector<double> prof = subspace_fidelity_profile(a, b);
    CHECK(prof[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(prof[1] == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 2; i < 5; ++i) CHECK(prof[static_cast<std::size_t>(i)] == 0.0);
  }
  SUBCASE("matches the dense Uhlmann oracle") {
    const int L = 6;
    MpsState s1 = random_state(free_qubit(), L, rng, false);
    MpsState s2 = random_state(free_qubit(), L, rng, false);
    Eigen::VectorXcd v1 = as_vector(mps_to_dense(s1));
    Eigen::VectorXcd v2 = as_vector(mps_to_dense(s2));
    std::vector<double> prof = subspace_fidelity_profile(s1, s2);
    for (int i = 1; i <= L; ++i) {
      const double f = prof[static_cast<std::size_t>(i - 1)];
      CHECK(std::abs(f - uhlmann(reduced_density(v1, i, L), reduced_density(v2, i, L))) < 1e-7);
      CHECK(std::abs(f - uhlmann_pure(v1, v2, i, L)) < 1e-9);
    }
    CHECK(std::abs(prof.back() - total_fidelity(s1, s2)) < 1e-9);
  }
  SUBCASE("incompatible sectors give zero cuts, not errors") {
    IndexSpace p = qubit();
    MpsState even = product_state(p, std::vector<int>{0, 0, 0});
    MpsState odd = product_state(p, std::vector<int>{1, 1, 1});
    std::vector<double> prof = subspace_fidelity_profile(even, odd);
    CHECK(prof[0] == 0.0);
    CHECK_THROWS_WITH_AS(mean_neg_log_subspace(even, odd),
                         doctest::Contains("vanishing overlap"), std::runtime_error);
  }
  SUBCASE("two sites reduce to the single cut") {
    MpsState s1 = random_state(free_qubit(), 2, rng, false);
    MpsState s2 = random_state(free_qubit(), 2, rng, false);
    CHECK(mean_neg_log_subspace(s1, s2) ==
          doctest::Approx(-std::log(subspace_fidelity_profile(s1, s2)[0])).epsilon(1e-10));
  }
}

TEST_CASE("costs are global-phase invariant") {
  auto rng = make_rng(83);
  const int L = 5;
  MpsState target = random_state(qubit(), L, rng, true);
  MpsState state = random_state(qubit(), L, rng, true);
  MpsState rotated = state;
  rotated.c.back() *= std::exp(Complex(0, 1.234));
  CostFunction e = energy_cost(total_z(L));
  CostFunction ft = neg_log_total_fidelity_cost(target);
  CostFunction fs = mean_neg_log_subspace_cost(target);
  for (const auto* cf : {&e, &ft, &fs})
    CHECK(std::abs(evaluate_cost(*cf, state) - evaluate_cost(*cf, rotated)) < 1e-12);
}

TEST_CASE("cost constructors validate their inputs") {
  auto rng = make_rng(84);
  MpoOperator op = total_z(3);
  op.hermitian = false;
  CHECK_THROWS_AS(energy_cost(op), std::invalid_argument);
  MpsState bad = random_state(qubit(), 3, rng, true);
  bad.c.back() *= Complex(2, 0);
  CHECK_THROWS_AS(neg_log_total_fidelity_cost(bad), std::invalid_argument);
  CHECK_THROWS_AS(mean_neg_log_subspace_cost(bad), std::invalid_argument);
}

TEST_CASE("full pipeline gradients agree with finite differences") {
  auto rng = make_rng(85);
  const int L = 6;
  IndexSpace p = qubit();
  Circuit c = make_circuit(L, p, false);
  grow(c, 0.4, rng);
  grow(c, 0.4, rng);
  MpsState in = product_state(p, std::vector<int>{0, 1, 1, 0, 1, 1});
  MpsState target = random_state(p, L, rng, true);
  const TruncationPolicy policy{64, 0.0};

  CostFunction costs[] = {energy_cost(total_z(L)), neg_log_total_fidelity_cost(target),
                          mean_neg_log_subspace_cost(target)};
  for (const CostFunction& cf : costs) {
    CAPTURE(static_cast<int>(cf.kind));
    CostGradient cg = cost_and_gradient(cf, c, in, policy);
    const double plain = evaluate_cost(cf, apply_circuit(in, c, policy).state);
    CHECK(std::abs(cg.value - plain) < 1e-10 * std::max(1.0, std::abs(plain)));

    const double h = 1e-5;
    double worst = 0;
    for (const auto& [id, g] : c.params) {
      const BlockTensor& adj = cg.grads.at(id);
      for (const auto& [key, blk] : g.blocks())
        for (std::size_t i = 0; i < blk.data.size(); ++i)
          for (int comp = 0; comp < 2; ++comp) {
            const Complex dz = comp == 0 ? Complex(h, 0) : Complex(0, h);
            Circuit cp = c, cm = c;
            cp.params.at(id).block(key).data[i] += dz;
            cm.params.at(id).block(key).data[i] -= dz;
            const double fp = evaluate_cost(cf, apply_circuit(in, cp, policy).state);
            const double fm = evaluate_cost(cf, apply_circuit(in, cm, policy).state);
            const double fd = (fp - fm) / (2 * h);
            const Complex a = adj.find(key) ? adj.find(key)->data[i] : Complex(0, 0);
            const double got = comp == 0 ? a.real() : a.imag();
            worst = std::max(worst, std::abs(got - fd) / std::max(1.0, std::abs(fd)));
          }
    }
    CHECK(worst < 1e-5);
  }
}
