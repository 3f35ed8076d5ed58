#include "qco/models.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <stdexcept>

namespace qco {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

int local_dim(Model m) { return m == Model::Potts3 ? 3 : 2; }

// Local operators in the dense (sector-ordered) basis. Ising: (|0>, |1>) with
// Z = diag(1,-1). Schwinger: (Z=-1, Z=+1), so Z = diag(-1,+1) and
// S+ = |+><-|. Potts: sigma-basis (0,1,2).
MatrixXcd op_identity(int d) { return MatrixXcd::Identity(d, d); }

MatrixXcd ising_x() {
  MatrixXcd m = MatrixXcd::Zero(2, 2);
  m(0, 1) = m(1, 0) = 1.0;
  return m;
}

MatrixXcd ising_z() {
  MatrixXcd m = MatrixXcd::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

MatrixXcd schwinger_z() {
  MatrixXcd m = MatrixXcd::Zero(2, 2);
  m(0, 0) = -1.0;
  m(1, 1) = 1.0;
  return m;
}

MatrixXcd schwinger_sp() {
  MatrixXcd m = MatrixXcd::Zero(2, 2);
  m(1, 0) = 1.0;
  return m;
}

MatrixXcd schwinger_sm() { return schwinger_sp().adjoint(); }

// P_k = (1 + (-1)^k Z_k)/2, k 1-based.
MatrixXcd schwinger_p(int k) {
  const double sg = (k % 2 == 0) ? 1.0 : -1.0;
  return 0.5 * (op_identity(2) + sg * schwinger_z());
}

// q_k = (-1)^k P_k, the staggered-charge increment.
MatrixXcd schwinger_q(int k) {
  const double sg = (k % 2 == 0) ? 1.0 : -1.0;
  return sg * schwinger_p(k);
}

MatrixXcd potts_sigma() {
  MatrixXcd m = MatrixXcd::Zero(3, 3);
  m(0, 1) = m(1, 2) = m(2, 0) = 1.0;
  return m;
}

MatrixXcd potts_tau() {
  const Complex w = std::exp(Complex(0, 2.0 * M_PI / 3.0));
  MatrixXcd m = MatrixXcd::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = w;
  m(2, 2) = w * w;
  return m;
}

// Finite-state-automaton MPO: channel c with charge chan[c] (grouped in
// ascending charge order so channels match the sector layout), per-site
// transition operators ops[site][{row, col}].
struct ChannelMpo {
  IndexSpace phys;  // Out-directed
  std::vector<Charge> chan;
  int start = 0;
  int exit = 0;
  std::vector<std::map<std::pair<int, int>, MatrixXcd>> ops;

  MpoOperator build() const {
    const int L = static_cast<int>(ops.size());
    const auto d = phys.dim();
    const int nc = static_cast<int>(chan.size());
    std::vector<Sector> vsec;
    for (int c = 0; c < nc; ++c) {
      if (!vsec.empty() && vsec.back().charge == chan[static_cast<std::size_t>(c)])
        ++vsec.back().dim;
      else
        vsec.push_back({chan[static_cast<std::size_t>(c)], 1});
    }
    const IndexSpace full(phys.group, vsec, Direction::Out);
    const IndexSpace edge(phys.group, {{phys.group.identity(), 1}}, Direction::Out);
    MpoOperator mpo;
    for (int n = 0; n < L; ++n) {
      const bool first = n == 0, last = n == L - 1;
      const std::int64_t nl = first ? 1 : nc, nr = last ? 1 : nc;
      DenseBlock dense({nl, d, d, nr});
      for (const auto& [rc, m] : ops[static_cast<std::size_t>(n)]) {
        auto [row, col] = rc;
        if (first && row != start) continue;
        if (last && col != exit) continue;
        const std::int64_t r = first ? 0 : row, c = last ? 0 : col;
        for (std::int64_t i = 0; i < d; ++i)
          for (std::int64_t j = 0; j < d; ++j)
            dense.data[static_cast<std::size_t>(((r * d + i) * d + j) * nr + c)] +=
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
      const IndexSpace left = (first ? edge : full).flipped();
      const IndexSpace right = last ? edge : full;
      mpo.w.push_back(from_dense(dense, {left, phys, phys.flipped(), right}));
    }
    mpo.hermitian = true;
    return mpo;
  }
};

MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd r(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return r;
}

// I x ... x M(site) x ... x I on L sites (site 0-based).
MatrixXcd site_op(const MatrixXcd& m, int site, int L, int d) {
  MatrixXcd r = MatrixXcd::Identity(1, 1);
  for (int n = 0; n < L; ++n) r = kron(r, n == site ? m : op_identity(d));
  return r;
}

MatrixXcd bond_op(const MatrixXcd& m1, const MatrixXcd& m2, int site, int L, int d) {
  MatrixXcd r = MatrixXcd::Identity(1, 1);
  for (int n = 0; n < L; ++n) {
    if (n == site)
      r = kron(r, m1);
    else if (n == site + 1)
      r = kron(r, m2);
    else
      r = kron(r, op_identity(d));
  }
  return r;
}

std::int64_t dense_dim(const ModelSpec& spec) {
  const int d = local_dim(spec.model);
  std::int64_t n = 1;
  for (int i = 0; i < spec.length; ++i) {
    n *= d;
    if (n > (std::int64_t{1} << 20)) throw std::invalid_argument("dense_hamiltonian: d^L exceeds 2^20");
  }
  return n;
}

std::vector<int> basis_digits(std::int64_t index, int L, int d) {
  std::vector<int> digits(static_cast<std::size_t>(L));
  for (int n = L - 1; n >= 0; --n) {
    digits[static_cast<std::size_t>(n)] = static_cast<int>(index % d);
    index /= d;
  }
  return digits;
}

}  // namespace

void validate(const ModelSpec& spec) {
  if (spec.length < 1) throw std::invalid_argument("ModelSpec: length must be >= 1");
  switch (spec.symmetry) {
    case Symmetry::None:
      break;
    case Symmetry::Z2Parity:
      if (spec.model != Model::Ising || spec.h != 0.0)
        throw std::invalid_argument("ModelSpec: Z2 parity requires the Ising model with h = 0");
      break;
    case Symmetry::U1Ztot:
      if (spec.model != Model::Schwinger)
        throw std::invalid_argument("ModelSpec: U1 Z-total requires the Schwinger model");
      break;
  }
}

IndexSpace model_phys(const ModelSpec& spec) {
  validate(spec);
  switch (spec.symmetry) {
    case Symmetry::Z2Parity:
      return IndexSpace(ChargeGroup::z(2), {{0, 1}, {1, 1}}, Direction::Out);
    case Symmetry::U1Ztot:
      return IndexSpace(ChargeGroup::u1(), {{-1, 1}, {1, 1}}, Direction::Out);
    case Symmetry::None:
      break;
  }
  return IndexSpace(ChargeGroup::trivial(),
                    {{0, static_cast<std::int64_t>(local_dim(spec.model))}}, Direction::Out);
}

MpoOperator ising_mpo(int L, double g, double h, Symmetry sym) {
  ModelSpec spec{Model::Ising, L, g, h, 0.0, sym};
  validate(spec);
  ChannelMpo b;
  b.phys = model_phys(spec);
  // channels: 1, exit (charge 0), X-carrier (parity-odd)
  b.chan = {0, 0, sym == Symmetry::Z2Parity ? Charge{1} : Charge{0}};
  b.start = 0;
  b.exit = 1;
  const MatrixXcd x = ising_x(), z = ising_z();
  b.ops.resize(static_cast<std::size_t>(L));
  for (auto& w : b.ops) {
    w[{0, 0}] = op_identity(2);
    w[{1, 1}] = op_identity(2);
    w[{0, 2}] = x;
    w[{2, 1}] = -x;
    w[{0, 1}] = -g * z - h * x;
  }
  return b.build();
}

MpoOperator potts3_mpo(int L, double g, double h) {
  ModelSpec spec{Model::Potts3, L, g, h, 0.0, Symmetry::None};
  validate(spec);
  ChannelMpo b;
  b.phys = model_phys(spec);
  b.chan = {0, 0, 0, 0};  // 1, exit, sigma-carrier, sigma^dag-carrier
  b.start = 0;
  b.exit = 1;
  const MatrixXcd s = potts_sigma(), sd = potts_sigma().adjoint();
  const MatrixXcd t = potts_tau(), td = potts_tau().adjoint();
  b.ops.resize(static_cast<std::size_t>(L));
  for (auto& w : b.ops) {
    w[{0, 0}] = op_identity(3);
    w[{1, 1}] = op_identity(3);
    w[{0, 2}] = s;
    w[{2, 1}] = -sd;
    w[{0, 3}] = sd;
    w[{3, 1}] = -s;
    w[{0, 1}] = -g * (t + td) - h * (s + sd);
  }
  return b.build();
}

MpoOperator schwinger_mpo(int L, double m, double g, Symmetry sym) {
  ModelSpec spec{Model::Schwinger, L, g, 0.0, m, sym};
  validate(spec);
  ChannelMpo b;
  b.phys = model_phys(spec);
  const bool u1 = sym == Symmetry::U1Ztot;
  // channels ascending by charge: S+ carrier (-2), then 1 / E / E^2 / exit
  // (charge 0), then S- carrier (+2). E accumulates the staggered charge; the
  // E^2 channel exits one site later, producing sum_{i<=L-1} E_i^2.
  enum { Sp = 0, One = 1, E = 2, E2 = 3, Exit = 4, Sm = 5 };
  b.chan = {u1 ? Charge{-2} : 0, 0, 0, 0, 0, u1 ? Charge{2} : 0};
  b.start = One;
  b.exit = Exit;
  const MatrixXcd id = op_identity(2);
  b.ops.resize(static_cast<std::size_t>(L));
  for (int n = 0; n < L; ++n) {
    auto& w = b.ops[static_cast<std::size_t>(n)];
    const int k = n + 1;  // 1-based staggering
    w[{One, One}] = id;
    w[{Exit, Exit}] = id;
    w[{One, Sp}] = schwinger_sp();
    w[{Sp, Exit}] = schwinger_sm();
    w[{One, Sm}] = schwinger_sm();
    w[{Sm, Exit}] = schwinger_sp();
    w[{One, E}] = schwinger_q(k);
    w[{E, E}] = id;
    w[{One, E2}] = schwinger_p(k);  // q_k^2 = P_k
    w[{E, E2}] = 2.0 * schwinger_q(k);
    w[{E2, E2}] = id;
    w[{E2, Exit}] = (g * g / 2.0) * id;
    w[{One, Exit}] = m * schwinger_p(k);
  }
  return b.build();
}

MpoOperator model_mpo(const ModelSpec& spec) {
  validate(spec);
  switch (spec.model) {
    case Model::Ising:
      return ising_mpo(spec.length, spec.g, spec.h, spec.symmetry);
    case Model::Potts3:
      return potts3_mpo(spec.length, spec.g, spec.h);
    case Model::Schwinger:
      return schwinger_mpo(spec.length, spec.m, spec.g, spec.symmetry);
  }
  throw std::logic_error("model_mpo: unreachable");
}

Eigen::MatrixXcd dense_hamiltonian(const ModelSpec& spec) {
  validate(spec);
  const int L = spec.length, d = local_dim(spec.model);
  const std::int64_t N = dense_dim(spec);
  MatrixXcd h = MatrixXcd::Zero(N, N);
  switch (spec.model) {
    case Model::Ising: {
      const MatrixXcd x = ising_x(), z = ising_z();
      for (int n = 0; n + 1 < L; ++n) h -= bond_op(x, x, n, L, d);
      for (int n = 0; n < L; ++n) h -= site_op(spec.g * z + spec.h * x, n, L, d);
      break;
    }
    case Model::Potts3: {
      const MatrixXcd s = potts_sigma(), sd = potts_sigma().adjoint();
      const MatrixXcd t = potts_tau(), td = potts_tau().adjoint();
      for (int n = 0; n + 1 < L; ++n) h -= bond_op(s, sd, n, L, d) + bond_op(sd, s, n, L, d);
      for (int n = 0; n < L; ++n) h -= site_op(spec.g * (t + td) + spec.h * (s + sd), n, L, d);
      break;
    }
    case Model::Schwinger: {
      for (int n = 0; n + 1 < L; ++n)
        h += bond_op(schwinger_sp(), schwinger_sm(), n, L, d) +
             bond_op(schwinger_sm(), schwinger_sp(), n, L, d);
      // mass + electric terms are diagonal in the Z basis
      for (std::int64_t b = 0; b < N; ++b) {
        const auto digits = basis_digits(b, L, d);
        double diag = 0.0, e = 0.0;
        for (int k = 1; k <= L; ++k) {
          const double zk = digits[static_cast<std::size_t>(k - 1)] == 0 ? -1.0 : 1.0;
          const double sg = (k % 2 == 0) ? 1.0 : -1.0;
          const double pk = 0.5 * (1.0 + sg * zk);
          diag += spec.m * pk;
          e += sg * pk;
          if (k < L) diag += 0.5 * spec.g * spec.g * e * e;
        }
        h(b, b) += diag;
      }
      break;
    }
  }
  const double herm = (h - h.adjoint()).cwiseAbs().maxCoeff();
  if (herm > 1e-13) throw std::logic_error("dense_hamiltonian: Hermiticity violated");
  return h;
}

Charge basis_charge(const ModelSpec& spec, std::int64_t index) {
  validate(spec);
  const int d = local_dim(spec.model);
  const auto digits = basis_digits(index, spec.length, d);
  Charge q = 0;
  const ChargeGroup group = model_phys(spec).group;
  for (int n = 0; n < spec.length; ++n) {
    const int dg = digits[static_cast<std::size_t>(n)];
    switch (spec.symmetry) {
      case Symmetry::None:
        break;
      case Symmetry::Z2Parity:
        q = group.fuse(q, dg);
        break;
      case Symmetry::U1Ztot:
        q = group.fuse(q, dg == 0 ? -1 : 1);
        break;
    }
  }
  return q;
}

std::vector<EigPair> exact_eigs(const ModelSpec& spec, std::optional<Charge> sector, int k) {
  validate(spec);
  if (sector && spec.symmetry == Symmetry::None)
    throw std::invalid_argument("exact_eigs: sector given without a symmetry setting");
  const MatrixXcd h = dense_hamiltonian(spec);
  const std::int64_t N = h.rows();
  std::vector<std::int64_t> keep;
  if (sector) {
    for (std::int64_t b = 0; b < N; ++b)
      if (basis_charge(spec, b) == *sector) keep.push_back(b);
    if (keep.empty()) throw std::invalid_argument("exact_eigs: empty symmetry sector");
  } else {
    keep.resize(static_cast<std::size_t>(N));
    for (std::int64_t b = 0; b < N; ++b) keep[static_cast<std::size_t>(b)] = b;
  }
  const auto M = static_cast<Eigen::Index>(keep.size());
  if (k < 1 || k > M) throw std::invalid_argument("exact_eigs: k out of range for sector");
  MatrixXcd sub(M, M);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < M; ++j)
      sub(i, j) = h(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(sub);
  std::vector<EigPair> out;
  out.reserve(static_cast<std::size_t>(M));
  for (Eigen::Index n = 0; n < M; ++n) {
    EigPair p;
    p.energy = es.eigenvalues()(n);
    p.vector = VectorXcd::Zero(N);
    VectorXcd v = es.eigenvectors().col(n);
    // fix the global phase: first significant entry real positive
    for (Eigen::Index i = 0; i < M; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        v *= std::conj(v(i)) / std::abs(v(i));
        break;
      }
    }
    for (Eigen::Index i = 0; i < M; ++i) p.vector(keep[static_cast<std::size_t>(i)]) = v(i);
    out.push_back(std::move(p));
  }
  // deterministic order inside degenerate levels: lexicographic on entries
  const double scale = std::max(1.0, std::abs(out.front().energy) + std::abs(out.back().energy));
  auto lex_less = [](const VectorXcd& a, const VectorXcd& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (std::abs(a(i).real() - b(i).real()) > 1e-10) return a(i).real() < b(i).real();
      if (std::abs(a(i).imag() - b(i).imag()) > 1e-10) return a(i).imag() < b(i).imag();
    }
    return false;
  };
  for (std::size_t lo = 0; lo < out.size();) {
    std::size_t hi = lo + 1;
    while (hi < out.size() && out[hi].energy - out[lo].energy < 1e-10 * scale) ++hi;
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(lo),
              out.begin() + static_cast<std::ptrdiff_t>(hi),
              [&](const EigPair& a, const EigPair& b) { return lex_less(a.vector, b.vector); });
    lo = hi;
  }
  out.resize(static_cast<std::size_t>(k));
  return out;
}

MpsState target_mps(const ModelSpec& spec, std::optional<Charge> sector, int n,
                    const TruncationPolicy& policy) {
  const auto eigs = exact_eigs(spec, sector, n + 1);
  const VectorXcd& v = eigs.back().vector;
  std::vector<Complex> vec(v.data(), v.data() + v.size());
  const IndexSpace phys = model_phys(spec);
  const Charge q = sector ? *sector : phys.group.identity();
  MpsState state = dense_to_mps(vec, phys, spec.length, policy, q);
  const std::vector<Complex> back = mps_to_dense(state);
  Complex ov = 0;
  double n2 = 0;
  for (std::size_t i = 0; i < back.size(); ++i) {
    ov += std::conj(vec[i]) * back[i];
    n2 += std::norm(back[i]);
  }
  if (n2 <= 0.0 || std::norm(ov) / n2 < 1.0 - 1e-10)
    throw std::runtime_error("target_mps: compression fidelity below 1 - 1e-10");
  state.c.back() *= Complex(1.0 / std::sqrt(n2), 0);
  return canonicalize(state);
}

namespace {

// Left environment legs (bra-bond In, mpo Out, ket-bond Out); right
// environment legs (bra-bond Out, mpo In, ket-bond In).
BlockTensor lenv_boundary(const BlockTensor& a0, const BlockTensor& w0) {
  const IndexSpace& l = a0.space(0);
  const IndexSpace& m = w0.space(0);
  BlockTensor env({l, m.flipped(), l.flipped()});
  env.block({l.sectors.front().charge, m.sectors.front().charge, l.sectors.front().charge})
      .data[0] = 1.0;
  return env;
}

BlockTensor renv_boundary(const BlockTensor& alast, const BlockTensor& wlast) {
  const IndexSpace& r = alast.space(2);
  const IndexSpace m = wlast.space(3).flipped();
  BlockTensor env({r, m, r.flipped()});
  env.block({r.sectors.front().charge, m.sectors.front().charge, r.sectors.front().charge})
      .data[0] = 1.0;
  return env;
}

BlockTensor lenv_step(const BlockTensor& env, const BlockTensor& a, const BlockTensor& w) {
  BlockTensor t1 = contract(env, a, {{2, 0}});
  BlockTensor t2 = contract(t1, w, {{1, 0}, {2, 2}});
  BlockTensor t3 = contract(conj(a), t2, {{0, 0}, {1, 2}});
  return permuted(t3, {0, 2, 1});
}

BlockTensor renv_step(const BlockTensor& env, const BlockTensor& a, const BlockTensor& w) {
  BlockTensor u1 = contract(a, env, {{2, 2}});
  BlockTensor u2 = contract(w, u1, {{3, 3}, {2, 1}});
  return contract(conj(a), u2, {{1, 1}, {2, 3}});
}

BlockTensor heff_apply(const BlockTensor& le, const BlockTensor& w1, const BlockTensor& w2,
                       const BlockTensor& re, const BlockTensor& theta) {
  BlockTensor t1 = contract(le, theta, {{2, 0}});
  BlockTensor t2 = contract(t1, w1, {{1, 0}, {2, 2}});
  BlockTensor t3 = contract(t2, w2, {{4, 0}, {1, 2}});
  return contract(t3, re, {{4, 1}, {1, 2}});
}

// Lanczos ground state with full reorthogonalization; theta is overwritten
// with the (normalized) eigenvector, the eigenvalue is returned.
double lanczos_ground(const std::function<BlockTensor(const BlockTensor&)>& apply,
                      BlockTensor& theta, int kmax = 60) {
  theta *= Complex(1.0 / theta.norm(), 0);
  std::vector<BlockTensor> q{theta};
  std::vector<double> alpha, beta;
  Eigen::VectorXd ground;
  double energy = 0.0;
  for (int j = 0; j < kmax; ++j) {
    BlockTensor w = apply(q.back());
    const double a = dot(q.back(), w).real();
    alpha.push_back(a);
    w -= Complex(a, 0) * q.back();
    if (j > 0) w -= Complex(beta.back(), 0) * q[q.size() - 2];
    for (const auto& qi : q) w -= dot(qi, w) * qi;
    const double b = w.norm();
    const auto m = static_cast<Eigen::Index>(alpha.size());
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      tri(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
    energy = es.eigenvalues()(0);
    ground = es.eigenvectors().col(0);
    if (b < 1e-12 || std::abs(b * ground(m - 1)) < 1e-12) break;
    beta.push_back(b);
    w *= Complex(1.0 / b, 0);
    q.push_back(std::move(w));
  }
  BlockTensor acc = Complex(ground(0), 0) * q[0];
  for (std::size_t i = 1; i < static_cast<std::size_t>(ground.size()); ++i)
    acc += Complex(ground(static_cast<Eigen::Index>(i)), 0) * q[i];
  acc *= Complex(1.0 / acc.norm(), 0);
  theta = std::move(acc);
  return energy;
}

std::vector<int> initial_config(const ModelSpec& spec, Charge sector) {
  const int L = spec.length;
  std::vector<int> cfg(static_cast<std::size_t>(L), 0);
  switch (spec.symmetry) {
    case Symmetry::None:
      break;
    case Symmetry::Z2Parity:
      if (sector % 2 != 0) cfg[0] = 1;
      break;
    case Symmetry::U1Ztot: {
      if ((L + sector) % 2 != 0 || sector < -L || sector > L)
        throw std::invalid_argument("two_site_dmrg: unreachable U1 sector");
      std::int64_t ups = (L + sector) / 2;
      // staggered fill: occupy odd sites (k = 2, 4, ... 1-based) first
      for (int n = 1; n < L && ups > 0; n += 2, --ups) cfg[static_cast<std::size_t>(n)] = 1;
      for (int n = 0; n < L && ups > 0; n += 2, --ups) cfg[static_cast<std::size_t>(n)] = 1;
      break;
    }
  }
  return cfg;
}

}  // namespace

DmrgResult two_site_dmrg(const ModelSpec& spec, const TruncationPolicy& policy, int max_sweeps,
                         double conv, std::optional<Charge> sector) {
  validate(spec);
  const int L = spec.length;
  if (L < 2) throw std::invalid_argument("two_site_dmrg: length must be >= 2");
  const Charge q = sector ? *sector : 0;
  const IndexSpace phys = model_phys(spec);
  const MpoOperator mpo = model_mpo(spec);
  MpsState init = product_state(phys, initial_config(spec, q),
                                spec.symmetry == Symmetry::None ? std::nullopt
                                                                : std::optional<Charge>(q));
  std::vector<BlockTensor> t = init.a;
  t.back() = contract(t.back(), init.c.back(), {{2, 0}});

  const auto ul = [](int n) { return static_cast<std::size_t>(n); };
  std::vector<BlockTensor> le(ul(L) + 1), re(ul(L) + 1);
  le[0] = lenv_boundary(t[0], mpo.w[0]);
  re[ul(L)] = renv_boundary(t[ul(L - 1)], mpo.w[ul(L - 1)]);
  for (int n = L - 1; n >= 1; --n) re[ul(n)] = renv_step(re[ul(n + 1)], t[ul(n)], mpo.w[ul(n)]);

  auto solve_bond = [&](int n) {
    BlockTensor theta = contract(t[ul(n)], t[ul(n + 1)], {{2, 0}});
    const auto apply = [&](const BlockTensor& x) {
      return heff_apply(le[ul(n)], mpo.w[ul(n)], mpo.w[ul(n + 1)], re[ul(n + 2)], x);
    };
    const double e = lanczos_ground(apply, theta);
    return std::pair<double, BlockTensor>(e, std::move(theta));
  };

  double prev = 0.0;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double energy = 0.0;
    for (int n = 0; n + 1 < L; ++n) {
      auto [e, theta] = solve_bond(n);
      energy = e;
      SvdResult r = svd_truncated(theta, 2, policy);
      t[ul(n)] = r.u;
      BlockTensor sv = contract(diag_tensor(r.s), r.v, {{1, 0}});
      sv *= Complex(1.0 / sv.norm(), 0);
      t[ul(n + 1)] = std::move(sv);
      le[ul(n + 1)] = lenv_step(le[ul(n)], t[ul(n)], mpo.w[ul(n)]);
    }
    for (int n = L - 2; n >= 0; --n) {
      auto [e, theta] = solve_bond(n);
      energy = e;
      SvdResult r = svd_truncated(theta, 2, policy);
      t[ul(n + 1)] = r.v;
      BlockTensor us = contract(r.u, diag_tensor(r.s), {{2, 0}});
      us *= Complex(1.0 / us.norm(), 0);
      t[ul(n)] = std::move(us);
      re[ul(n + 1)] = renv_step(re[ul(n + 2)], t[ul(n + 1)], mpo.w[ul(n + 1)]);
    }
    if (sweep > 1 && std::abs(energy - prev) < conv) {
      MpsState state;
      state.a = t;
      state.c.assign(ul(L) + 1, BlockTensor());
      state.c[0] = identity_tensor(t[0].space(0).flipped());
      for (int n = 1; n <= L; ++n) state.c[ul(n)] = identity_tensor(t[ul(n - 1)].space(2));
      DmrgResult out;
      out.state = canonicalize(state);
      out.energy = energy;
      out.sweeps = sweep;
      return out;
    }
    prev = energy;
  }
  throw std::runtime_error("two_site_dmrg: not converged within max_sweeps");
}

double rel_energy_error(double e, double e_t) { return std::abs(e - e_t) / std::abs(e_t); }

}  // namespace qco
