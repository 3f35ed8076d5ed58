#include "qco/block_tensor.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace qco {

using Eigen::MatrixXcd;
using RowMajorMatrixXcd = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

std::vector<std::int64_t> strides_of(const std::vector<std::int64_t>& shape) {
  std::vector<std::int64_t> st(shape.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= shape[static_cast<std::size_t>(i)];
  }
  return st;
}

std::string key_str(const BlockKey& key) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < key.size(); ++i) os << (i ? "," : "") << key[i];
  os << ")";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// IndexSpace

IndexSpace::IndexSpace(ChargeGroup g, std::vector<Sector> s, Direction d)
    : group(g), sectors(std::move(s)), dir(d) {
  for (auto& sec : sectors) {
    if (sec.dim < 1) throw std::invalid_argument("IndexSpace: sector degeneracy must be >= 1");
    sec.charge = group.canon(sec.charge);
  }
  std::sort(sectors.begin(), sectors.end(),
            [](const Sector& a, const Sector& b) { return a.charge < b.charge; });
  for (std::size_t i = 1; i < sectors.size(); ++i)
    if (sectors[i].charge == sectors[i - 1].charge)
      throw std::invalid_argument("IndexSpace: duplicate charge in sector list");
  if (sectors.empty()) throw std::invalid_argument("IndexSpace: empty sector list");
}

IndexSpace IndexSpace::dual() const {
  std::vector<Sector> neg;
  neg.reserve(sectors.size());
  for (const auto& s : sectors) neg.push_back({group.inverse(s.charge), s.dim});
  return IndexSpace(group, std::move(neg), flip(dir));
}

std::int64_t IndexSpace::sector_dim(Charge q) const {
  q = group.canon(q);
  for (const auto& s : sectors)
    if (s.charge == q) return s.dim;
  return 0;
}

std::int64_t IndexSpace::sector_offset(Charge q) const {
  q = group.canon(q);
  std::int64_t off = 0;
  for (const auto& s : sectors) {
    if (s.charge == q) return off;
    off += s.dim;
  }
  throw std::out_of_range("IndexSpace: no sector with requested charge");
}

// ---------------------------------------------------------------------------
// DenseBlock

DenseBlock::DenseBlock(std::vector<std::int64_t> sh) : shape(std::move(sh)) {
  data.assign(static_cast<std::size_t>(size()), Complex(0, 0));
}

DenseBlock permute_dense(const DenseBlock& b, const std::vector<int>& perm) {
  const auto n = b.shape.size();
  if (perm.size() != n) throw std::invalid_argument("permute_dense: rank mismatch");
  std::vector<std::int64_t> new_shape(n);
  for (std::size_t i = 0; i < n; ++i) new_shape[i] = b.shape[static_cast<std::size_t>(perm[i])];
  DenseBlock out(new_shape);
  if (b.data.empty()) return out;
  const auto old_strides = strides_of(b.shape);
  // stride in the old layout for each new axis
  std::vector<std::int64_t> step(n);
  for (std::size_t i = 0; i < n; ++i) step[i] = old_strides[static_cast<std::size_t>(perm[i])];
  std::vector<std::int64_t> idx(n, 0);
  const std::int64_t total = out.size();
  std::int64_t src = 0;
  for (std::int64_t flat = 0; flat < total; ++flat) {
    out.data[static_cast<std::size_t>(flat)] = b.data[static_cast<std::size_t>(src)];
    // odometer increment
    for (int ax = static_cast<int>(n) - 1; ax >= 0; --ax) {
      auto a = static_cast<std::size_t>(ax);
      if (++idx[a] < new_shape[a]) {
        src += step[a];
        break;
      }
      src -= step[a] * (new_shape[a] - 1);
      idx[a] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// BlockTensor basics

BlockTensor::BlockTensor(std::vector<IndexSpace> spaces) : spaces_(std::move(spaces)) {}

bool BlockTensor::admissible(const BlockKey& key) const {
  if (key.size() != spaces_.size()) return false;
  if (spaces_.empty()) return true;
  const auto& g = spaces_[0].group;
  Charge acc = g.identity();
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (!spaces_[i].has(key[i])) return false;
    acc = g.fuse(acc, spaces_[i].signed_charge(key[i]));
  }
  return acc == g.identity();
}

std::vector<std::int64_t> BlockTensor::block_shape(const BlockKey& key) const {
  std::vector<std::int64_t> sh(key.size());
  for (std::size_t i = 0; i < key.size(); ++i) sh[i] = spaces_[i].sector_dim(key[i]);
  return sh;
}

DenseBlock& BlockTensor::block(const BlockKey& key) {
  auto it = blocks_.find(key);
  if (it != blocks_.end()) return it->second;
  if (!admissible(key))
    throw std::invalid_argument("BlockTensor: charge-violating block key " + key_str(key));
  return blocks_.emplace(key, DenseBlock(block_shape(key))).first->second;
}

const DenseBlock* BlockTensor::find(const BlockKey& key) const {
  auto it = blocks_.find(key);
  return it == blocks_.end() ? nullptr : &it->second;
}

void BlockTensor::insert(const BlockKey& key, DenseBlock b) {
  if (!admissible(key))
    throw std::invalid_argument("BlockTensor: charge-violating block key " + key_str(key));
  if (b.shape != block_shape(key))
    throw std::invalid_argument("BlockTensor: block shape mismatch at " + key_str(key));
  blocks_[key] = std::move(b);
}

double BlockTensor::norm2() const {
  double n = 0;
  for (const auto& [k, b] : blocks_)
    for (const auto& z : b.data) n += std::norm(z);
  return n;
}

double BlockTensor::norm() const { return std::sqrt(norm2()); }

bool BlockTensor::is_zero(double tol) const { return norm() <= tol; }

BlockTensor& BlockTensor::operator+=(const BlockTensor& o) {
  if (spaces_ != o.spaces_) throw std::invalid_argument("BlockTensor: space mismatch in addition");
  for (const auto& [k, b] : o.blocks_) {
    auto& mine = block(k);
    for (std::size_t i = 0; i < b.data.size(); ++i) mine.data[i] += b.data[i];
  }
  return *this;
}

BlockTensor& BlockTensor::operator-=(const BlockTensor& o) {
  if (spaces_ != o.spaces_) throw std::invalid_argument("BlockTensor: space mismatch in subtraction");
  for (const auto& [k, b] : o.blocks_) {
    auto& mine = block(k);
    for (std::size_t i = 0; i < b.data.size(); ++i) mine.data[i] -= b.data[i];
  }
  return *this;
}

BlockTensor& BlockTensor::operator*=(Complex c) {
  for (auto& [k, b] : blocks_)
    for (auto& z : b.data) z *= c;
  return *this;
}

void BlockTensor::prune(double tol) {
  for (auto it = blocks_.begin(); it != blocks_.end();) {
    double n = 0;
    for (const auto& z : it->second.data) n += std::norm(z);
    if (std::sqrt(n) <= tol)
      it = blocks_.erase(it);
    else
      ++it;
  }
}

void BlockTensor::check() const {
  for (const auto& [k, b] : blocks_) {
    if (!admissible(k))
      throw std::logic_error("BlockTensor: stored key violates charge conservation " + key_str(k));
    if (b.shape != block_shape(k))
      throw std::logic_error("BlockTensor: stored block shape mismatch at " + key_str(k));
  }
}

BlockTensor operator+(BlockTensor a, const BlockTensor& b) { return a += b; }
BlockTensor operator-(BlockTensor a, const BlockTensor& b) { return a -= b; }
BlockTensor operator*(Complex c, BlockTensor t) { return t *= c; }

BlockTensor conj(const BlockTensor& t) {
  std::vector<IndexSpace> sp;
  sp.reserve(t.spaces().size());
  for (const auto& s : t.spaces()) sp.push_back(s.flipped());
  BlockTensor out(std::move(sp));
  for (const auto& [k, b] : t.blocks()) {
    DenseBlock nb = b;
    for (auto& z : nb.data) z = std::conj(z);
    out.insert(k, std::move(nb));
  }
  return out;
}

BlockTensor permuted(const BlockTensor& t, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != t.rank())
    throw std::invalid_argument("permuted: rank mismatch");
  std::vector<IndexSpace> sp(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) sp[i] = t.space(perm[i]);
  BlockTensor out(std::move(sp));
  for (const auto& [k, b] : t.blocks()) {
    BlockKey nk(k.size());
    for (std::size_t i = 0; i < perm.size(); ++i) nk[i] = k[static_cast<std::size_t>(perm[i])];
    out.insert(nk, permute_dense(b, perm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contraction

BlockTensor contract(const BlockTensor& a, const BlockTensor& b,
                     const std::vector<std::pair<int, int>>& pairs) {
  std::vector<bool> used_a(static_cast<std::size_t>(a.rank()), false);
  std::vector<bool> used_b(static_cast<std::size_t>(b.rank()), false);
  for (const auto& [ia, ib] : pairs) {
    if (ia < 0 || ia >= a.rank() || ib < 0 || ib >= b.rank())
      throw std::invalid_argument("contract: pair index out of range");
    if (used_a[static_cast<std::size_t>(ia)] || used_b[static_cast<std::size_t>(ib)])
      throw std::invalid_argument("contract: repeated index in pairs");
    used_a[static_cast<std::size_t>(ia)] = used_b[static_cast<std::size_t>(ib)] = true;
    if (!contractible(a.space(ia), b.space(ib)))
      throw std::invalid_argument("contract: space mismatch on pair (" + std::to_string(ia) +
                                  "," + std::to_string(ib) + ")");
  }
  std::vector<int> free_a, free_b;
  for (int i = 0; i < a.rank(); ++i)
    if (!used_a[static_cast<std::size_t>(i)]) free_a.push_back(i);
  for (int i = 0; i < b.rank(); ++i)
    if (!used_b[static_cast<std::size_t>(i)]) free_b.push_back(i);

  // a permuted to (free..., paired...), b to (paired..., free...)
  std::vector<int> perm_a = free_a, perm_b;
  for (const auto& p : pairs) perm_a.push_back(p.first);
  for (const auto& p : pairs) perm_b.push_back(p.second);
  for (int i : free_b) perm_b.push_back(i);

  std::vector<IndexSpace> out_spaces;
  for (int i : free_a) out_spaces.push_back(a.space(i));
  for (int i : free_b) out_spaces.push_back(b.space(i));
  BlockTensor out(out_spaces);

  struct Piece {
    BlockKey free_key;
    std::vector<std::int64_t> free_shape;
    RowMajorMatrixXcd mat;  // free x contracted (a) / contracted x free (b)
  };
  std::map<BlockKey, std::vector<Piece>> a_by_con, b_by_con;

  const std::size_t nfa = free_a.size(), nfb = free_b.size(), np = pairs.size();
  for (const auto& [k, blk] : a.blocks()) {
    DenseBlock pb = permute_dense(blk, perm_a);
    BlockKey fk(nfa), ck(np);
    for (std::size_t i = 0; i < nfa; ++i) fk[i] = k[static_cast<std::size_t>(free_a[i])];
    for (std::size_t i = 0; i < np; ++i) ck[i] = k[static_cast<std::size_t>(pairs[i].first)];
    std::int64_t fd = 1, cd = 1;
    for (std::size_t i = 0; i < nfa; ++i) fd *= pb.shape[i];
    for (std::size_t i = nfa; i < pb.shape.size(); ++i) cd *= pb.shape[i];
    Piece piece;
    piece.free_key = fk;
    piece.free_shape.assign(pb.shape.begin(), pb.shape.begin() + static_cast<long>(nfa));
    piece.mat = Eigen::Map<const RowMajorMatrixXcd>(pb.data.data(), fd, cd);
    a_by_con[ck].push_back(std::move(piece));
  }
  for (const auto& [k, blk] : b.blocks()) {
    DenseBlock pb = permute_dense(blk, perm_b);
    BlockKey fk(nfb), ck(np);
    for (std::size_t i = 0; i < np; ++i) ck[i] = k[static_cast<std::size_t>(pairs[i].second)];
    for (std::size_t i = 0; i < nfb; ++i) fk[i] = k[static_cast<std::size_t>(free_b[i])];
    std::int64_t fd = 1, cd = 1;
    for (std::size_t i = 0; i < np; ++i) cd *= pb.shape[i];
    for (std::size_t i = np; i < pb.shape.size(); ++i) fd *= pb.shape[i];
    Piece piece;
    piece.free_key = fk;
    piece.free_shape.assign(pb.shape.begin() + static_cast<long>(np), pb.shape.end());
    piece.mat = Eigen::Map<const RowMajorMatrixXcd>(pb.data.data(), cd, fd);
    b_by_con[ck].push_back(std::move(piece));
  }

  for (const auto& [ck, apieces] : a_by_con) {
    auto it = b_by_con.find(ck);
    if (it == b_by_con.end()) continue;
    for (const auto& ap : apieces) {
      for (const auto& bp : it->second) {
        RowMajorMatrixXcd prod = ap.mat * bp.mat;
        BlockKey ok = ap.free_key;
        ok.insert(ok.end(), bp.free_key.begin(), bp.free_key.end());
        auto& dst = out.block(ok);
        Eigen::Map<RowMajorMatrixXcd>(dst.data.data(), prod.rows(), prod.cols()) += prod;
      }
    }
  }
  return out;
}

Complex dot(const BlockTensor& a, const BlockTensor& b) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < a.rank(); ++i) pairs.emplace_back(i, i);
  BlockTensor s = contract(conj(a), b, pairs);
  auto it = s.blocks().find(BlockKey{});
  return it == s.blocks().end() ? Complex(0, 0) : it->second.data[0];
}

// ---------------------------------------------------------------------------
// Fused matrix view across a bipartition

namespace {

struct FusedView {
  struct Combo {
    BlockKey key;
    std::int64_t dim = 0, offset = 0;
  };
  std::map<Charge, std::vector<Combo>> rows, cols;
  std::map<Charge, MatrixXcd> mats;
};

Charge fused_row_charge(const BlockTensor& t, const BlockKey& key, int n_left) {
  const auto& g = t.space(0).group;
  Charge acc = g.identity();
  for (int i = 0; i < n_left; ++i)
    acc = g.fuse(acc, t.space(i).signed_charge(key[static_cast<std::size_t>(i)]));
  return acc;
}

FusedView fuse_matrix(const BlockTensor& t, int n_left) {
  if (n_left <= 0 || n_left >= t.rank())
    throw std::invalid_argument("fuse_matrix: partition must be nonempty and proper");
  FusedView view;
  std::map<Charge, std::set<BlockKey>> row_keys, col_keys;
  for (const auto& [k, b] : t.blocks()) {
    Charge c = fused_row_charge(t, k, n_left);
    row_keys[c].insert(BlockKey(k.begin(), k.begin() + n_left));
    col_keys[c].insert(BlockKey(k.begin() + n_left, k.end()));
  }
  for (auto& [c, keys] : row_keys) {
    std::int64_t off = 0;
    for (const auto& k : keys) {
      std::int64_t d = 1;
      for (int i = 0; i < n_left; ++i) d *= t.space(i).sector_dim(k[static_cast<std::size_t>(i)]);
      view.rows[c].push_back({k, d, off});
      off += d;
    }
  }
  for (auto& [c, keys] : col_keys) {
    std::int64_t off = 0;
    for (const auto& k : keys) {
      std::int64_t d = 1;
      for (int i = n_left; i < t.rank(); ++i)
        d *= t.space(i).sector_dim(k[static_cast<std::size_t>(i - n_left)]);
      view.cols[c].push_back({k, d, off});
      off += d;
    }
  }
  for (const auto& [c, rcombos] : view.rows) {
    std::int64_t nr = 0, nc = 0;
    for (const auto& r : rcombos) nr += r.dim;
    for (const auto& cc : view.cols[c]) nc += cc.dim;
    view.mats[c] = MatrixXcd::Zero(nr, nc);
  }
  for (const auto& [k, b] : t.blocks()) {
    Charge c = fused_row_charge(t, k, n_left);
    BlockKey rk(k.begin(), k.begin() + n_left), ck(k.begin() + n_left, k.end());
    const auto& rcombos = view.rows[c];
    const auto& ccombos = view.cols[c];
    auto rit = std::find_if(rcombos.begin(), rcombos.end(),
                            [&](const FusedView::Combo& x) { return x.key == rk; });
    auto cit = std::find_if(ccombos.begin(), ccombos.end(),
                            [&](const FusedView::Combo& x) { return x.key == ck; });
    view.mats[c].block(rit->offset, cit->offset, rit->dim, cit->dim) =
        Eigen::Map<const RowMajorMatrixXcd>(b.data.data(), rit->dim, cit->dim);
  }
  return view;
}

IndexSpace bond_space(const ChargeGroup& g, const std::map<Charge, std::int64_t>& dims,
                      Direction dir) {
  std::vector<Sector> sec;
  for (const auto& [c, d] : dims)
    if (d > 0) sec.push_back({c, d});
  if (sec.empty()) throw std::runtime_error("bond_space: empty bond");
  return IndexSpace(g, std::move(sec), dir);
}

// Scatter a per-charge (rows x k) matrix into blocks (row_combos..., bond c).
BlockTensor unfuse_left(const BlockTensor& t, int n_left, const FusedView& view,
                        const std::map<Charge, MatrixXcd>& left_mats, const IndexSpace& bond) {
  std::vector<IndexSpace> sp(t.spaces().begin(), t.spaces().begin() + n_left);
  sp.push_back(bond);
  BlockTensor out(sp);
  for (const auto& [c, m] : left_mats) {
    if (!bond.has(c)) continue;
    for (const auto& combo : view.rows.at(c)) {
      BlockKey key = combo.key;
      key.push_back(c);
      DenseBlock blk(out.block_shape(key));
      Eigen::Map<RowMajorMatrixXcd>(blk.data.data(), combo.dim, m.cols()) =
          m.block(combo.offset, 0, combo.dim, m.cols());
      out.insert(key, std::move(blk));
    }
  }
  return out;
}

// Scatter a per-charge (k x cols) matrix into blocks (bond c, col_combos...).
BlockTensor unfuse_right(const BlockTensor& t, int n_left, const FusedView& view,
                         const std::map<Charge, MatrixXcd>& right_mats, const IndexSpace& bond) {
  std::vector<IndexSpace> sp{bond};
  sp.insert(sp.end(), t.spaces().begin() + n_left, t.spaces().end());
  BlockTensor out(sp);
  for (const auto& [c, m] : right_mats) {
    if (!bond.has(c)) continue;
    for (const auto& combo : view.cols.at(c)) {
      BlockKey key{c};
      key.insert(key.end(), combo.key.begin(), combo.key.end());
      DenseBlock blk(out.block_shape(key));
      Eigen::Map<RowMajorMatrixXcd>(blk.data.data(), m.rows(), combo.dim) =
          m.block(0, combo.offset, m.rows(), combo.dim);
      out.insert(key, std::move(blk));
    }
  }
  return out;
}

Eigen::JacobiSVD<MatrixXcd> jacobi_svd(const MatrixXcd& m) {
  return Eigen::JacobiSVD<MatrixXcd>(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

}  // namespace

// ---------------------------------------------------------------------------
// SVD / QR / LQ

double SingularSpectrum::sum() const {
  double s = 0;
  for (const auto& [c, v] : values)
    for (double x : v) s += x;
  return s;
}

double SingularSpectrum::norm2() const {
  double s = 0;
  for (const auto& [c, v] : values)
    for (double x : v) s += x * x;
  return s;
}

SvdResult svd_truncated(const BlockTensor& t, int n_left, const TruncationPolicy& policy,
                        SvdSaved* saved) {
  if (t.blocks().empty() || t.is_zero())
    throw std::invalid_argument("svd_truncated: input tensor is zero");
  FusedView view = fuse_matrix(t, n_left);

  struct Entry {
    double s;
    Charge c;
    std::int64_t idx;
  };
  std::vector<Entry> all;
  std::map<Charge, Eigen::JacobiSVD<MatrixXcd>> svds;
  for (const auto& [c, m] : view.mats) {
    svds.emplace(c, jacobi_svd(m));
    const auto& sv = svds.at(c).singularValues();
    for (std::int64_t i = 0; i < sv.size(); ++i) all.push_back({sv(i), c, i});
  }
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    if (a.s != b.s) return a.s > b.s;
    if (a.c != b.c) return a.c < b.c;
    return a.idx < b.idx;
  });
  const double smax = all.empty() ? 0.0 : all.front().s;
  std::int64_t keep = 0;
  for (const auto& e : all)
    if (e.s > policy.cutoff * smax && e.s > 0.0) ++keep;
  keep = std::min<std::int64_t>(keep, policy.chi_max);
  if (keep <= 0) throw std::runtime_error("svd_truncated: empty truncation");

  std::map<Charge, std::int64_t> kept_per_charge;
  double discarded = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (static_cast<std::int64_t>(i) < keep)
      kept_per_charge[all[i].c]++;
    else
      discarded += all[i].s * all[i].s;
  }

  const auto& group = t.space(0).group;
  IndexSpace bond_out = bond_space(group, kept_per_charge, Direction::Out);
  IndexSpace bond_in = bond_out.flipped();

  std::map<Charge, MatrixXcd> umats, vmats;
  SingularSpectrum spec;
  spec.space = bond_out;
  for (const auto& [c, k] : kept_per_charge) {
    if (k <= 0) continue;
    const auto& svd = svds.at(c);
    umats[c] = svd.matrixU().leftCols(k);
    vmats[c] = svd.matrixV().leftCols(k).adjoint();
    auto& vals = spec.values[c];
    vals.resize(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) vals[static_cast<std::size_t>(i)] = svd.singularValues()(i);
  }

  if (saved) {
    saved->factors.clear();
    saved->row_combos.clear();
    saved->col_combos.clear();
    saved->n_left = n_left;
    saved->spaces = t.spaces();
    for (const auto& [c, svd] : svds) {
      SvdSaved::ChargeFactors f;
      f.rows = svd.matrixU().rows();
      f.cols = svd.matrixV().rows();
      f.r = svd.singularValues().size();
      f.kept = kept_per_charge.count(c) ? kept_per_charge.at(c) : 0;
      f.u.resize(static_cast<std::size_t>(f.rows * f.r));
      Eigen::Map<RowMajorMatrixXcd>(f.u.data(), f.rows, f.r) = svd.matrixU();
      f.s.resize(static_cast<std::size_t>(f.r));
      for (std::int64_t i = 0; i < f.r; ++i) f.s[static_cast<std::size_t>(i)] = svd.singularValues()(i);
      f.vh.resize(static_cast<std::size_t>(f.r * f.cols));
      Eigen::Map<RowMajorMatrixXcd>(f.vh.data(), f.r, f.cols) = svd.matrixV().adjoint();
      saved->factors[c] = std::move(f);
      for (const auto& combo : view.rows.at(c))
        saved->row_combos[c].push_back({combo.key, combo.dim, combo.offset});
      for (const auto& combo : view.cols.at(c))
        saved->col_combos[c].push_back({combo.key, combo.dim, combo.offset});
    }
  }

  SvdResult res;
  res.u = unfuse_left(t, n_left, view, umats, bond_out);
  res.v = unfuse_right(t, n_left, view, vmats, bond_in);
  res.s = std::move(spec);
  res.discarded_weight = discarded;
  return res;
}

SvdResult svd_truncated(const BlockTensor& t, const std::vector<int>& left,
                        const TruncationPolicy& policy) {
  std::vector<int> perm = left;
  std::vector<bool> in_left(static_cast<std::size_t>(t.rank()), false);
  for (int i : left) in_left[static_cast<std::size_t>(i)] = true;
  for (int i = 0; i < t.rank(); ++i)
    if (!in_left[static_cast<std::size_t>(i)]) perm.push_back(i);
  return svd_truncated(permuted(t, perm), static_cast<int>(left.size()), policy);
}

QrResult qr_positive(const BlockTensor& t, int n_left) {
  FusedView view = fuse_matrix(t, n_left);
  const auto& group = t.space(0).group;
  std::map<Charge, MatrixXcd> qmats, rmats;
  std::map<Charge, std::int64_t> bond_dims;
  for (const auto& [c, m] : view.mats) {
    Eigen::HouseholderQR<MatrixXcd> qr(m);
    const std::int64_t k = std::min(m.rows(), m.cols());
    MatrixXcd q = qr.householderQ() * MatrixXcd::Identity(m.rows(), k);
    MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (std::int64_t i = 0; i < k; ++i) {
      Complex d = r(i, i);
      Complex phase = std::abs(d) > 0 ? d / std::abs(d) : Complex(1, 0);
      q.col(i) *= phase;
      r.row(i) *= std::conj(phase);
    }
    qmats[c] = std::move(q);
    rmats[c] = std::move(r);
    bond_dims[c] = k;
  }
  IndexSpace bond_out = bond_space(group, bond_dims, Direction::Out);
  QrResult res;
  res.q = unfuse_left(t, n_left, view, qmats, bond_out);
  res.r = unfuse_right(t, n_left, view, rmats, bond_out.flipped());
  return res;
}

LqResult lq_positive(const BlockTensor& t, int n_left) {
  FusedView view = fuse_matrix(t, n_left);
  const auto& group = t.space(0).group;
  std::map<Charge, MatrixXcd> lmats, qmats;
  std::map<Charge, std::int64_t> bond_dims;
  for (const auto& [c, m] : view.mats) {
    // LQ of m via QR of its adjoint
    Eigen::HouseholderQR<MatrixXcd> qr(m.adjoint());
    const std::int64_t k = std::min(m.rows(), m.cols());
    MatrixXcd qt = qr.householderQ() * MatrixXcd::Identity(m.cols(), k);
    MatrixXcd rt = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    MatrixXcd l = rt.adjoint();   // rows x k, lower triangular
    MatrixXcd q = qt.adjoint();   // k x cols
    for (std::int64_t i = 0; i < k; ++i) {
      Complex d = l(i, i);
      Complex phase = std::abs(d) > 0 ? d / std::abs(d) : Complex(1, 0);
      l.col(i) *= std::conj(phase);
      q.row(i) *= phase;
    }
    lmats[c] = std::move(l);
    qmats[c] = std::move(q);
    bond_dims[c] = k;
  }
  IndexSpace bond_out = bond_space(group, bond_dims, Direction::Out);
  LqResult res;
  res.l = unfuse_left(t, n_left, view, lmats, bond_out);
  res.q = unfuse_right(t, n_left, view, qmats, bond_out.flipped());
  return res;
}

RqResult rq_positive(const BlockTensor& t, int n_left) {
  FusedView view = fuse_matrix(t, n_left);
  const auto& group = t.space(0).group;
  std::map<Charge, MatrixXcd> rmats, qmats;
  std::map<Charge, std::int64_t> bond_dims;
  for (const auto& [c, m] : view.mats) {
    // RQ via LQ of the fully index-reversed matrix
    MatrixXcd mr = m.reverse();
    Eigen::HouseholderQR<MatrixXcd> qr(mr.adjoint());
    const std::int64_t k = std::min(m.rows(), m.cols());
    MatrixXcd qt = qr.householderQ() * MatrixXcd::Identity(m.cols(), k);
    MatrixXcd rt = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    MatrixXcd l = rt.adjoint();
    MatrixXcd q = qt.adjoint();
    for (std::int64_t i = 0; i < k; ++i) {
      Complex d = l(i, i);
      Complex phase = std::abs(d) > 0 ? d / std::abs(d) : Complex(1, 0);
      l.col(i) *= std::conj(phase);
      q.row(i) *= phase;
    }
    rmats[c] = l.reverse();
    qmats[c] = q.reverse();
    bond_dims[c] = k;
  }
  IndexSpace bond_out = bond_space(group, bond_dims, Direction::Out);
  RqResult res;
  res.r = unfuse_left(t, n_left, view, rmats, bond_out);
  res.q = unfuse_right(t, n_left, view, qmats, bond_out.flipped());
  return res;
}

BlockTensor diag_tensor(const SingularSpectrum& s) {
  IndexSpace in = s.space.flipped();
  in.dir = Direction::In;
  IndexSpace out = s.space;
  out.dir = Direction::Out;
  BlockTensor t({in, out});
  for (const auto& [c, vals] : s.values) {
    BlockKey key{c, c};
    auto& blk = t.block(key);
    const auto n = static_cast<std::int64_t>(vals.size());
    for (std::int64_t i = 0; i < n; ++i)
      blk.data[static_cast<std::size_t>(i * n + i)] = vals[static_cast<std::size_t>(i)];
  }
  return t;
}

BlockTensor identity_tensor(const IndexSpace& space) {
  IndexSpace in = space;
  in.dir = Direction::In;
  IndexSpace out = space;
  out.dir = Direction::Out;
  BlockTensor t({in, out});
  for (const auto& sec : space.sectors) {
    auto& blk = t.block({sec.charge, sec.charge});
    for (std::int64_t i = 0; i < sec.dim; ++i)
      blk.data[static_cast<std::size_t>(i * sec.dim + i)] = 1.0;
  }
  return t;
}

BlockTensor pinv(const BlockTensor& c, double tol) {
  if (c.rank() != 2) throw std::invalid_argument("pinv: rank-2 tensor required");
  double smax = 0;
  std::map<BlockKey, Eigen::JacobiSVD<MatrixXcd>> svds;
  for (const auto& [k, b] : c.blocks()) {
    MatrixXcd m = Eigen::Map<const RowMajorMatrixXcd>(b.data.data(), b.shape[0], b.shape[1]);
    svds.emplace(k, jacobi_svd(m));
    if (svds.at(k).singularValues().size() > 0)
      smax = std::max(smax, svds.at(k).singularValues()(0));
  }
  BlockTensor out({c.space(1).flipped(), c.space(0).flipped()});
  for (const auto& [k, svd] : svds) {
    const auto& sv = svd.singularValues();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (std::int64_t i = 0; i < sv.size(); ++i)
      if (sv(i) > tol * smax) inv(i) = 1.0 / sv(i);
    MatrixXcd p = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
    BlockKey ok{k[1], k[0]};
    DenseBlock blk(out.block_shape(ok));
    Eigen::Map<RowMajorMatrixXcd>(blk.data.data(), p.rows(), p.cols()) = p;
    out.insert(ok, std::move(blk));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random unitaries

namespace {

// All key combinations over `spaces[from..to)` with their fused signed charge.
void enumerate_combos(const std::vector<IndexSpace>& spaces, std::size_t from, std::size_t to,
                      std::size_t i, BlockKey& cur, Charge acc,
                      std::map<Charge, std::vector<std::pair<BlockKey, std::int64_t>>>& out) {
  const auto& g = spaces[from].group;
  if (i == to) {
    std::int64_t d = 1;
    for (std::size_t j = from; j < to; ++j) d *= spaces[j].sector_dim(cur[j - from]);
    out[acc].push_back({cur, d});
    return;
  }
  for (const auto& sec : spaces[i].sectors) {
    cur[i - from] = sec.charge;
    enumerate_combos(spaces, from, to, i + 1, cur, g.fuse(acc, spaces[i].signed_charge(sec.charge)),
                     out);
  }
}

}  // namespace

BlockTensor random_unitary(const IndexSpace& site1, const IndexSpace& site2, double eps,
                           std::mt19937_64& rng, bool swap_symmetric) {
  if (swap_symmetric && !(site1 == site2))
    throw std::invalid_argument("random_unitary: swap symmetrization needs equal site spaces");
  IndexSpace out1 = site1, out2 = site2;
  out1.dir = out2.dir = Direction::Out;
  IndexSpace in1 = site1, in2 = site2;
  in1.dir = in2.dir = Direction::In;
  std::vector<IndexSpace> spaces{out1, out2, in1, in2};
  BlockTensor gate(spaces);
  const auto& g = site1.group;

  // fused charge groups over the (in1, in2) pair
  std::map<Charge, std::vector<std::pair<BlockKey, std::int64_t>>> in_combos;
  BlockKey cur(2);
  enumerate_combos(spaces, 2, 4, 2, cur, g.identity(), in_combos);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& [c, combos] : in_combos) {
    std::int64_t dim = 0;
    for (const auto& [k, d] : combos) dim += d;
    MatrixXcd kmat(dim, dim);
    for (std::int64_t i = 0; i < dim; ++i)
      for (std::int64_t j = 0; j < dim; ++j) {
        double re = normal(rng), im = normal(rng);
        kmat(i, j) = Complex(re, im) / std::sqrt(2.0);
      }
    MatrixXcd skew = 0.5 * (kmat - kmat.adjoint());
    if (swap_symmetric) {
      // average the generator with its swap conjugate P K P, where P permutes
      // the fused (in1, in2) basis by exchanging the two sites
      std::map<BlockKey, std::int64_t> off;
      std::int64_t o = 0;
      for (const auto& [k, d] : combos) {
        off[k] = o;
        o += d;
      }
      std::vector<std::int64_t> perm(static_cast<std::size_t>(dim));
      std::int64_t base = 0;
      for (const auto& [k, d] : combos) {
        const std::int64_t d1 = in1.sector_dim(k[0]);
        const std::int64_t d2 = in2.sector_dim(k[1]);
        const std::int64_t tbase = off.at(BlockKey{k[1], k[0]});
        for (std::int64_t i = 0; i < d1; ++i)
          for (std::int64_t j = 0; j < d2; ++j)
            perm[static_cast<std::size_t>(base + i * d2 + j)] = tbase + j * d1 + i;
        base += d;
      }
      MatrixXcd swapped(dim, dim);
      for (std::int64_t i = 0; i < dim; ++i)
        for (std::int64_t j = 0; j < dim; ++j)
          swapped(i, j) = skew(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      skew = 0.5 * (skew + swapped);
    }
    MatrixXcd u;
    if (eps == 0.0) {
      u = MatrixXcd::Identity(dim, dim);
    } else {
      // exp(eps*K) via eigendecomposition of the Hermitian iK
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(Complex(0, 1) * skew);
      Eigen::VectorXcd phases(dim);
      for (std::int64_t i = 0; i < dim; ++i)
        phases(i) = std::exp(Complex(0, -eps * es.eigenvalues()(i)));
      u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    }
    // scatter into 4-leg blocks; rows are the (out1, out2) combos in the same
    // order (same sectors, mirrored signed charge)
    std::int64_t roff = 0;
    for (const auto& [rk, rd] : combos) {
      std::int64_t coff = 0;
      for (const auto& [ck, cd] : combos) {
        BlockKey key{rk[0], rk[1], ck[0], ck[1]};
        DenseBlock blk(gate.block_shape(key));
        Eigen::Map<RowMajorMatrixXcd>(blk.data.data(), rd, cd) = u.block(roff, coff, rd, cd);
        gate.insert(key, std::move(blk));
        coff += cd;
      }
      roff += rd;
    }
  }
  return gate;
}

// ---------------------------------------------------------------------------
// Dense bridging

namespace {

void dense_offsets(const IndexSpace& s, std::map<Charge, std::int64_t>& off) {
  std::int64_t acc = 0;
  for (const auto& sec : s.sectors) {
    off[sec.charge] = acc;
    acc += sec.dim;
  }
}

}  // namespace

DenseBlock to_dense(const BlockTensor& t) {
  std::vector<std::int64_t> shape;
  for (const auto& s : t.spaces()) shape.push_back(s.dim());
  DenseBlock out(shape);
  const auto gstrides = strides_of(shape);
  const std::size_t n = shape.size();
  for (const auto& [k, b] : t.blocks()) {
    std::int64_t base = 0;
    for (std::size_t i = 0; i < n; ++i) base += t.space(static_cast<int>(i)).sector_offset(k[i]) * gstrides[i];
    if (n == 0) {
      out.data[0] += b.data[0];
      continue;
    }
    const auto bstrides = strides_of(b.shape);
    std::vector<std::int64_t> idx(n, 0);
    std::int64_t dst = base;
    for (std::int64_t flat = 0; flat < b.size(); ++flat) {
      out.data[static_cast<std::size_t>(dst)] = b.data[static_cast<std::size_t>(flat)];
      for (int ax = static_cast<int>(n) - 1; ax >= 0; --ax) {
        auto a = static_cast<std::size_t>(ax);
        if (++idx[a] < b.shape[a]) {
          dst += gstrides[a];
          break;
        }
        dst -= gstrides[a] * (b.shape[a] - 1);
        idx[a] = 0;
      }
    }
  }
  return out;
}

namespace {

void enumerate_keys(const std::vector<IndexSpace>& spaces, std::size_t i, BlockKey& cur,
                    Charge acc, std::vector<BlockKey>& out) {
  const auto& g = spaces.empty() ? ChargeGroup::trivial() : spaces[0].group;
  if (i == spaces.size()) {
    if (acc == g.identity()) out.push_back(cur);
    return;
  }
  for (const auto& sec : spaces[i].sectors) {
    cur[i] = sec.charge;
    enumerate_keys(spaces, i + 1, cur, g.fuse(acc, spaces[i].signed_charge(sec.charge)), out);
  }
}

}  // namespace

BlockTensor from_dense(const DenseBlock& dense, const std::vector<IndexSpace>& spaces,
                       double tol) {
  std::vector<std::int64_t> shape;
  for (const auto& s : spaces) shape.push_back(s.dim());
  if (shape != dense.shape) throw std::invalid_argument("from_dense: shape mismatch");
  BlockTensor t(spaces);
  std::vector<BlockKey> keys;
  BlockKey cur(spaces.size());
  enumerate_keys(spaces, 0, cur,
                 spaces.empty() ? 0 : spaces[0].group.identity(), keys);
  DenseBlock residual = dense;
  const auto gstrides = strides_of(shape);
  const std::size_t n = spaces.size();
  for (const auto& k : keys) {
    DenseBlock blk(t.block_shape(k));
    std::int64_t base = 0;
    for (std::size_t i = 0; i < n; ++i)
      base += spaces[i].sector_offset(k[i]) * gstrides[i];
    std::vector<std::int64_t> idx(n, 0);
    std::int64_t src = base;
    for (std::int64_t flat = 0; flat < blk.size(); ++flat) {
      blk.data[static_cast<std::size_t>(flat)] = residual.data[static_cast<std::size_t>(src)];
      residual.data[static_cast<std::size_t>(src)] = 0;
      for (int ax = static_cast<int>(n) - 1; ax >= 0; --ax) {
        auto a = static_cast<std::size_t>(ax);
        if (++idx[a] < blk.shape[a]) {
          src += gstrides[a];
          break;
        }
        src -= gstrides[a] * (blk.shape[a] - 1);
        idx[a] = 0;
      }
    }
    double bn = 0;
    for (const auto& z : blk.data) bn += std::norm(z);
    if (bn > 0) t.insert(k, std::move(blk));
  }
  double viol = 0;
  for (const auto& z : residual.data) viol = std::max(viol, std::abs(z));
  if (viol > tol)
    throw std::invalid_argument("from_dense: input violates charge conservation (max " +
                                std::to_string(viol) + ")");
  return t;
}

// ---------------------------------------------------------------------------
// Serialization ("gt1")

nlohmann::json space_to_json(const IndexSpace& s) {
  nlohmann::json j;
  j["group"] = s.group.name();
  j["dir"] = s.dir == Direction::In ? "in" : "out";
  auto& sec = j["sectors"] = nlohmann::json::array();
  for (const auto& x : s.sectors) sec.push_back({x.charge, x.dim});
  return j;
}

IndexSpace space_from_json(const nlohmann::json& j) {
  std::string gname = j.at("group");
  ChargeGroup g;
  if (gname == "trivial")
    g = ChargeGroup::trivial();
  else if (gname == "u1")
    g = ChargeGroup::u1();
  else if (gname.size() > 1 && gname[0] == 'z')
    g = ChargeGroup::z(std::stoll(gname.substr(1)));
  else
    throw std::invalid_argument("space_from_json: unknown group " + gname);
  std::vector<Sector> sectors;
  for (const auto& x : j.at("sectors")) sectors.push_back({x.at(0), x.at(1)});
  Direction d = j.at("dir") == "in" ? Direction::In : Direction::Out;
  return IndexSpace(g, std::move(sectors), d);
}

nlohmann::json tensor_to_json(const BlockTensor& t) {
  nlohmann::json j;
  j["format"] = "gt1";
  auto& sp = j["spaces"] = nlohmann::json::array();
  for (const auto& s : t.spaces()) sp.push_back(space_to_json(s));
  auto& bl = j["blocks"] = nlohmann::json::array();
  for (const auto& [k, b] : t.blocks()) {
    nlohmann::json jb;
    jb["key"] = k;
    std::vector<double> interleaved;
    interleaved.reserve(b.data.size() * 2);
    for (const auto& z : b.data) {
      interleaved.push_back(z.real());
      interleaved.push_back(z.imag());
    }
    jb["data"] = std::move(interleaved);
    bl.push_back(std::move(jb));
  }
  return j;
}

BlockTensor tensor_from_json(const nlohmann::json& j) {
  if (j.at("format") != "gt1")
    throw std::invalid_argument("tensor_from_json: unsupported format tag");
  std::vector<IndexSpace> spaces;
  for (const auto& s : j.at("spaces")) spaces.push_back(space_from_json(s));
  BlockTensor t(spaces);
  for (const auto& jb : j.at("blocks")) {
    BlockKey key = jb.at("key").get<BlockKey>();
    const auto& vals = jb.at("data");
    DenseBlock blk(t.block_shape(key));
    if (static_cast<std::int64_t>(vals.size()) != 2 * blk.size())
      throw std::invalid_argument("tensor_from_json: block size mismatch");
    for (std::int64_t i = 0; i < blk.size(); ++i)
      blk.data[static_cast<std::size_t>(i)] =
          Complex(vals[static_cast<std::size_t>(2 * i)], vals[static_cast<std::size_t>(2 * i + 1)]);
    t.insert(key, std::move(blk));
  }
  return t;
}

}  // namespace qco
