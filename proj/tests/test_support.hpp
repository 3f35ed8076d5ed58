#pragma once

#include <Eigen/Dense>
#include <complex>
#include <random>
#include <vector>

#include "qco/block_tensor.hpp"

namespace qcotest {

using qco::BlockTensor;
using qco::Charge;
using qco::ChargeGroup;
using qco::Complex;
using qco::Direction;
using qco::IndexSpace;
using qco::Sector;

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline IndexSpace trivial_space(std::int64_t dim, Direction d) {
  return IndexSpace(ChargeGroup::trivial(), {{0, dim}}, d);
}

inline IndexSpace z2_space(std::int64_t d0, std::int64_t d1, Direction d) {
  return IndexSpace(ChargeGroup::z(2), {{0, d0}, {1, d1}}, d);
}

inline IndexSpace u1_space(std::vector<Sector> sectors, Direction d) {
  return IndexSpace(ChargeGroup::u1(), std::move(sectors), d);
}

// Fills every admissible block with iid complex normal entries.
inline BlockTensor random_tensor(const std::vector<IndexSpace>& spaces, std::mt19937_64& rng) {
  BlockTensor t(spaces);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> idx(spaces.size(), 0);
  // enumerate all sector combinations
  std::vector<qco::BlockKey> keys;
  qco::BlockKey cur(spaces.size());
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == spaces.size()) {
      if (t.admissible(cur)) keys.push_back(cur);
      return;
    }
    for (const auto& sec : spaces[i].sectors) {
      cur[i] = sec.charge;
      rec(i + 1);
    }
  };
  rec(0);
  for (const auto& k : keys) {
    auto& blk = t.block(k);
    for (auto& z : blk.data) z = Complex(normal(rng), normal(rng));
  }
  return t;
}

inline double tensor_dist(const BlockTensor& a, const BlockTensor& b) {
  return (a - b).norm();
}

// Dense matricization across (first n_left legs | rest).
inline Eigen::MatrixXcd dense_matrix(const BlockTensor& t, int n_left) {
  auto d = qco::to_dense(t);
  std::int64_t rows = 1, cols = 1;
  for (int i = 0; i < n_left; ++i) rows *= d.shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(n_left); i < d.shape.size(); ++i) cols *= d.shape[i];
  using RM = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RM>(d.data.data(), rows, cols);
}

inline Eigen::VectorXcd dense_vector(const BlockTensor& t) {
  auto d = qco::to_dense(t);
  return Eigen::Map<const Eigen::VectorXcd>(d.data.data(), static_cast<Eigen::Index>(d.data.size()));
}

// u * diag(s) * v recombined.
inline BlockTensor recompose(const qco::SvdResult& r) {
  BlockTensor us = qco::contract(r.u, qco::diag_tensor(r.s), {{r.u.rank() - 1, 0}});
  return qco::contract(us, r.v, {{us.rank() - 1, 0}});
}

}  // namespace qcotest
