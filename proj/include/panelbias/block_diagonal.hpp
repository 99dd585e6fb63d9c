#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "panelbias/errors.hpp"

namespace panelbias {

using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// One dense diagonal block acting on an arbitrary (sorted) index set.
struct CovarianceBlock {
  std::vector<Index> indices;
  Eigen::MatrixXd cov;
};

/// Symmetric block-diagonal covariance (G or R). Blocks may act on
/// non-contiguous index sets; the all-1x1 case is stored as a plain diagonal.
class BlockDiagonal {
 public:
  BlockDiagonal() = default;

  static BlockDiagonal identity(Index n, double scale = 1.0) {
    return diagonal(Eigen::VectorXd::Constant(n, scale));
  }

  static BlockDiagonal diagonal(Eigen::VectorXd d) {
    BlockDiagonal out;
    out.n_ = d.size();
    out.diag_ = std::move(d);
    out.is_diagonal_ = true;
    out.factorize();
    return out;
  }

  static BlockDiagonal from_blocks(Index n, std::vector<CovarianceBlock> blocks) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (auto& b : blocks) {
      if (b.cov.rows() != static_cast<Index>(b.indices.size()) || b.cov.cols() != b.cov.rows())
        fail(ErrorKind::Consistency, "covariance block size does not match its index set");
      for (Index i : b.indices) {
        if (i < 0 || i >= n) fail(ErrorKind::Consistency, "covariance block index out of range");
        if (seen[static_cast<std::size_t>(i)]++)
          fail(ErrorKind::Consistency, "covariance blocks overlap at index " + std::to_string(i + 1));
      }
      if ((b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() >
          1e-10 * std::max(1.0, b.cov.cwiseAbs().maxCoeff()))
        fail(ErrorKind::Validity, "covariance block is not symmetric");
    }
    // Indices not covered by any block get a zero 1x1 block.
    for (Index i = 0; i < n; ++i)
      if (!seen[static_cast<std::size_t>(i)]) blocks.push_back({{i}, Eigen::MatrixXd::Zero(1, 1)});

    bool all_scalar = true;
    for (const auto& b : blocks) all_scalar = all_scalar && b.indices.size() == 1;
    if (all_scalar) {
      Eigen::VectorXd d(n);
      for (const auto& b : blocks) d(b.indices[0]) = b.cov(0, 0);
      return diagonal(std::move(d));
    }
    BlockDiagonal out;
    out.n_ = n;
    out.is_diagonal_ = false;
    out.blocks_ = std::move(blocks);
    out.factorize();
    return out;
  }

  /// Splits a symmetric sparse matrix into the connected components of its
  /// sparsity pattern.
  static BlockDiagonal from_sparse(const SparseMatrix& a) {
    if (a.rows() != a.cols()) fail(ErrorKind::Consistency, "covariance matrix is not square");
    const Index n = a.rows();
    std::vector<Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (Index k = 0; k < a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a, k); it; ++it)
        if (it.value() != 0.0) parent[find(it.row())] = find(it.col());

    std::vector<Index> comp_of_root(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<Index>> comps;
    for (Index i = 0; i < n; ++i) {
      Index r = find(i);
      if (comp_of_root[r] < 0) {
        comp_of_root[r] = static_cast<Index>(comps.size());
        comps.emplace_back();
      }
      comps[comp_of_root[r]].push_back(i);
    }
    std::vector<CovarianceBlock> blocks;
    blocks.reserve(comps.size());
    std::vector<Index> pos(static_cast<std::size_t>(n));
    for (auto& c : comps) {
      for (std::size_t t = 0; t < c.size(); ++t) pos[c[t]] = static_cast<Index>(t);
      blocks.push_back({c, Eigen::MatrixXd::Zero(static_cast<Index>(c.size()), static_cast<Index>(c.size()))});
    }
    for (Index k = 0; k < a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
        auto& b = blocks[comp_of_root[find(it.row())]];
        b.cov(pos[it.row()], pos[it.col()]) = it.value();
      }
    return from_blocks(n, std::move(blocks));
  }

  Index size() const { return n_; }
  bool is_diagonal() const { return is_diagonal_; }
  bool positive_definite() const { return positive_definite_; }

  /// Smallest diagonal entry (used to validate variance components).
  double min_diagonal() const {
    if (is_diagonal_) return n_ ? diag_.minCoeff() : 0.0;
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks_) m = std::min(m, b.cov.diagonal().minCoeff());
    return m;
  }

  const std::vector<CovarianceBlock>& blocks() const { return blocks_; }
  const Eigen::VectorXd& diagonal_values() const { return diag_; }

  BlockDiagonal scaled(double c) const {
    if (is_diagonal_) return diagonal(diag_ * c);
    auto blocks = blocks_;
    for (auto& b : blocks) b.cov *= c;
    return from_blocks(n_, std::move(blocks));
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, n_);
    if (is_diagonal_) {
      out.diagonal() = diag_;
      return out;
    }
    for (const auto& b : blocks_)
      for (std::size_t i = 0; i < b.indices.size(); ++i)
        for (std::size_t j = 0; j < b.indices.size(); ++j)
          out(b.indices[i], b.indices[j]) = b.cov(static_cast<Index>(i), static_cast<Index>(j));
    return out;
  }

  SparseMatrix sparse() const {
    std::vector<Triplet> trips;
    if (is_diagonal_) {
      for (Index i = 0; i < n_; ++i)
        if (diag_(i) != 0.0) trips.emplace_back(i, i, diag_(i));
    } else {
      for (const auto& b : blocks_)
        for (std::size_t i = 0; i < b.indices.size(); ++i)
          for (std::size_t j = 0; j < b.indices.size(); ++j) {
            double v = b.cov(static_cast<Index>(i), static_cast<Index>(j));
            if (v != 0.0) trips.emplace_back(b.indices[i], b.indices[j], v);
          }
    }
    SparseMatrix out(n_, n_);
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
  }

  /// Inverse as a sparse matrix; requires positive definiteness.
  SparseMatrix inverse_sparse() const {
    require_positive_definite("covariance");
    if (is_diagonal_) {
      std::vector<Triplet> trips;
      for (Index i = 0; i < n_; ++i) trips.emplace_back(i, i, 1.0 / diag_(i));
      SparseMatrix out(n_, n_);
      out.setFromTriplets(trips.begin(), trips.end());
      return out;
    }
    std::vector<Triplet> trips;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      Eigen::MatrixXd inv = factors_[k].solve(
          Eigen::MatrixXd::Identity(b.cov.rows(), b.cov.cols()));
      for (std::size_t i = 0; i < b.indices.size(); ++i)
        for (std::size_t j = 0; j < b.indices.size(); ++j)
          trips.emplace_back(b.indices[i], b.indices[j], inv(static_cast<Index>(i), static_cast<Index>(j)));
    }
    SparseMatrix out(n_, n_);
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
  }

  /// Returns this^{-1} * rhs.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    require_positive_definite("covariance");
    if (rhs.rows() != n_) fail(ErrorKind::Consistency, "solve: row mismatch");
    if (is_diagonal_) return diag_.cwiseInverse().asDiagonal() * rhs;
    Eigen::MatrixXd out(rhs.rows(), rhs.cols());
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& idx = blocks_[k].indices;
      Eigen::MatrixXd sub(static_cast<Index>(idx.size()), rhs.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Index>(i)) = rhs.row(idx[i]);
      sub = factors_[k].solve(sub);
      for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) = sub.row(static_cast<Index>(i));
    }
    return out;
  }

  /// this^{-1} * Z for sparse Z, exploiting the block structure.
  SparseMatrix solve_sparse(const SparseMatrix& z) const {
    require_positive_definite("covariance");
    if (z.rows() != n_) fail(ErrorKind::Consistency, "solve: row mismatch");
    if (is_diagonal_) return diag_.cwiseInverse().asDiagonal() * z;
    Eigen::SparseMatrix<double, Eigen::RowMajor> zr(z);
    std::vector<Triplet> trips;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& idx = blocks_[k].indices;
      std::vector<Index> cols;
      for (Index r : idx)
        for (decltype(zr)::InnerIterator it(zr, r); it; ++it) cols.push_back(it.col());
      std::sort(cols.begin(), cols.end());
      cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
      if (cols.empty()) continue;
      Eigen::MatrixXd sub = Eigen::MatrixXd::Zero(static_cast<Index>(idx.size()), static_cast<Index>(cols.size()));
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (decltype(zr)::InnerIterator it(zr, idx[i]); it; ++it) {
          auto c = std::lower_bound(cols.begin(), cols.end(), it.col()) - cols.begin();
          sub(static_cast<Index>(i), c) = it.value();
        }
      sub = factors_[k].solve(sub);
      for (Index i = 0; i < sub.rows(); ++i)
        for (Index c = 0; c < sub.cols(); ++c)
          if (sub(i, c) != 0.0) trips.emplace_back(idx[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(c)], sub(i, c));
    }
    SparseMatrix out(z.rows(), z.cols());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
  }

  double log_determinant() const {
    require_positive_definite("covariance");
    if (is_diagonal_) return diag_.array().log().sum();
    double s = 0.0;
    for (const auto& f : factors_) s += 2.0 * f.matrixLLT().diagonal().array().log().sum();
    return s;
  }

  void require_positive_definite(const std::string& what) const {
    if (!positive_definite_)
      fail(ErrorKind::Numerical, "factorization error: " + what + " matrix is not positive definite");
  }

 private:
  void factorize() {
    if (is_diagonal_) {
      positive_definite_ = (diag_.array() > 0.0).all() && diag_.allFinite();
      return;
    }
    positive_definite_ = true;
    factors_.clear();
    factors_.reserve(blocks_.size());
    for (const auto& b : blocks_) {
      factors_.emplace_back(b.cov);
      if (factors_.back().info() != Eigen::Success ||
          !(factors_.back().matrixLLT().diagonal().array() > 0.0).all())
        positive_definite_ = false;
    }
  }

  Index n_ = 0;
  bool is_diagonal_ = true;
  bool positive_definite_ = false;
  Eigen::VectorXd diag_;
  std::vector<CovarianceBlock> blocks_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors_;
};

}  // namespace panelbias
