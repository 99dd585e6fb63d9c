#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>

#include "panelbias/block_diagonal.hpp"
#include "panelbias/errors.hpp"

namespace panelbias {

/// Default relative eigenvalue cutoff for generalized inverses.
inline constexpr double kPinvTolerance = 1e-10;

struct PseudoInverse {
  Eigen::MatrixXd inverse;
  Index rank = 0;
  Eigen::VectorXd eigenvalues;  // ascending, as computed (before thresholding)
};

/// Moore-Penrose inverse of a symmetric matrix through its eigendecomposition.
/// Eigenvalues with |lambda| <= tol * max|lambda| count as zero; larger
/// negative eigenvalues are inverted like positive ones.
inline PseudoInverse pseudo_inverse(const Eigen::MatrixXd& a, double tol = kPinvTolerance) {
  if (a.rows() != a.cols()) fail(ErrorKind::Consistency, "pseudo_inverse: matrix is not square");
  PseudoInverse out;
  out.inverse = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  if (a.size() == 0) return out;
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) fail(ErrorKind::Numerical, "pseudo_inverse: eigendecomposition failed");
  out.eigenvalues = eig.eigenvalues();
  const double cutoff = tol * out.eigenvalues.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv_vals = Eigen::VectorXd::Zero(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double lam = out.eigenvalues(i);
    if (std::abs(lam) > cutoff && std::abs(lam) > 0.0) {
      inv_vals(i) = 1.0 / lam;
      ++out.rank;
    }
  }
  const auto& q = eig.eigenvectors();
  out.inverse = q * inv_vals.asDiagonal() * q.transpose();
  return out;
}

/// Sum of logs of the retained (positive) eigenvalues; log|A| for SPD A.
inline double log_pseudo_determinant(const PseudoInverse& pinv, double tol = kPinvTolerance) {
  if (pinv.eigenvalues.size() == 0) return 0.0;
  const double cutoff = tol * pinv.eigenvalues.cwiseAbs().maxCoeff();
  double s = 0.0;
  for (Index i = 0; i < pinv.eigenvalues.size(); ++i)
    if (pinv.eigenvalues(i) > cutoff) s += std::log(pinv.eigenvalues(i));
  return s;
}

/// Solves against V = Z G Z' + R. Uses the Woodbury identity with a sparse
/// factorization of M = G^{-1} + Z'R^{-1}Z when G is positive definite, and a
/// dense Cholesky of V otherwise. Immutable after construction.
class VSolver {
 public:
  VSolver(SparseMatrix z, BlockDiagonal g, BlockDiagonal r)
      : z_(std::move(z)), g_(std::move(g)), r_(std::move(r)) {
    if (z_.rows() != r_.size())
      fail(ErrorKind::Consistency, "V solver: Z has " + std::to_string(z_.rows()) +
                                       " rows but R is " + std::to_string(r_.size()) + "x" +
                                       std::to_string(r_.size()));
    if (z_.cols() != g_.size())
      fail(ErrorKind::Consistency, "V solver: Z has " + std::to_string(z_.cols()) +
                                       " columns but G is " + std::to_string(g_.size()) + "x" +
                                       std::to_string(g_.size()));
    if (g_.size() > 0 && g_.min_diagonal() < 0.0)
      fail(ErrorKind::Validity, "V solver: G has a negative diagonal entry");
    r_.require_positive_definite("R");

    if (g_.size() > 0 && g_.positive_definite()) {
      woodbury_ = true;
      rinv_z_ = r_.solve_sparse(z_);
      SparseMatrix m = g_.inverse_sparse() + SparseMatrix(z_.transpose() * rinv_z_);
      m.makeCompressed();
      auto ldlt = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(m);
      if (ldlt->info() != Eigen::Success || !(ldlt->vectorD().array() > 0.0).all())
        fail(ErrorKind::Numerical, "factorization error: G^-1 + Z'R^-1 Z is not positive definite");
      m_factor_ = std::move(ldlt);
      log_det_ = m_factor_->vectorD().array().log().sum() + g_.log_determinant() + r_.log_determinant();
    } else {
      Eigen::MatrixXd v = r_.dense();
      if (g_.size() > 0) {
        Eigen::MatrixXd zd(z_);
        v += zd * g_.dense() * zd.transpose();
      }
      auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(v);
      if (llt->info() != Eigen::Success)
        fail(ErrorKind::Numerical, "factorization error: V is not positive definite");
      dense_factor_ = llt;
      log_det_ = 2.0 * dense_factor_->matrixLLT().diagonal().array().log().sum();
    }
  }

  Index rows() const { return z_.rows(); }
  Index random_effects() const { return z_.cols(); }
  bool uses_woodbury() const { return woodbury_; }
  double log_determinant() const { return log_det_; }

  const SparseMatrix& Z() const { return z_; }
  const BlockDiagonal& G() const { return g_; }
  const BlockDiagonal& R() const { return r_; }

  /// V^{-1} * b.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    if (b.rows() != rows())
      fail(ErrorKind::Consistency, "V solve: right-hand side has " + std::to_string(b.rows()) +
                                       " rows, expected " + std::to_string(rows()));
    if (!woodbury_) return dense_factor_->solve(b);
    Eigen::MatrixXd rinv_b = r_.solve(b);
    Eigen::MatrixXd inner = m_factor_->solve(Eigen::MatrixXd(rinv_z_.transpose() * b));
    return rinv_b - rinv_z_ * inner;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    return solve(Eigen::MatrixXd(b)).col(0);
  }

  /// Dense V, for diagnostics and small-problem oracles.
  Eigen::MatrixXd dense_v() const {
    Eigen::MatrixXd zd(z_);
    return zd * g_.dense() * zd.transpose() + r_.dense();
  }

 private:
  SparseMatrix z_;
  BlockDiagonal g_;
  BlockDiagonal r_;
  bool woodbury_ = false;
  SparseMatrix rinv_z_;
  std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> m_factor_;
  std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> dense_factor_;
  double log_det_ = 0.0;
};

inline std::shared_ptr<const VSolver> make_vsolver(SparseMatrix z, BlockDiagonal g, BlockDiagonal r) {
  return std::make_shared<const VSolver>(std::move(z), std::move(g), std::move(r));
}

struct GlsProducts {
  Eigen::MatrixXd xt_vinv_x;
  Eigen::VectorXd xt_vinv_y;
  Eigen::MatrixXd xt_vinv_z;
};

inline GlsProducts gls_cross_products(const VSolver& solver, const Eigen::MatrixXd& x,
                                      const Eigen::VectorXd& y) {
  if (x.rows() != solver.rows() || y.size() != solver.rows())
    fail(ErrorKind::Consistency, "GLS products: X has " + std::to_string(x.rows()) + " rows, y has " +
                                     std::to_string(y.size()) + ", V is " + std::to_string(solver.rows()));
  const Eigen::MatrixXd vinv_x = solver.solve(x);
  GlsProducts out;
  out.xt_vinv_x = x.transpose() * vinv_x;
  out.xt_vinv_x = 0.5 * (out.xt_vinv_x + out.xt_vinv_x.transpose()).eval();
  out.xt_vinv_y = vinv_x.transpose() * y;
  out.xt_vinv_z = (solver.Z().transpose() * vinv_x).transpose();
  return out;
}

}  // namespace panelbias
