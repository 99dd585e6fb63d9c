#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"
#include "panelbias/gls.hpp"
#include "panelbias/transforms.hpp"
#include "panelbias/variance.hpp"

namespace panelbias {

enum class Estimator { FeWithin, FeLsdv, ReGls };

inline const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::FeWithin: return "fe-within";
    case Estimator::FeLsdv: return "fe-lsdv";
    case Estimator::ReGls: return "re-gls";
  }
  return "?";
}

/// How Var(beta_RE) is scaled.
///   ModelBased:     (X'V^-1 X)^+
///   ResidualScaled: c * (X'V^-1 X)^+ with c = r'V^-1 r / (n - rank X), the
///                   residual variance of the GLS-transformed regression.
/// The two coincide for REML, where c == 1 by construction.
enum class CovarianceScaling { ModelBased, ResidualScaled };

struct FitResult {
  Estimator estimator = Estimator::ReGls;
  std::vector<std::string> labels;
  Eigen::VectorXd beta;
  Eigen::MatrixXd var_beta;

  // FE: residual variance RSS / df. RE: the covariance scale factor c.
  double sigma2 = 0.0;
  double rss = 0.0;
  Index df_residual = 0;

  // RE only.
  std::optional<VarianceEstimate> variance;
  std::optional<Eigen::VectorXd> eta_hat;
  std::shared_ptr<const VSolver> solver;

  // LSDV only: unit dummy coefficients (relative to the reference unit).
  Eigen::VectorXd unit_effects;
  std::vector<std::string> unit_effect_labels;

  std::vector<std::string> notes;

  std::optional<double> coefficient(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return beta(static_cast<Index>(i));
    return std::nullopt;
  }
};

namespace detail {

inline void require_full_rank(const Eigen::MatrixXd& a, const std::vector<std::string>& labels, const std::string& what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() == a.cols()) return;
  std::string names;
  const auto& perm = qr.colsPermutation().indices();
  for (Index j = qr.rank(); j < a.cols(); ++j) names += (names.empty() ? "" : ", ") + labels[static_cast<std::size_t>(perm(j))];
  fail(ErrorKind::Rank, what + ": collinear columns (" + names + ")");
}

inline void require_groups_with_repeats(const DesignBundle& b, const std::string& what) {
  if (!b.singleton_groups.empty())
    fail(ErrorKind::InsufficientData, what + ": group '" + b.z_labels[static_cast<std::size_t>(b.singleton_groups.front())] +
                                          "' has a single observation");
}

}  // namespace detail

/// Within (FE) estimator: OLS on group-demeaned data. Columns constant
/// within every group are dropped and noted.
inline FitResult fit_fe_within(const DesignBundle& b) {
  detail::require_groups_with_repeats(b, "within estimator");
  const Index n = b.n(), n_groups = b.m();
  FitResult fit;
  fit.estimator = Estimator::FeWithin;

  const auto slopes = slope_columns(b);
  const Eigen::MatrixXd xs = select_columns(b.X, slopes);
  const Eigen::MatrixXd xw_all = within_transform(xs, b.group_of_row, n_groups);
  std::vector<Index> kept;
  for (Index j = 0; j < xw_all.cols(); ++j) {
    const auto& label = b.x_labels[static_cast<std::size_t>(slopes[static_cast<std::size_t>(j)])];
    if (is_time_invariant(xw_all.col(j), xs.col(j)))
      fit.notes.push_back("dropped time-invariant column '" + label + "'");
    else {
      kept.push_back(j);
      fit.labels.push_back(label);
    }
  }
  const Eigen::MatrixXd xw = select_columns(xw_all, kept);
  const Eigen::VectorXd yw = within_transform(b.y, b.group_of_row, n_groups).col(0);
  if (xw.cols() == 0) fail(ErrorKind::Rank, "within estimator: no time-varying regressors");
  detail::require_full_rank(xw, fit.labels, "within estimator");

  fit.df_residual = n - n_groups - xw.cols();
  if (fit.df_residual <= 0)
    fail(ErrorKind::InsufficientData, "within estimator: residual degrees of freedom n - N - K = " + std::to_string(fit.df_residual));
  const Eigen::MatrixXd xtx = xw.transpose() * xw;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  fit.beta = ldlt.solve(xw.transpose() * yw);
  fit.rss = (yw - xw * fit.beta).squaredNorm();
  fit.sigma2 = fit.rss / static_cast<double>(fit.df_residual);
  fit.var_beta = fit.sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(xw.cols(), xw.cols()));
  fit.var_beta = 0.5 * (fit.var_beta + fit.var_beta.transpose()).eval();
  return fit;
}

/// Least-squares dummy variables: OLS of y on X plus unit indicators, the
/// first unit serving as reference when X has an intercept.
inline FitResult fit_fe_lsdv(const DesignBundle& b) {
  const Index n = b.n(), p = b.p(), n_groups = b.m();
  const Index first_dummy = b.has_intercept ? 1 : 0;
  const Index n_dummies = n_groups - first_dummy;
  if (n <= p + n_dummies)
    fail(ErrorKind::InsufficientData, "LSDV needs n > N + p (n = " + std::to_string(n) + ")");

  Eigen::MatrixXd d(n, p + n_dummies);
  d.leftCols(p) = b.X;
  d.rightCols(n_dummies).setZero();
  for (Index r = 0; r < n; ++r) {
    const Index g = b.group_of_row[static_cast<std::size_t>(r)];
    if (g >= first_dummy) d(r, p + g - first_dummy) = 1.0;
  }
  std::vector<std::string> labels = b.x_labels;
  for (Index g = first_dummy; g < n_groups; ++g) labels.push_back("unit=" + b.z_labels[static_cast<std::size_t>(g)]);
  detail::require_full_rank(d, labels, "LSDV estimator");

  FitResult fit;
  fit.estimator = Estimator::FeLsdv;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
  const Eigen::VectorXd coef = qr.solve(b.y);
  fit.rss = (b.y - d * coef).squaredNorm();
  fit.df_residual = n - d.cols();
  fit.sigma2 = fit.rss / static_cast<double>(fit.df_residual);
  const Eigen::MatrixXd dtd = d.transpose() * d;
  const Eigen::MatrixXd cov = fit.sigma2 * dtd.ldlt().solve(Eigen::MatrixXd::Identity(d.cols(), d.cols()));
  fit.beta = coef.head(p);
  fit.var_beta = cov.topLeftCorner(p, p);
  fit.var_beta = 0.5 * (fit.var_beta + fit.var_beta.transpose()).eval();
  fit.labels = b.x_labels;
  fit.unit_effects = coef.tail(n_dummies);
  fit.unit_effect_labels.assign(labels.begin() + p, labels.end());
  return fit;
}

/// eta-hat = G Z' V^-1 (y - X beta).
inline Eigen::VectorXd compute_eblups(const FitResult& fit, const DesignBundle& b) {
  if (fit.estimator != Estimator::ReGls || !fit.solver)
    fail(ErrorKind::Parameter, "EBLUPs require a random-effects fit");
  const Eigen::VectorXd resid = b.y - b.X * fit.beta;
  const Eigen::VectorXd zt_vinv_r = b.Z.transpose() * fit.solver->solve(resid);
  return fit.solver->G().sparse() * zt_vinv_r;
}

/// Random-effects GLS: beta = (X'V^-1 X)^+ X'V^-1 y.
inline FitResult fit_re(const DesignBundle& b, const VarianceEstimate& variance,
                        CovarianceScaling scaling = CovarianceScaling::ResidualScaled) {
  FitResult fit;
  fit.estimator = Estimator::ReGls;
  fit.labels = b.x_labels;
  fit.variance = variance;
  fit.solver = make_vsolver(b.Z, g_matrix(b, variance), r_matrix(b, variance));

  const GlsProducts prod = gls_cross_products(*fit.solver, b.X, b.y);
  const PseudoInverse a = pseudo_inverse(prod.xt_vinv_x);
  fit.beta = a.inverse * prod.xt_vinv_y;
  const Eigen::VectorXd resid = b.y - b.X * fit.beta;
  fit.rss = resid.dot(fit.solver->solve(resid));
  fit.df_residual = b.n() - a.rank;
  fit.sigma2 = scaling == CovarianceScaling::ResidualScaled ? fit.rss / static_cast<double>(fit.df_residual) : 1.0;
  fit.var_beta = fit.sigma2 * a.inverse;
  if (a.rank < b.p()) fit.notes.push_back("X'V^-1X is singular; generalized inverse used");
  fit.eta_hat = compute_eblups(fit, b);
  return fit;
}

}  // namespace panelbias
