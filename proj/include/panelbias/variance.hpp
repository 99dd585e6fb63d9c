#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"
#include "panelbias/gls.hpp"
#include "panelbias/transforms.hpp"

namespace panelbias {

enum class VarianceMethod { Reml, SwamyArora, UserSupplied };

inline const char* to_string(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::Reml: return "reml";
    case VarianceMethod::SwamyArora: return "swamy-arora";
    case VarianceMethod::UserSupplied: return "user";
  }
  return "?";
}

struct VarianceEstimate {
  std::map<std::string, double> sigma2_eta;  // per variance-block label
  double sigma2_eps = 1.0;
  VarianceMethod method = VarianceMethod::UserSupplied;
  std::optional<double> reml_loglik;
  bool boundary_flag = false;
};

/// G-hat: diagonal with each random effect's block variance.
inline BlockDiagonal g_matrix(const DesignBundle& b, const VarianceEstimate& v) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(b.m());
  for (const auto& block : b.g_structure) {
    auto it = v.sigma2_eta.find(block.label);
    if (it == v.sigma2_eta.end())
      fail(ErrorKind::Consistency, "variance estimate has no component for block '" + block.label + "'");
    if (it->second < 0.0) fail(ErrorKind::Validity, "negative variance component for block '" + block.label + "'");
    for (Index j : block.members) d(j) = it->second;
  }
  return BlockDiagonal::diagonal(std::move(d));
}

inline BlockDiagonal r_matrix(const DesignBundle& b, const VarianceEstimate& v) {
  if (!(v.sigma2_eps > 0.0)) fail(ErrorKind::Validity, "residual variance must be positive");
  return b.r_structure.scaled(v.sigma2_eps);
}

// ---------------------------------------------------------------------------
// REML
// ---------------------------------------------------------------------------

/// Profiled REML at variance ratio lambda = sigma2_eta / sigma2_eps.
struct RemlPoint {
  double lambda = 0.0;
  double loglik = 0.0;
  double sigma2_eps = 0.0;
};

inline RemlPoint reml_profile(const DesignBundle& b, double lambda) {
  const Index n = b.n();
  VSolver solver(b.Z, BlockDiagonal::identity(b.m(), lambda), b.r_structure);
  const GlsProducts prod = gls_cross_products(solver, b.X, b.y);
  const PseudoInverse a = pseudo_inverse(prod.xt_vinv_x);
  const Eigen::VectorXd beta = a.inverse * prod.xt_vinv_y;
  const Eigen::VectorXd resid = b.y - b.X * beta;
  const double quad = resid.dot(solver.solve(resid));
  const double dof = static_cast<double>(n - a.rank);
  RemlPoint pt;
  pt.lambda = lambda;
  pt.sigma2_eps = quad / dof;
  pt.loglik = -0.5 * (dof * (1.0 + std::log(2.0 * std::numbers::pi * pt.sigma2_eps)) + solver.log_determinant() +
                      log_pseudo_determinant(a));
  if (!std::isfinite(pt.loglik))
    fail(ErrorKind::Numerical, "REML log-likelihood is not finite at lambda = " + std::to_string(lambda));
  return pt;
}

inline constexpr double kLogLambdaMin = -12.0;
inline constexpr double kLogLambdaMax = 12.0;

/// Maximizes the profiled REML likelihood over log(lambda) in [-12, 12]:
/// coarse grid, golden-section to width 1e-9, then one parabolic step.
inline VarianceEstimate estimate_reml(const DesignBundle& b) {
  if (b.g_structure.size() != 1)
    fail(ErrorKind::Parameter, "REML supports a single variance block; got " + std::to_string(b.g_structure.size()));
  const Index n = b.n();
  const Index rank = b.p() ? Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(b.X).rank() : 0;
  if (n <= rank + 1)
    fail(ErrorKind::InsufficientData, "REML needs n > p + 1 (n = " + std::to_string(n) + ", p = " + std::to_string(rank) + ")");
  {
    const Eigen::VectorXd ols_resid =
        b.p() ? Eigen::VectorXd(b.y - b.X * b.X.colPivHouseholderQr().solve(b.y)) : Eigen::VectorXd(b.y);
    if (ols_resid.squaredNorm() <= 1e-24 * std::max(1.0, b.y.squaredNorm()))
      fail(ErrorKind::InsufficientData, "degenerate data: zero residual variance");
  }

  auto objective = [&](double log_lambda) { return reml_profile(b, std::exp(log_lambda)).loglik; };

  constexpr int kGrid = 97;
  const double step = (kLogLambdaMax - kLogLambdaMin) / (kGrid - 1);
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double v = objective(kLogLambdaMin + step * i);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double lo = kLogLambdaMin + step * std::max(0, best - 1);
  double hi = kLogLambdaMin + step * std::min(kGrid - 1, best + 1);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1), f2 = objective(x2);
  while (hi - lo > 1e-9) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    }
  }
  double x_best = f1 >= f2 ? x1 : x2;
  double f_best = std::max(f1, f2);
  {
    // Parabola through (lo, x_best, hi); accepted only if it improves.
    const double fl = objective(lo), fh = objective(hi);
    const double d1 = x_best - lo, d2 = x_best - hi;
    const double num = d1 * d1 * (f_best - fh) - d2 * d2 * (f_best - fl);
    const double den = d1 * (f_best - fh) - d2 * (f_best - fl);
    if (den != 0.0) {
      const double xq = x_best - 0.5 * num / den;
      if (xq > lo && xq < hi) {
        const double fq = objective(xq);
        if (fq > f_best) {
          x_best = xq;
          f_best = fq;
        }
      }
    }
    if (fl > f_best) x_best = lo, f_best = fl;
    if (fh > f_best) x_best = hi, f_best = fh;
  }

  RemlPoint pt = reml_profile(b, std::exp(x_best));
  VarianceEstimate est;
  est.method = VarianceMethod::Reml;
  if (x_best <= kLogLambdaMin + 1e-6) {
    const RemlPoint zero = reml_profile(b, 0.0);
    if (zero.loglik >= pt.loglik) pt = zero;
    est.boundary_flag = true;
  }
  est.sigma2_eps = pt.sigma2_eps;
  est.sigma2_eta[b.g_structure.front().label] = est.boundary_flag ? 0.0 : pt.lambda * pt.sigma2_eps;
  est.reml_loglik = est.boundary_flag ? reml_profile(b, 0.0).loglik : pt.loglik;
  return est;
}

// ---------------------------------------------------------------------------
// Swamy-Arora
// ---------------------------------------------------------------------------

/// Method-of-moments components from the within and between regressions.
/// The between regression is run on group means replicated per observation,
/// which reduces to the textbook balanced-panel formula.
inline VarianceEstimate estimate_swamy_arora(const DesignBundle& b) {
  if (b.g_structure.size() != 1)
    fail(ErrorKind::Parameter, "Swamy-Arora supports a single variance block; got " + std::to_string(b.g_structure.size()));
  if (static_cast<Index>(b.group_of_row.size()) != b.n())
    fail(ErrorKind::Parameter, "Swamy-Arora requires a random-intercept panel design");
  const Index n = b.n();
  const Index n_groups = b.m();

  const auto slopes = slope_columns(b);
  const Eigen::MatrixXd xs = select_columns(b.X, slopes);
  Eigen::MatrixXd xw = within_transform(xs, b.group_of_row, n_groups);
  std::vector<Index> varying;
  for (Index j = 0; j < xw.cols(); ++j)
    if (!is_time_invariant(xw.col(j), xs.col(j))) varying.push_back(j);
  xw = select_columns(xw, varying);
  const Eigen::VectorXd yw = within_transform(b.y, b.group_of_row, n_groups).col(0);

  Index k_within = 0;
  double rss_within = yw.squaredNorm();
  if (xw.cols() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    k_within = qr.rank();
    rss_within = (yw - xw * qr.solve(yw)).squaredNorm();
  }
  const Index df_within = n - n_groups - k_within;
  if (df_within <= 0)
    fail(ErrorKind::InsufficientData, "Swamy-Arora: within degrees of freedom n - N - K = " + std::to_string(df_within));
  const double sigma2_eps = rss_within / static_cast<double>(df_within);
  if (!(sigma2_eps > 0.0)) fail(ErrorKind::InsufficientData, "degenerate data: zero within residual variance");

  const Eigen::MatrixXd px = replicate_group_means(b.X, b.group_of_row, n_groups);
  const Eigen::VectorXd py = replicate_group_means(b.y, b.group_of_row, n_groups).col(0);
  const PseudoInverse between = pseudo_inverse(px.transpose() * px);
  const Eigen::VectorXd beta_b = between.inverse * (px.transpose() * py);
  const double ssr_between = (py - px * beta_b).squaredNorm();
  const Eigen::MatrixXd xtz = (b.Z.transpose() * b.X).transpose();
  const double denom = static_cast<double>(n) - (between.inverse * xtz * xtz.transpose()).trace();
  const Index df_between = n_groups - between.rank;
  if (df_between <= 0 || !(denom > 0.0))
    fail(ErrorKind::InsufficientData, "Swamy-Arora: between degrees of freedom N - K = " + std::to_string(df_between));

  VarianceEstimate est;
  est.method = VarianceMethod::SwamyArora;
  est.sigma2_eps = sigma2_eps;
  double s2eta = (ssr_between - static_cast<double>(df_between) * sigma2_eps) / denom;
  if (s2eta < 0.0) {
    s2eta = 0.0;
    est.boundary_flag = true;
  }
  est.sigma2_eta[b.g_structure.front().label] = s2eta;
  return est;
}

}  // namespace panelbias
