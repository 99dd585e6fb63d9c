#pragma once

#include <Eigen/Dense>

#include <boost/math/special_functions/gamma.hpp>

#include <string>
#include <vector>

#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"
#include "panelbias/estimators.hpp"
#include "panelbias/gls.hpp"
#include "panelbias/transforms.hpp"
#include "panelbias/variance.hpp"

namespace panelbias {

/// Upper-tail chi-square probability; df = 0 gives 1.
inline double chi2_upper_tail(double stat, Index df) {
  if (df <= 0) return 1.0;
  if (!(stat > 0.0)) return 1.0;
  return boost::math::gamma_q(0.5 * static_cast<double>(df), 0.5 * stat);
}

struct HausmanResult {
  double statistic = 0.0;
  Index df = 0;
  double p_value = 1.0;
  std::vector<std::string> labels;
  Eigen::VectorXd coef_diffs;     // RE - FE
  Eigen::VectorXd var_diff_eigs;  // eigenvalues of Var(FE) - Var(RE), ascending
  Index zeroed_eigs = 0;          // eigenvalues under the cutoff, treated as zero
  Index negative_eigs = 0;        // negative eigenvalues above the cutoff
};

/// H = d' [Var(FE) - Var(RE)]^+ d over the slopes both fits share. The
/// difference is often slightly indefinite in finite samples; eigenvalues
/// with |eig| <= tol * max|eig| are zeroed, the rest inverted whatever
/// their sign, and df is the number kept.
inline HausmanResult hausman_test(const FitResult& fe, const FitResult& re, double tol = kPinvTolerance) {
  std::vector<Index> fe_idx, re_idx;
  HausmanResult out;
  for (std::size_t i = 0; i < fe.labels.size(); ++i) {
    if (fe.labels[i] == kInterceptLabel) continue;
    for (std::size_t j = 0; j < re.labels.size(); ++j)
      if (re.labels[j] == fe.labels[i]) {
        fe_idx.push_back(static_cast<Index>(i));
        re_idx.push_back(static_cast<Index>(j));
        out.labels.push_back(fe.labels[i]);
      }
  }
  if (out.labels.empty()) fail(ErrorKind::EmptyComparison, "Hausman test: the two fits share no slope coefficients");

  const auto k = static_cast<Index>(out.labels.size());
  out.coef_diffs.resize(k);
  Eigen::MatrixXd var_diff(k, k);
  for (Index a = 0; a < k; ++a) {
    out.coef_diffs(a) = re.beta(re_idx[static_cast<std::size_t>(a)]) - fe.beta(fe_idx[static_cast<std::size_t>(a)]);
    for (Index c = 0; c < k; ++c)
      var_diff(a, c) = fe.var_beta(fe_idx[static_cast<std::size_t>(a)], fe_idx[static_cast<std::size_t>(c)]) -
                       re.var_beta(re_idx[static_cast<std::size_t>(a)], re_idx[static_cast<std::size_t>(c)]);
  }
  const PseudoInverse pinv = pseudo_inverse(var_diff, tol);
  out.var_diff_eigs = pinv.eigenvalues;
  out.df = pinv.rank;
  out.zeroed_eigs = k - pinv.rank;
  const double cutoff = tol * pinv.eigenvalues.cwiseAbs().maxCoeff();
  for (Index i = 0; i < k; ++i)
    if (pinv.eigenvalues(i) < -cutoff) ++out.negative_eigs;
  out.statistic = std::max(0.0, out.coef_diffs.dot(pinv.inverse * out.coef_diffs));
  out.p_value = chi2_upper_tail(out.statistic, out.df);
  return out;
}

struct CreResult {
  std::vector<std::string> labels;  // "mean(x)" per retained mean term
  Eigen::VectorXd gamma_hat;
  Eigen::MatrixXd var_gamma;
  double wald = 0.0;
  Index df = 0;
  double p_value = 1.0;
  VarianceEstimate variance;
  std::vector<std::string> notes;
};

/// Design augmented with the group means of every time-varying slope.
inline DesignBundle mundlak_augment(const DesignBundle& b, std::vector<std::string>* notes = nullptr) {
  const auto slopes = slope_columns(b);
  const Eigen::MatrixXd xs = select_columns(b.X, slopes);
  const Eigen::MatrixXd means = replicate_group_means(xs, b.group_of_row, b.m());
  std::vector<Index> varying;
  for (Index j = 0; j < xs.cols(); ++j) {
    const auto& label = b.x_labels[static_cast<std::size_t>(slopes[static_cast<std::size_t>(j)])];
    if (is_time_invariant(xs.col(j) - means.col(j), xs.col(j))) {
      if (notes) notes->push_back("group mean of time-invariant column '" + label + "' dropped");
    } else {
      varying.push_back(j);
    }
  }
  DesignBundle aug = b;
  aug.X.conservativeResize(Eigen::NoChange, b.p() + static_cast<Index>(varying.size()));
  for (std::size_t c = 0; c < varying.size(); ++c) {
    aug.X.col(b.p() + static_cast<Index>(c)) = means.col(varying[c]);
    aug.x_labels.push_back("mean(" + b.x_labels[static_cast<std::size_t>(slopes[static_cast<std::size_t>(varying[c])])] + ")");
  }
  return aug;
}

/// Mundlak / Wooldridge correlated-random-effects test: refit RE with group
/// means added (variance components re-estimated) and Wald-test their
/// coefficients against zero.
inline CreResult cre_mundlak_test(const DesignBundle& b, VarianceMethod backend,
                                  CovarianceScaling scaling = CovarianceScaling::ResidualScaled) {
  CreResult out;
  const DesignBundle aug = mundlak_augment(b, &out.notes);
  const Index q = aug.p() - b.p();
  if (q == 0) fail(ErrorKind::EmptyComparison, "CRE test: no time-varying regressors to average");

  switch (backend) {
    case VarianceMethod::Reml: out.variance = estimate_reml(aug); break;
    case VarianceMethod::SwamyArora: out.variance = estimate_swamy_arora(aug); break;
    default: fail(ErrorKind::Parameter, "CRE test: variance backend must be reml or swamy-arora");
  }
  const FitResult fit = fit_re(aug, out.variance, scaling);
  out.labels.assign(aug.x_labels.begin() + b.p(), aug.x_labels.end());
  out.gamma_hat = fit.beta.tail(q);
  out.var_gamma = fit.var_beta.bottomRightCorner(q, q);
  const PseudoInverse pinv = pseudo_inverse(out.var_gamma);
  out.df = pinv.rank;
  if (out.df == 0) fail(ErrorKind::EmptyComparison, "CRE test: no estimable group-mean terms");
  if (out.df < q) out.notes.push_back(std::to_string(q - out.df) + " group-mean term(s) not estimable");
  out.wald = std::max(0.0, out.gamma_hat.dot(pinv.inverse * out.gamma_hat));
  out.p_value = chi2_upper_tail(out.wald, out.df);
  return out;
}

}  // namespace panelbias
