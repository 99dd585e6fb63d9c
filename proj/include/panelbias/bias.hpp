#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"
#include "panelbias/estimators.hpp"
#include "panelbias/external_fit.hpp"
#include "panelbias/gls.hpp"
#include "panelbias/permutation.hpp"

namespace panelbias {

/// Internal bias diagnostic for k'beta-hat from a single random-effects fit.
///
/// With W = (X'V^-1 X)^- X'V^-1 Z, the plug-in bias of k'beta-hat is
/// nu_k' eta-hat where nu_k = W'k. Its null reference distribution comes from
/// permuting eta-hat within blocks of random effects that share a variance
/// component; the p-value is the share of permuted statistics whose absolute
/// value is at least that of the observed one.

/// Inputs of the diagnostic, built from a native RE fit or an ExternalFit.
class DiagnosticModel {
 public:
  static DiagnosticModel from_fit(const FitResult& re, const DesignBundle& b) {
    if (re.estimator != Estimator::ReGls || !re.solver || !re.eta_hat)
      fail(ErrorKind::Parameter, "bias diagnostic requires a random-effects fit with EBLUPs");
    std::vector<std::vector<Index>> blocks;
    for (const auto& g : b.g_structure) blocks.push_back(g.members);
    return DiagnosticModel(b.X, *re.solver, *re.eta_hat, b.x_labels, std::move(blocks));
  }

  static DiagnosticModel from_external(const ExternalFit& fit) {
    const VSolver solver(fit.Z, fit.G_hat, fit.R_hat);
    return DiagnosticModel(fit.X, solver, fit.eta_hat, fit.x_labels, fit.permutation_blocks);
  }

  Index p() const { return x_.cols(); }
  Index m() const { return eta_.size(); }
  const Eigen::MatrixXd& X() const { return x_; }
  const Eigen::VectorXd& eta_hat() const { return eta_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::vector<Index>>& default_blocks() const { return blocks_; }
  /// (X'V^-1 X)^+ X'V^-1 Z, p x m.
  const Eigen::MatrixXd& nu_basis() const { return nu_basis_; }

  /// k lies in the row space of X (projection residual <= 1e-8 * max(1, |k|)).
  bool is_estimable(const Eigen::VectorXd& k) const {
    if (k.size() != p()) return false;
    const double resid = (k - row_space_projector_ * k).norm();
    return resid <= 1e-8 * std::max(1.0, k.norm());
  }

 private:
  DiagnosticModel(const Eigen::MatrixXd& x, const VSolver& solver, const Eigen::VectorXd& eta,
                  std::vector<std::string> labels, std::vector<std::vector<Index>> blocks)
      : x_(x), eta_(eta), labels_(std::move(labels)), blocks_(std::move(blocks)) {
    if (eta_.size() != solver.random_effects())
      fail(ErrorKind::Consistency, "eta has length " + std::to_string(eta_.size()) + " but Z has " +
                                       std::to_string(solver.random_effects()) + " columns");
    const GlsProducts prod = gls_cross_products(solver, x_, Eigen::VectorXd::Zero(x_.rows()));
    nu_basis_ = pseudo_inverse(prod.xt_vinv_x).inverse * prod.xt_vinv_z;
    const Eigen::MatrixXd xtx = x_.transpose() * x_;
    row_space_projector_ = pseudo_inverse(xtx).inverse * xtx;
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd eta_;
  std::vector<std::string> labels_;
  std::vector<std::vector<Index>> blocks_;
  Eigen::MatrixXd nu_basis_;
  Eigen::MatrixXd row_space_projector_;
};

struct KVector {
  Eigen::VectorXd k;
  std::string label;
  bool estimable = false;
};

inline KVector make_kvector(const DiagnosticModel& model, Eigen::VectorXd k, std::string label) {
  if (k.size() != model.p())
    fail(ErrorKind::Usage, "k vector '" + label + "' has length " + std::to_string(k.size()) + ", expected p = " +
                               std::to_string(model.p()));
  KVector out{std::move(k), std::move(label), false};
  out.estimable = model.is_estimable(out.k);
  return out;
}

/// One unit vector per fixed effect.
inline std::vector<KVector> default_k_set(const DiagnosticModel& model) {
  std::vector<KVector> out;
  for (Index j = 0; j < model.p(); ++j)
    out.push_back(make_kvector(model, Eigen::VectorXd::Unit(model.p(), j), model.labels()[static_cast<std::size_t>(j)]));
  return out;
}

inline Eigen::VectorXd compute_nu_hat(const DiagnosticModel& model, const KVector& k) {
  if (k.k.size() != model.p())
    fail(ErrorKind::Consistency, "k vector '" + k.label + "' has length " + std::to_string(k.k.size()) +
                                     ", expected " + std::to_string(model.p()));
  if (!model.is_estimable(k.k)) fail(ErrorKind::Estimability, "k vector '" + k.label + "' is not estimable");
  return model.nu_basis().transpose() * k.k;
}

/// nu' eta, summed left to right exactly as the permuted statistics are.
inline double bias_estimate(const Eigen::VectorXd& nu, const Eigen::VectorXd& eta) {
  if (nu.size() != eta.size())
    fail(ErrorKind::Consistency, "bias estimate: nu has length " + std::to_string(nu.size()) + ", eta has " +
                                     std::to_string(eta.size()));
  double s = 0.0;
  for (Index i = 0; i < nu.size(); ++i) s += nu(i) * eta(i);
  return s;
}

struct BiasEntry {
  std::string label;
  Eigen::VectorXd k;
  Eigen::VectorXd nu_hat;
  double observed = 0.0;
  double p_value = 1.0;
  std::uint64_t n_extreme = 0;  // #{|s_b| >= |observed|}
  std::uint64_t n_permutations = 0;
  bool exhaustive = false;
  DistributionSummary quantiles;
  Histogram histogram;
};

/// Reference distribution of nu' pi(eta) and the permutation p-value.
/// Exhaustive enumeration replaces sampling when the plan allows it.
inline BiasEntry permutation_pvalue(const Eigen::VectorXd& nu, const Eigen::VectorXd& eta, const PermutationPlan& plan,
                                    std::uint64_t stream = 0) {
  if (nu.size() != eta.size())
    fail(ErrorKind::Consistency, "permutation test: nu has length " + std::to_string(nu.size()) + ", eta has " +
                                     std::to_string(eta.size()));
  std::vector<std::vector<Index>> blocks = plan.blocks;
  if (blocks.empty()) {
    blocks.emplace_back(static_cast<std::size_t>(eta.size()));
    std::iota(blocks.front().begin(), blocks.front().end(), Index{0});
  }
  PermutationPlan checked = plan;
  checked.blocks = blocks;
  validate_plan(checked, eta.size());

  BiasEntry e;
  e.nu_hat = nu;
  e.observed = bias_estimate(nu, eta);

  const std::uint64_t total = count_block_permutations(blocks);
  bool exhaustive = plan.mode == PermutationMode::Exhaustive ||
                    (plan.mode == PermutationMode::Auto && total <= kExhaustiveLimit);
  if (plan.mode == PermutationMode::Exhaustive && total > kExhaustiveLimit)
    fail(ErrorKind::Parameter, "exhaustive enumeration limited to " + std::to_string(kExhaustiveLimit) + " permutations");

  std::vector<double> stats = exhaustive
                                  ? enumerate_statistics(nu, eta, blocks)
                                  : sample_statistics(nu, eta, blocks, plan.n_permutations, plan.seed, stream, plan.threads);
  e.exhaustive = exhaustive;
  e.n_permutations = stats.size();
  const double threshold = std::abs(e.observed);
  e.n_extreme = static_cast<std::uint64_t>(
      std::count_if(stats.begin(), stats.end(), [&](double s) { return std::abs(s) >= threshold; }));
  e.p_value = static_cast<double>(e.n_extreme) / static_cast<double>(e.n_permutations);

  std::sort(stats.begin(), stats.end());
  e.quantiles = summarize_sorted(stats);
  e.histogram = make_histogram(stats);
  return e;
}

struct BiasDiagnosticResult {
  std::vector<BiasEntry> entries;
  std::uint64_t seed = 0;
  std::uint64_t n_permutations_requested = 0;
  std::vector<std::vector<Index>> blocks;
};

/// Runs the diagnostic for every k. Entry i uses random stream i of the
/// plan's seed. Failures for individual k vectors are reported together.
inline BiasDiagnosticResult run_bias_diagnostic(const DiagnosticModel& model, const std::vector<KVector>& k_set,
                                                PermutationPlan plan) {
  if (plan.blocks.empty()) plan.blocks = model.default_blocks();
  validate_plan(plan, model.m());
  const std::vector<KVector> ks = k_set.empty() ? default_k_set(model) : k_set;

  std::string errors;
  for (const auto& k : ks)
    if (!model.is_estimable(k.k) || k.k.size() != model.p())
      errors += (errors.empty() ? "" : "; ") + ("'" + k.label + "' is not estimable");
  if (!errors.empty()) fail(ErrorKind::Estimability, "bias diagnostic: " + errors);

  BiasDiagnosticResult out;
  out.seed = plan.seed;
  out.n_permutations_requested = plan.n_permutations;
  out.blocks = plan.blocks;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    BiasEntry e = permutation_pvalue(compute_nu_hat(model, ks[i]), model.eta_hat(), plan, i);
    e.label = ks[i].label;
    e.k = ks[i].k;
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace panelbias
