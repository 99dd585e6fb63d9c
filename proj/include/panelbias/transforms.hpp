#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "panelbias/data.hpp"

namespace panelbias {

/// Per-group column means (n_groups x cols).
inline Eigen::MatrixXd group_means(const Eigen::MatrixXd& a, const std::vector<Index>& group_of_row, Index n_groups) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_groups, a.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_groups);
  for (Index r = 0; r < a.rows(); ++r) {
    const Index g = group_of_row[static_cast<std::size_t>(r)];
    sums.row(g) += a.row(r);
    counts(g) += 1.0;
  }
  for (Index g = 0; g < n_groups; ++g)
    if (counts(g) > 0) sums.row(g) /= counts(g);
  return sums;
}

/// Each row replaced by its group mean (the projection P a).
inline Eigen::MatrixXd replicate_group_means(const Eigen::MatrixXd& a, const std::vector<Index>& group_of_row,
                                             Index n_groups) {
  const Eigen::MatrixXd means = group_means(a, group_of_row, n_groups);
  Eigen::MatrixXd out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) out.row(r) = means.row(group_of_row[static_cast<std::size_t>(r)]);
  return out;
}

/// Within (demeaning) transform: a - P a.
inline Eigen::MatrixXd within_transform(const Eigen::MatrixXd& a, const std::vector<Index>& group_of_row,
                                        Index n_groups) {
  return a - replicate_group_means(a, group_of_row, n_groups);
}

/// Indices of X columns that are not the intercept.
inline std::vector<Index> slope_columns(const DesignBundle& b) {
  std::vector<Index> out;
  for (Index j = 0; j < b.p(); ++j)
    if (!(b.has_intercept && b.x_labels[static_cast<std::size_t>(j)] == kInterceptLabel)) out.push_back(j);
  return out;
}

/// True when the demeaned column vanishes, i.e. the column is constant
/// within every group.
inline bool is_time_invariant(const Eigen::VectorXd& demeaned, const Eigen::VectorXd& original) {
  const double scale = std::max(1.0, original.cwiseAbs().maxCoeff());
  return demeaned.cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& a, const std::vector<Index>& cols) {
  Eigen::MatrixXd out(a.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = a.col(cols[c]);
  return out;
}

}  // namespace panelbias
