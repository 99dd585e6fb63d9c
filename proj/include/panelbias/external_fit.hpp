#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "panelbias/block_diagonal.hpp"
#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"

namespace panelbias {

// ---------------------------------------------------------------------------
// Matrix file formats
//
// Dense CSV: one row per line, optional header row of labels.
// Sparse triplet text: first line "n m nnz", then nnz lines "i j value" with
// 1-based indices. Blank lines and lines starting with '#' are ignored.
// ---------------------------------------------------------------------------

struct LabeledMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> labels;  // empty when the file has no header
};

inline LabeledMatrix read_dense_csv(std::istream& in, const std::string& name) {
  LabeledMatrix out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || line[0] == '#') continue;
    auto fields = detail::split_csv_line(line);
    std::vector<double> vals(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) numeric = numeric && detail::parse_double(fields[i], vals[i]);
    if (!numeric) {
      if (first) {
        out.labels = fields;
        first = false;
        continue;
      }
      fail(ErrorKind::Parse, name + " line " + std::to_string(line_no) + ": non-numeric value");
    }
    first = false;
    if (!rows.empty() && vals.size() != rows.front().size())
      fail(ErrorKind::Parse, name + " line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(rows.front().size()) + " fields, found " + std::to_string(vals.size()));
    rows.push_back(std::move(vals));
  }
  const Index ncol = rows.empty() ? static_cast<Index>(out.labels.size()) : static_cast<Index>(rows.front().size());
  if (!out.labels.empty() && static_cast<Index>(out.labels.size()) != ncol)
    fail(ErrorKind::Parse, name + ": header has " + std::to_string(out.labels.size()) + " labels for " +
                               std::to_string(ncol) + " columns");
  out.values.resize(static_cast<Index>(rows.size()), ncol);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Index c = 0; c < ncol; ++c) out.values(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return out;
}

inline Eigen::VectorXd read_vector_csv(std::istream& in, const std::string& name) {
  auto m = read_dense_csv(in, name);
  if (m.values.cols() != 1 && m.values.rows() > 0)
    fail(ErrorKind::Parse, name + ": expected a single column, found " + std::to_string(m.values.cols()));
  return m.values.rows() ? Eigen::VectorXd(m.values.col(0)) : Eigen::VectorXd();
}

inline SparseMatrix read_triplets(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      auto t = detail::trim(out);
      if (!t.empty() && t[0] != '#') return true;
    }
    return false;
  };
  if (!next_line(line)) fail(ErrorKind::Parse, name + ": missing dimension header 'n m nnz'");
  std::istringstream hdr(line);
  long long n = -1, m = -1, nnz = -1;
  if (!(hdr >> n >> m >> nnz) || n < 0 || m < 0 || nnz < 0)
    fail(ErrorKind::Parse, name + " line " + std::to_string(line_no) + ": bad dimension header");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    if (!next_line(line))
      fail(ErrorKind::Parse, name + ": expected " + std::to_string(nnz) + " entries, found " + std::to_string(k));
    std::istringstream ls(line);
    long long i = 0, j = 0;
    std::string vs;
    double v = 0.0;
    if (!(ls >> i >> j >> vs) || !detail::parse_double(vs, v))
      fail(ErrorKind::Parse, name + " line " + std::to_string(line_no) + ": expected 'i j value'");
    if (i < 1 || i > n || j < 1 || j > m)
      fail(ErrorKind::Consistency, name + " line " + std::to_string(line_no) + ": index (" + std::to_string(i) + ", " +
                                       std::to_string(j) + ") outside " + std::to_string(n) + "x" + std::to_string(m));
    trips.emplace_back(static_cast<Index>(i - 1), static_cast<Index>(j - 1), v);
  }
  if (next_line(line)) fail(ErrorKind::Parse, name + ": more entries than the declared nnz = " + std::to_string(nnz));
  SparseMatrix out(static_cast<Index>(n), static_cast<Index>(m));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline void write_triplets(std::ostream& out, const SparseMatrix& a) {
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  out << std::setprecision(17);
  for (Index k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

inline void write_dense_csv(std::ostream& out, const Eigen::MatrixXd& a, const std::vector<std::string>& labels = {}) {
  if (!labels.empty()) {
    for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? "," : "") << labels[i];
    out << '\n';
  }
  out << std::setprecision(17);
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < a.cols(); ++c) out << (c ? "," : "") << a(r, c);
    out << '\n';
  }
}

/// Symmetrizes a covariance read from triplets: a matrix given by one
/// triangle is mirrored; a full matrix must already be symmetric.
inline SparseMatrix symmetric_from_triplets(const SparseMatrix& a, const std::string& name) {
  if (a.rows() != a.cols()) fail(ErrorKind::Consistency, name + ": matrix is not square");
  SparseMatrix at = a.transpose();
  SparseMatrix diff = a - at;
  double scale = 1.0;
  for (Index k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  const double asym = diff.nonZeros() ? diff.coeffs().cwiseAbs().maxCoeff() : 0.0;
  if (asym <= 1e-12 * scale) return a;
  bool lower = true, upper = true;
  for (Index k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      if (it.row() < it.col()) lower = false;
      if (it.row() > it.col()) upper = false;
    }
  if (!lower && !upper) fail(ErrorKind::Validity, name + ": matrix is not symmetric");
  SparseMatrix diag = a;
  diag.prune([](Index r, Index c, double) { return r == c; });
  return SparseMatrix(a + at - diag);
}

// ---------------------------------------------------------------------------
// ExternalFit
// ---------------------------------------------------------------------------

/// A mixed-model fit produced elsewhere: design, variance estimates, fixed
/// effects and EBLUPs. Enough to run the bias diagnostic without refitting.
struct ExternalFit {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  SparseMatrix Z;
  BlockDiagonal G_hat;
  BlockDiagonal R_hat;
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd eta_hat;
  std::vector<VarianceBlock> g_structure;
  std::vector<std::vector<Index>> permutation_blocks;
  std::vector<std::string> x_labels;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index m() const { return Z.cols(); }
};

namespace detail {

inline std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

inline void require_partition(const std::vector<std::vector<Index>>& blocks, Index m, const std::string& what) {
  std::vector<int> hits(static_cast<std::size_t>(m), 0);
  for (const auto& b : blocks)
    for (Index j : b) {
      if (j < 0 || j >= m) fail(ErrorKind::Consistency, what + ": index " + std::to_string(j + 1) + " outside 1.." + std::to_string(m));
      ++hits[static_cast<std::size_t>(j)];
    }
  for (Index j = 0; j < m; ++j)
    if (hits[static_cast<std::size_t>(j)] != 1)
      fail(ErrorKind::Consistency, what + ": random effect " + std::to_string(j + 1) + " appears " +
                                       std::to_string(hits[static_cast<std::size_t>(j)]) + " times (must be exactly once)");
}

}  // namespace detail

/// Checks dimensions and validity; fills defaults for labels, g_structure
/// and permutation blocks.
inline void validate_external_fit(ExternalFit& fit) {
  const Index n = fit.X.rows(), p = fit.X.cols(), m = fit.Z.cols();
  using detail::dims;
  if (fit.y.size() != n) fail(ErrorKind::Consistency, "external fit: y has length " + std::to_string(fit.y.size()) + " but X is " + dims(n, p));
  if (fit.Z.rows() != n) fail(ErrorKind::Consistency, "external fit: Z is " + dims(fit.Z.rows(), m) + " but X is " + dims(n, p));
  if (fit.beta_hat.size() != p)
    fail(ErrorKind::Consistency, "external fit: beta has length " + std::to_string(fit.beta_hat.size()) + " but X is " + dims(n, p));
  if (fit.eta_hat.size() != m)
    fail(ErrorKind::Consistency, "external fit: eta has length " + std::to_string(fit.eta_hat.size()) + " but Z is " + dims(n, m));
  if (fit.G_hat.size() != m)
    fail(ErrorKind::Consistency, "external fit: G is " + dims(fit.G_hat.size(), fit.G_hat.size()) + " but Z is " + dims(n, m));
  if (fit.R_hat.size() != n)
    fail(ErrorKind::Consistency, "external fit: R is " + dims(fit.R_hat.size(), fit.R_hat.size()) + " but X is " + dims(n, p));
  if (m > 0 && fit.G_hat.min_diagonal() < 0.0) fail(ErrorKind::Validity, "external fit: G has a negative diagonal entry");
  if (!fit.R_hat.positive_definite()) fail(ErrorKind::Validity, "external fit: R has a block that is not symmetric positive definite");

  std::vector<Index> row_nnz(static_cast<std::size_t>(n), 0);
  for (Index k = 0; k < fit.Z.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(fit.Z, k); it; ++it) {
      if (it.value() < 0.0)
        fail(ErrorKind::Validity, "external fit: Z has a negative entry at (" + std::to_string(it.row() + 1) + ", " +
                                      std::to_string(it.col() + 1) + ")");
      if (it.value() != 0.0) ++row_nnz[static_cast<std::size_t>(it.row())];
    }
  for (Index r = 0; r < n; ++r)
    if (row_nnz[static_cast<std::size_t>(r)] == 0)
      fail(ErrorKind::Validity, "external fit: row " + std::to_string(r + 1) + " of Z has no nonzero entry");

  if (fit.x_labels.empty())
    for (Index j = 0; j < p; ++j) fit.x_labels.push_back("x" + std::to_string(j + 1));
  if (static_cast<Index>(fit.x_labels.size()) != p)
    fail(ErrorKind::Consistency, "external fit: " + std::to_string(fit.x_labels.size()) + " labels for " + std::to_string(p) + " columns of X");

  if (fit.g_structure.empty()) {
    VarianceBlock all{"all", {}};
    for (Index j = 0; j < m; ++j) all.members.push_back(j);
    fit.g_structure.push_back(std::move(all));
  }
  std::vector<std::vector<Index>> g_sets;
  for (const auto& b : fit.g_structure) g_sets.push_back(b.members);
  detail::require_partition(g_sets, m, "G structure");
  if (fit.permutation_blocks.empty()) fit.permutation_blocks = g_sets;
  detail::require_partition(fit.permutation_blocks, m, "permutation blocks");
}

namespace detail {

/// Groups indices by label in first-appearance order.
inline std::vector<VarianceBlock> blocks_from_labels(const std::vector<std::string>& labels) {
  std::vector<VarianceBlock> out;
  std::map<std::string, std::size_t> where;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    auto [it, fresh] = where.emplace(labels[j], out.size());
    if (fresh) out.push_back({labels[j], {}});
    out[it->second].members.push_back(static_cast<Index>(j));
  }
  return out;
}

inline std::vector<std::string> read_label_column(std::istream& in, const std::string& name) {
  std::vector<std::string> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    auto f = split_csv_line(line);
    if (first && (f[0] == "block" || f[0] == "label")) {
      first = false;
      continue;
    }
    first = false;
    if (f.size() != 1) fail(ErrorKind::Parse, name + ": expected one label per line");
    out.push_back(f[0]);
  }
  return out;
}

/// G.csv: "value[,block]" per random effect, optional header row.
inline std::pair<Eigen::VectorXd, std::vector<std::string>> read_g_csv(std::istream& in) {
  std::vector<double> values;
  std::vector<std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '#') continue;
    auto f = split_csv_line(line);
    double v = 0.0;
    if (!parse_double(f[0], v)) {
      if (first) {
        first = false;
        continue;
      }
      fail(ErrorKind::Parse, "G.csv line " + std::to_string(line_no) + ": non-numeric variance '" + f[0] + "'");
    }
    first = false;
    if (f.size() > 2) fail(ErrorKind::Parse, "G.csv line " + std::to_string(line_no) + ": expected 'value[,block]'");
    values.push_back(v);
    if (f.size() == 2) labels.push_back(f[1]);
  }
  if (!labels.empty() && labels.size() != values.size())
    fail(ErrorKind::Parse, "G.csv: block labels must be given for every row or none");
  return {Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Index>(values.size())), labels};
}

}  // namespace detail

/// Reads an ExternalFit directory:
///   X.csv  y.csv  beta.csv  eta.csv       dense CSV (X may carry a header)
///   Z.txt  R.txt                          sparse triplets
///   G.csv (value[,block]) or G.txt         diagonal or triplet G
///   blocks.csv (optional)                  permutation block label per random effect
inline ExternalFit load_external_fit(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorKind::Schema, "external fit: '" + dir.string() + "' is not a directory");
  auto open = [&](const char* file) {
    fs::path path = dir / file;
    if (!fs::exists(path)) fail(ErrorKind::Schema, "external fit: missing file " + path.string());
    return detail::open_input(path.string());
  };
  ExternalFit fit;
  {
    auto in = open("X.csv");
    auto m = read_dense_csv(in, "X.csv");
    fit.X = std::move(m.values);
    fit.x_labels = std::move(m.labels);
  }
  { auto in = open("y.csv"); fit.y = read_vector_csv(in, "y.csv"); }
  { auto in = open("beta.csv"); fit.beta_hat = read_vector_csv(in, "beta.csv"); }
  { auto in = open("eta.csv"); fit.eta_hat = read_vector_csv(in, "eta.csv"); }
  { auto in = open("Z.txt"); fit.Z = read_triplets(in, "Z.txt"); }
  {
    auto in = open("R.txt");
    fit.R_hat = BlockDiagonal::from_sparse(symmetric_from_triplets(read_triplets(in, "R.txt"), "R.txt"));
  }
  if (fs::exists(dir / "G.csv")) {
    auto in = open("G.csv");
    auto [values, labels] = detail::read_g_csv(in);
    fit.G_hat = BlockDiagonal::diagonal(std::move(values));
    if (!labels.empty()) fit.g_structure = detail::blocks_from_labels(labels);
  } else if (fs::exists(dir / "G.txt")) {
    auto in = open("G.txt");
    fit.G_hat = BlockDiagonal::from_sparse(symmetric_from_triplets(read_triplets(in, "G.txt"), "G.txt"));
  } else {
    fail(ErrorKind::Schema, "external fit: missing G.csv or G.txt in " + dir.string());
  }
  if (fs::exists(dir / "blocks.csv")) {
    auto in = open("blocks.csv");
    for (auto& b : detail::blocks_from_labels(detail::read_label_column(in, "blocks.csv")))
      fit.permutation_blocks.push_back(std::move(b.members));
  }
  validate_external_fit(fit);
  return fit;
}

/// Writes the directory layout read by load_external_fit.
inline void write_external_fit(const std::filesystem::path& dir, const ExternalFit& fit) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* file) {
    std::ofstream out(dir / file);
    if (!out) fail(ErrorKind::Schema, "external fit: cannot write " + (dir / file).string());
    return out;
  };
  { auto o = open("X.csv"); write_dense_csv(o, fit.X, fit.x_labels); }
  { auto o = open("y.csv"); write_dense_csv(o, fit.y); }
  { auto o = open("beta.csv"); write_dense_csv(o, fit.beta_hat); }
  { auto o = open("eta.csv"); write_dense_csv(o, fit.eta_hat); }
  { auto o = open("Z.txt"); write_triplets(o, fit.Z); }
  { auto o = open("R.txt"); write_triplets(o, fit.R_hat.sparse()); }
  if (fit.G_hat.is_diagonal()) {
    std::vector<std::string> label(static_cast<std::size_t>(fit.m()), "all");
    for (const auto& b : fit.g_structure)
      for (Index j : b.members) label[static_cast<std::size_t>(j)] = b.label;
    auto o = open("G.csv");
    o << "value,block\n" << std::setprecision(17);
    for (Index j = 0; j < fit.m(); ++j) o << fit.G_hat.diagonal_values()(j) << ',' << label[static_cast<std::size_t>(j)] << '\n';
  } else {
    auto o = open("G.txt");
    write_triplets(o, fit.G_hat.sparse());
  }
  if (!fit.permutation_blocks.empty()) {
    std::vector<std::string> label(static_cast<std::size_t>(fit.m()));
    for (std::size_t b = 0; b < fit.permutation_blocks.size(); ++b)
      for (Index j : fit.permutation_blocks[b]) label[static_cast<std::size_t>(j)] = "b" + std::to_string(b + 1);
    auto o = open("blocks.csv");
    o << "block\n";
    for (const auto& l : label) o << l << '\n';
  }
}

}  // namespace panelbias
