#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "panelbias/block_diagonal.hpp"
#include "panelbias/errors.hpp"

namespace panelbias {

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Schema, "cannot open file '" + path + "'");
  return in;
}

}  // namespace detail

/// Categorical column factorized in first-appearance order.
struct Categorical {
  std::vector<Index> codes;
  std::vector<std::string> levels;

  Index add(const std::string& label, std::unordered_map<std::string, Index>& lookup) {
    auto [it, inserted] = lookup.emplace(label, static_cast<Index>(levels.size()));
    if (inserted) levels.push_back(label);
    codes.push_back(it->second);
    return it->second;
  }
  const std::string& label(std::size_t row) const { return levels[static_cast<std::size_t>(codes[row])]; }
  Index n_levels() const { return static_cast<Index>(levels.size()); }
};

/// Which columns of a panel CSV to read and how. An empty `numeric` list
/// means every column not otherwise declared is numeric.
struct ColumnSpec {
  std::string unit;
  std::string time;
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
};

/// Long-format panel: one row per (unit, time).
struct PanelDataset {
  std::string unit_name;
  std::string time_name;
  Categorical unit;
  Categorical time;
  std::vector<std::string> numeric_names;
  std::vector<Eigen::VectorXd> numeric;
  std::vector<std::string> categorical_names;
  std::vector<Categorical> categorical;
  std::vector<std::string> column_names;  // header order

  std::size_t rows() const { return unit.codes.size(); }

  const Eigen::VectorXd* find_numeric(const std::string& name) const {
    auto it = std::find(numeric_names.begin(), numeric_names.end(), name);
    return it == numeric_names.end() ? nullptr : &numeric[static_cast<std::size_t>(it - numeric_names.begin())];
  }

  const Categorical* find_categorical(const std::string& name) const {
    if (name == unit_name) return &unit;
    if (name == time_name) return &time;
    auto it = std::find(categorical_names.begin(), categorical_names.end(), name);
    return it == categorical_names.end() ? nullptr
                                         : &categorical[static_cast<std::size_t>(it - categorical_names.begin())];
  }

  /// Copy with rows sorted by (unit label, time label) and factors rebuilt
  /// in the new row order.
  PanelDataset sorted_by_unit_time() const {
    std::vector<std::size_t> order(rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ua = unit.label(a);
      const auto& ub = unit.label(b);
      if (ua != ub) return ua < ub;
      return time.label(a) < time.label(b);
    });
    PanelDataset out;
    out.unit_name = unit_name;
    out.time_name = time_name;
    out.numeric_names = numeric_names;
    out.categorical_names = categorical_names;
    out.column_names = column_names;
    std::unordered_map<std::string, Index> lu, lt;
    std::vector<std::unordered_map<std::string, Index>> lc(categorical.size());
    out.categorical.resize(categorical.size());
    out.numeric.assign(numeric.size(), Eigen::VectorXd(static_cast<Index>(rows())));
    for (std::size_t r = 0; r < order.size(); ++r) {
      const std::size_t src = order[r];
      out.unit.add(unit.label(src), lu);
      out.time.add(time.label(src), lt);
      for (std::size_t c = 0; c < categorical.size(); ++c) out.categorical[c].add(categorical[c].label(src), lc[c]);
      for (std::size_t c = 0; c < numeric.size(); ++c)
        out.numeric[c](static_cast<Index>(r)) = numeric[c](static_cast<Index>(src));
    }
    return out;
  }

  friend bool operator==(const PanelDataset& a, const PanelDataset& b) {
    if (a.rows() != b.rows() || a.numeric_names != b.numeric_names || a.categorical_names != b.categorical_names)
      return false;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (a.unit.label(r) != b.unit.label(r) || a.time.label(r) != b.time.label(r)) return false;
      for (std::size_t c = 0; c < a.categorical.size(); ++c)
        if (a.categorical[c].label(r) != b.categorical[c].label(r)) return false;
    }
    for (std::size_t c = 0; c < a.numeric.size(); ++c)
      if (a.numeric[c] != b.numeric[c]) return false;
    return true;
  }
};

inline PanelDataset read_panel_csv(std::istream& in, const ColumnSpec& spec) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "panel CSV: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::Schema, "panel CSV: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  PanelDataset ds;
  ds.unit_name = spec.unit;
  ds.time_name = spec.time;
  ds.column_names = header;
  const std::size_t unit_col = column_index(spec.unit);
  const std::size_t time_col = column_index(spec.time);

  std::vector<std::size_t> cat_cols;
  for (const auto& c : spec.categorical) {
    cat_cols.push_back(column_index(c));
    ds.categorical_names.push_back(c);
  }
  std::vector<std::size_t> num_cols;
  if (spec.numeric.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == unit_col || i == time_col) continue;
      if (std::find(cat_cols.begin(), cat_cols.end(), i) != cat_cols.end()) continue;
      num_cols.push_back(i);
      ds.numeric_names.push_back(header[i]);
    }
  } else {
    for (const auto& c : spec.numeric) {
      num_cols.push_back(column_index(c));
      ds.numeric_names.push_back(c);
    }
  }

  std::unordered_map<std::string, Index> unit_lookup, time_lookup;
  std::vector<std::unordered_map<std::string, Index>> cat_lookup(cat_cols.size());
  ds.categorical.resize(cat_cols.size());
  std::vector<std::vector<double>> values(num_cols.size());
  std::map<std::pair<Index, Index>, std::size_t> seen_keys;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::Parse, "panel CSV row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    auto require_present = [&](std::size_t col) {
      const auto& f = fields[col];
      if (f.empty() || f == "NA" || f == "NaN")
        fail(ErrorKind::Parse, "panel CSV row " + std::to_string(row) + ": missing value in column '" +
                                   header[col] + "'");
      return f;
    };
    const Index u = ds.unit.add(require_present(unit_col), unit_lookup);
    const Index t = ds.time.add(require_present(time_col), time_lookup);
    if (auto [it, fresh] = seen_keys.emplace(std::make_pair(u, t), row); !fresh)
      fail(ErrorKind::DuplicateKey, "panel CSV row " + std::to_string(row) + ": duplicate (" + spec.unit + ", " +
                                        spec.time + ") = (" + fields[unit_col] + ", " + fields[time_col] +
                                        "), first seen at row " + std::to_string(it->second));
    for (std::size_t c = 0; c < cat_cols.size(); ++c) ds.categorical[c].add(require_present(cat_cols[c]), cat_lookup[c]);
    for (std::size_t c = 0; c < num_cols.size(); ++c) {
      double v = 0.0;
      const auto& f = require_present(num_cols[c]);
      if (!detail::parse_double(f, v))
        fail(ErrorKind::Parse, "panel CSV row " + std::to_string(row) + ": non-numeric value '" + f +
                                   "' in column '" + header[num_cols[c]] + "'");
      values[c].push_back(v);
    }
  }
  for (auto& v : values) ds.numeric.emplace_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
  return ds;
}

inline PanelDataset load_panel_csv(const std::string& path, const ColumnSpec& spec) {
  auto in = detail::open_input(path);
  return read_panel_csv(in, spec);
}

/// Model declaration. Fixed terms naming categorical columns are expanded
/// into indicator columns with the first-appearing level as reference.
struct ModelSpec {
  std::string response;
  std::vector<std::string> fixed_terms;
  bool intercept = true;
  std::string group_column;
  /// Optional group level -> variance-block label; empty means one block.
  std::map<std::string, std::string> variance_blocks;
};

struct VarianceBlock {
  std::string label;
  std::vector<Index> members;  // columns of Z
};

inline constexpr const char* kInterceptLabel = "(Intercept)";

/// Everything needed to fit one model: y = X beta + Z eta + eps.
struct DesignBundle {
  Eigen::MatrixXd X;
  SparseMatrix Z;
  Eigen::VectorXd y;
  std::vector<Index> group_of_row;
  std::vector<VarianceBlock> g_structure;
  BlockDiagonal r_structure;  // error covariance up to the scale sigma2_eps
  std::vector<std::string> x_labels;
  std::vector<std::string> z_labels;
  bool has_intercept = false;
  std::vector<std::string> warnings;
  std::vector<Index> singleton_groups;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index m() const { return Z.cols(); }

  std::vector<Index> group_sizes() const {
    std::vector<Index> sizes(static_cast<std::size_t>(m()), 0);
    for (Index g : group_of_row) ++sizes[static_cast<std::size_t>(g)];
    return sizes;
  }
};

/// Incidence matrix with a single 1 per row at the row's group.
inline SparseMatrix incidence_matrix(const std::vector<Index>& group_of_row, Index n_groups) {
  std::vector<Triplet> trips;
  trips.reserve(group_of_row.size());
  for (std::size_t r = 0; r < group_of_row.size(); ++r) trips.emplace_back(static_cast<Index>(r), group_of_row[r], 1.0);
  SparseMatrix z(static_cast<Index>(group_of_row.size()), n_groups);
  z.setFromTriplets(trips.begin(), trips.end());
  return z;
}

inline DesignBundle build_design(const PanelDataset& data, const ModelSpec& spec) {
  const Index n = static_cast<Index>(data.rows());
  DesignBundle b;
  b.has_intercept = spec.intercept;

  const Eigen::VectorXd* resp = data.find_numeric(spec.response);
  if (!resp) fail(ErrorKind::Schema, "model: response column '" + spec.response + "' not found");
  b.y = *resp;

  if (spec.group_column.empty()) fail(ErrorKind::Usage, "model: group column is required");
  const Categorical* group = data.find_categorical(spec.group_column);
  if (!group) fail(ErrorKind::Schema, "model: group column '" + spec.group_column + "' not found");

  std::vector<Eigen::VectorXd> cols;
  if (spec.intercept) {
    cols.push_back(Eigen::VectorXd::Ones(n));
    b.x_labels.emplace_back(kInterceptLabel);
  }
  bool full_coding_used = spec.intercept;
  for (const auto& term : spec.fixed_terms) {
    if (const auto* num = data.find_numeric(term)) {
      cols.push_back(*num);
      b.x_labels.push_back(term);
    } else if (const auto* cat = data.find_categorical(term)) {
      // Without an intercept the first categorical keeps all its levels.
      const Index first = full_coding_used ? 1 : 0;
      full_coding_used = true;
      for (Index level = first; level < cat->n_levels(); ++level) {
        Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
        for (Index r = 0; r < n; ++r)
          if (cat->codes[static_cast<std::size_t>(r)] == level) col(r) = 1.0;
        cols.push_back(std::move(col));
        b.x_labels.push_back(term + "=" + cat->levels[static_cast<std::size_t>(level)]);
      }
    } else {
      fail(ErrorKind::Schema, "model: fixed term '" + term + "' not found");
    }
  }
  b.X.resize(n, static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) b.X.col(static_cast<Index>(c)) = cols[c];

  b.group_of_row = group->codes;
  b.Z = incidence_matrix(b.group_of_row, group->n_levels());
  b.z_labels = group->levels;
  b.r_structure = BlockDiagonal::identity(n);

  if (spec.variance_blocks.empty()) {
    VarianceBlock all{"all", {}};
    for (Index j = 0; j < group->n_levels(); ++j) all.members.push_back(j);
    b.g_structure.push_back(std::move(all));
  } else {
    std::map<std::string, std::size_t> block_index;
    for (Index j = 0; j < group->n_levels(); ++j) {
      auto it = spec.variance_blocks.find(group->levels[static_cast<std::size_t>(j)]);
      if (it == spec.variance_blocks.end())
        fail(ErrorKind::Schema, "model: variance blocks do not cover group level '" +
                                    group->levels[static_cast<std::size_t>(j)] + "'");
      auto [bi, fresh] = block_index.emplace(it->second, b.g_structure.size());
      if (fresh) b.g_structure.push_back({it->second, {}});
      b.g_structure[bi->second].members.push_back(j);
    }
    if (spec.variance_blocks.size() != static_cast<std::size_t>(group->n_levels()))
      fail(ErrorKind::Schema, "model: variance blocks name levels absent from group column '" + spec.group_column + "'");
  }

  const auto sizes = b.group_sizes();
  for (std::size_t j = 0; j < sizes.size(); ++j)
    if (sizes[j] == 1) b.singleton_groups.push_back(static_cast<Index>(j));
  if (!b.singleton_groups.empty())
    b.warnings.push_back(std::to_string(b.singleton_groups.size()) + " group(s) with a single observation");

  if (b.p() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b.X);
    if (qr.rank() < b.p())
      b.warnings.push_back("X is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                           std::to_string(b.p()) + " columns); generalized inverses are used");
  }
  return b;
}

}  // namespace panelbias
