#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "panelbias/bias.hpp"
#include "panelbias/estimators.hpp"
#include "panelbias/specification.hpp"
#include "panelbias/variance.hpp"

namespace panelbias::report {

using Json = nlohmann::ordered_json;

inline Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return out;
}

inline Json to_json(const VarianceEstimate& v) {
  Json out;
  out["method"] = to_string(v.method);
  Json eta = Json::object();
  for (const auto& [label, value] : v.sigma2_eta) eta[label] = value;
  out["sigma2_eta"] = eta;
  out["sigma2_eps"] = v.sigma2_eps;
  out["reml_loglik"] = v.reml_loglik ? Json(*v.reml_loglik) : Json(nullptr);
  out["boundary"] = v.boundary_flag;
  return out;
}

inline Json to_json(const FitResult& f) {
  Json out;
  out["estimator"] = to_string(f.estimator);
  Json coefs = Json::array();
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    const auto j = static_cast<Index>(i);
    coefs.push_back({{"term", f.labels[i]}, {"estimate", f.beta(j)}, {"std_error", std::sqrt(std::max(0.0, f.var_beta(j, j)))}});
  }
  out["coefficients"] = coefs;
  out["var_beta"] = to_json(f.var_beta);
  out["sigma2"] = f.sigma2;
  out["df_residual"] = f.df_residual;
  if (f.variance) out["variance"] = to_json(*f.variance);
  if (f.eta_hat) out["eta_hat"] = to_json(*f.eta_hat);
  if (!f.notes.empty()) out["notes"] = f.notes;
  return out;
}

inline Json to_json(const HausmanResult& h) {
  Json out;
  out["statistic"] = h.statistic;
  out["df"] = h.df;
  out["p_value"] = h.p_value;
  out["terms"] = h.labels;
  out["coef_diffs"] = to_json(h.coef_diffs);
  out["var_diff_eigenvalues"] = to_json(h.var_diff_eigs);
  out["zeroed_eigenvalues"] = h.zeroed_eigs;
  out["negative_eigenvalues"] = h.negative_eigs;
  return out;
}

inline Json to_json(const CreResult& c) {
  Json out;
  out["terms"] = c.labels;
  out["gamma_hat"] = to_json(c.gamma_hat);
  out["wald"] = c.wald;
  out["df"] = c.df;
  out["p_value"] = c.p_value;
  out["variance"] = to_json(c.variance);
  if (!c.notes.empty()) out["notes"] = c.notes;
  return out;
}

inline Json to_json(const BiasEntry& e) {
  Json out;
  out["label"] = e.label;
  out["k"] = to_json(e.k);
  out["estimate"] = e.observed;
  out["p_value"] = e.p_value;
  out["n_extreme"] = e.n_extreme;
  out["n_permutations"] = e.n_permutations;
  out["exhaustive"] = e.exhaustive;
  out["nu_hat"] = to_json(e.nu_hat);
  out["quantiles"] = {{"min", e.quantiles.min}, {"q01", e.quantiles.q01}, {"q25", e.quantiles.q25},
                      {"q50", e.quantiles.q50}, {"q75", e.quantiles.q75}, {"q99", e.quantiles.q99},
                      {"max", e.quantiles.max}};
  out["histogram"] = {{"edges", e.histogram.edges}, {"counts", e.histogram.counts}};
  return out;
}

inline Json to_json(const BiasDiagnosticResult& r) {
  Json out;
  out["seed"] = r.seed;
  out["n_permutations"] = r.n_permutations_requested;
  Json blocks = Json::array();
  for (const auto& b : r.blocks) {
    Json ids = Json::array();
    for (Index j : b) ids.push_back(j + 1);
    blocks.push_back(ids);
  }
  out["permutation_blocks"] = blocks;
  Json entries = Json::array();
  for (const auto& e : r.entries) entries.push_back(to_json(e));
  out["entries"] = entries;
  return out;
}

/// Canonical serialization: fixed key order, two-space indent, newline.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

inline std::string format_g(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// R-style p-value text: "< 2.2e-16" below machine epsilon, else "= <4 sig>".
inline std::string format_pvalue(double p) {
  if (p < 2.220446049250313e-16) return "< 2.2e-16";
  return "= " + format_g(p, 4);
}

inline std::string hausman_line(const HausmanResult& h) {
  return "chisq = " + format_g(h.statistic, 4) + ", df = " + std::to_string(h.df) + ", p-value " + format_pvalue(h.p_value);
}

inline std::string cre_line(const CreResult& c) {
  return "wald = " + format_g(c.wald, 4) + ", df = " + std::to_string(c.df) + ", p-value " + format_pvalue(c.p_value);
}

inline std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

/// Rows of a plain-text table; the first column is left aligned.
inline std::string text_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "  " : "") << pad(r[c], width[c], c == 0);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

inline std::string histogram_csv(const BiasEntry& e) {
  std::ostringstream out;
  out.precision(17);
  out << "bin_lower,bin_upper,count\n";
  for (std::size_t i = 0; i < e.histogram.counts.size(); ++i)
    out << e.histogram.edges[i] << ',' << e.histogram.edges[i + 1] << ',' << e.histogram.counts[i] << '\n';
  return out.str();
}

/// Reference-distribution histogram with a dashed red line at the observed
/// statistic. Coordinates are printed with 6 significant digits.
inline std::string histogram_svg(const BiasEntry& e) {
  constexpr double kWidth = 480, kHeight = 320, kLeft = 50, kRight = 20, kTop = 36, kBottom = 44;
  const auto& h = e.histogram;
  double lo = h.edges.front(), hi = h.edges.back();
  lo = std::min(lo, e.observed);
  hi = std::max(hi, e.observed);
  if (!(hi > lo)) hi = lo + 1.0;
  std::uint64_t peak = 1;
  for (auto c : h.counts) peak = std::max(peak, c);
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double v) { return kLeft + (v - lo) / (hi - lo) * plot_w; };
  auto sy = [&](double c) { return kTop + plot_h - c / static_cast<double>(peak) * plot_h; };
  auto num = [](double v) { return format_g(v, 6); };
  auto esc = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight) << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(kWidth / 2) << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << esc(e.label) << "</text>\n";
  svg << "<g fill=\"#bdbdbd\" stroke=\"#636363\" stroke-width=\"0.5\">\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] == 0) continue;
    const double x0 = sx(h.edges[i]), x1 = sx(h.edges[i + 1]), y0 = sy(static_cast<double>(h.counts[i]));
    svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0) << "\" height=\""
        << num(kTop + plot_h - y0) << "\"/>\n";
  }
  svg << "</g>\n";
  svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + plot_h) << "\" x2=\"" << num(kLeft + plot_w) << "\" y2=\""
      << num(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  for (double v : {lo, 0.5 * (lo + hi), hi})
    svg << "<text x=\"" << num(sx(v)) << "\" y=\"" << num(kTop + plot_h + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << num(v) << "</text>\n";
  svg << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << num(kHeight - 8)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">permuted statistic</text>\n";
  svg << "<line class=\"observed\" x1=\"" << num(sx(e.observed)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(sx(e.observed))
      << "\" y2=\"" << num(kTop + plot_h) << "\" stroke=\"red\" stroke-width=\"2\" stroke-dasharray=\"6,4\"/>\n";
  svg << "<text x=\"" << num(kLeft + plot_w) << "\" y=\"" << num(kTop - 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" fill=\"red\">estimate " << num(e.observed)
      << ", p = " << num(e.p_value) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace panelbias::report
