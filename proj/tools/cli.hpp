#pragma once

// Command-line front end. Kept in a header so the test suite can drive it
// in-process and compare reports byte for byte.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "panelbias/panelbias.hpp"

namespace panelbias::cli {

using report::Json;

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Schema, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::Numerical, "sha256 failed for '" + path + "'");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

/// Digests of every regular file in a directory, by file name.
inline Json digest_inputs(const std::vector<std::string>& paths) {
  namespace fs = std::filesystem;
  Json out = Json::array();
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out.push_back({{"path", (fs::path(p) / f.filename()).string()}, {"sha256", sha256_file(f.string())}});
    } else {
      out.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    }
  }
  return out;
}

inline std::string file_stem_for(const std::string& label, std::size_t index) {
  std::string s;
  for (char c : label) s += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  const auto a = s.find_first_not_of('_'), b = s.find_last_not_of('_');
  s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
  return "bias_" + std::to_string(index + 1) + (s.empty() ? "" : "_" + s);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Schema, "cannot write '" + path.string() + "'");
  out << text;
}

struct Options {
  // global
  std::string data;
  std::string out;
  std::uint64_t seed = 42;
  unsigned threads = 0;
  bool json = false;

  // model
  std::string response;
  std::vector<std::string> fixed;
  std::string group;
  std::string time;
  std::vector<std::string> categorical;
  bool no_intercept = false;
  std::string variance;

  // hausman
  bool cre = false;

  // biastest / import-fit
  std::string external_fit;
  std::uint64_t n_perms = 1'000'000;
  std::vector<std::string> k;
  std::string mode = "auto";
  std::string plot_dir;
  std::string export_dir;

  // simulate
  SimulationConfig sim;
  std::string truth;
};

inline VarianceMethod parse_variance(const std::string& s) {
  if (s == "reml") return VarianceMethod::Reml;
  if (s == "swamy-arora") return VarianceMethod::SwamyArora;
  fail(ErrorKind::Usage, "--variance must be 'reml' or 'swamy-arora', got '" + s + "'");
}

/// The time column defaults to the first header column the model does not use.
inline std::string infer_time_column(const Options& o) {
  auto in = detail::open_input(o.data);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "panel CSV: missing header row");
  for (const auto& h : detail::split_csv_line(line)) {
    if (h == o.group || h == o.response) continue;
    if (std::find(o.fixed.begin(), o.fixed.end(), h) != o.fixed.end()) continue;
    return h;
  }
  fail(ErrorKind::Usage, "no column left for --time; name it explicitly");
}

struct LoadedModel {
  ModelSpec spec;
  std::string time;
  DesignBundle bundle;
};

inline LoadedModel load_model(const Options& o) {
  if (o.data.empty()) fail(ErrorKind::Usage, "--data is required");
  if (o.group.empty()) fail(ErrorKind::Usage, "--group is required");
  if (o.response.empty()) fail(ErrorKind::Usage, "--response is required");
  LoadedModel m;
  m.time = o.time.empty() ? infer_time_column(o) : o.time;
  if (m.time == o.group) fail(ErrorKind::Usage, "--time and --group name the same column");
  const auto ds = load_panel_csv(o.data, ColumnSpec{o.group, m.time, {}, o.categorical});
  m.spec = ModelSpec{o.response, o.fixed, !o.no_intercept, o.group, {}};
  m.bundle = build_design(ds, m.spec);
  return m;
}

inline Json model_json(const LoadedModel& m) {
  Json out;
  out["response"] = m.spec.response;
  out["fixed_terms"] = m.spec.fixed_terms;
  out["intercept"] = m.spec.intercept;
  out["group"] = m.spec.group_column;
  out["time"] = m.time;
  out["n"] = m.bundle.n();
  out["p"] = m.bundle.p();
  out["groups"] = m.bundle.m();
  out["x_labels"] = m.bundle.x_labels;
  out["warnings"] = m.bundle.warnings;
  return out;
}

inline std::string model_line(const LoadedModel& m) {
  std::string s = "model: " + m.spec.response + " ~ ";
  if (m.spec.fixed_terms.empty()) s += m.spec.intercept ? "1" : "0";
  for (std::size_t i = 0; i < m.spec.fixed_terms.size(); ++i) s += (i ? " + " : "") + m.spec.fixed_terms[i];
  return s + " | " + m.spec.group_column + "  (n = " + std::to_string(m.bundle.n()) + ", groups = " +
         std::to_string(m.bundle.m()) + ")\n";
}

inline std::string variance_line(const VarianceEstimate& v) {
  std::string s = "variance (" + std::string(to_string(v.method)) + "):";
  for (const auto& [label, value] : v.sigma2_eta)
    s += " sigma2_eta" + (label == "all" ? std::string() : "[" + label + "]") + " = " + report::format_g(value, 6);
  s += ", sigma2_eps = " + report::format_g(v.sigma2_eps, 6);
  if (v.boundary_flag) s += " (boundary)";
  return s + "\n";
}

inline VarianceEstimate estimate_variance(const DesignBundle& b, VarianceMethod method) {
  return method == VarianceMethod::Reml ? estimate_reml(b) : estimate_swamy_arora(b);
}

inline Json provenance(const Options& o, const std::vector<std::string>& inputs, bool with_permutations) {
  Json out;
  out["tool"] = "panelbias";
  out["version"] = PANELBIAS_VERSION;
  out["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  if (with_permutations) {
    out["seed"] = o.seed;
    out["n_permutations"] = o.n_perms;
  }
  out["inputs"] = digest_inputs(inputs);
  return out;
}

/// Writes the report to --out and, with --json, to stdout instead of text.
inline void emit(const Options& o, const Json& report_json, const std::string& text, std::ostream& out) {
  const std::string body = report::dump(report_json);
  if (!o.out.empty()) write_text(o.out, body);
  out << (o.json ? body : text);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_fit(const Options& o, std::ostream& out) {
  const LoadedModel m = load_model(o);
  const auto method = parse_variance(o.variance.empty() ? "swamy-arora" : o.variance);
  const FitResult within = fit_fe_within(m.bundle);
  const FitResult lsdv = fit_fe_lsdv(m.bundle);
  const VarianceEstimate v = estimate_variance(m.bundle, method);
  const FitResult re = fit_re(m.bundle, v);

  Json table = Json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < re.labels.size(); ++i) {
    const auto& label = re.labels[i];
    const double r = re.beta(static_cast<Index>(i));
    const auto fe = lsdv.coefficient(label);
    Json row;
    row["term"] = label;
    row["fe"] = fe ? Json(*fe) : Json(nullptr);
    row["re"] = r;
    row["re_minus_fe"] = fe ? Json(r - *fe) : Json(nullptr);
    table.push_back(row);
    rows.push_back({label, fe ? report::format_g(*fe, 6) : "-", report::format_g(r, 6), fe ? report::format_g(r - *fe, 6) : "-"});
  }

  Json j;
  j["command"] = "fit";
  j["model"] = model_json(m);
  j["variance"] = report::to_json(v);
  j["fe_within"] = report::to_json(within);
  j["fe_lsdv"] = report::to_json(lsdv);
  j["re"] = report::to_json(re);
  j["table"] = table;
  j["provenance"] = provenance(o, {o.data}, false);

  std::string text = model_line(m) + variance_line(v) + "\n" + report::text_table({"term", "FE", "RE", "RE-FE"}, rows);
  for (const auto& note : within.notes) text += "note: " + note + "\n";
  emit(o, j, text, out);
  return 0;
}

inline int cmd_hausman(const Options& o, std::ostream& out) {
  const LoadedModel m = load_model(o);
  const auto method = parse_variance(o.variance.empty() ? "swamy-arora" : o.variance);
  Json j;
  j["command"] = "hausman";
  j["model"] = model_json(m);
  std::string text = model_line(m);
  if (o.cre) {
    const CreResult cre = cre_mundlak_test(m.bundle, method);
    j["cre"] = report::to_json(cre);
    text += variance_line(cre.variance) + "\nCorrelated random effects (Mundlak) Wald test\n" + report::cre_line(cre) + "\n";
    for (const auto& note : cre.notes) text += "note: " + note + "\n";
  } else {
    const FitResult within = fit_fe_within(m.bundle);
    const VarianceEstimate v = estimate_variance(m.bundle, method);
    const FitResult re = fit_re(m.bundle, v);
    const HausmanResult h = hausman_test(within, re);
    j["variance"] = report::to_json(v);
    j["hausman"] = report::to_json(h);
    text += variance_line(v) + "\nHausman Test\n" + report::hausman_line(h) + "\n";
    if (h.negative_eigs > 0)
      text += "note: Var(FE) - Var(RE) has " + std::to_string(h.negative_eigs) + " negative eigenvalue(s)\n";
  }
  j["provenance"] = provenance(o, {o.data}, false);
  emit(o, j, text, out);
  return 0;
}

inline Eigen::VectorXd parse_k(const std::string& raw, Index p) {
  std::vector<double> values;
  std::stringstream ss(raw);
  std::string field;
  while (std::getline(ss, field, ',')) {
    double v = 0.0;
    if (!detail::parse_double(detail::trim(field), v))
      fail(ErrorKind::Usage, "malformed --k '" + raw + "': expected p = " + std::to_string(p) + " comma-separated numbers");
    values.push_back(v);
  }
  if (static_cast<Index>(values.size()) != p)
    fail(ErrorKind::Usage, "--k '" + raw + "' has " + std::to_string(values.size()) + " entries, expected p = " + std::to_string(p));
  return Eigen::Map<Eigen::VectorXd>(values.data(), p);
}

inline PermutationMode parse_mode(const std::string& s) {
  if (s == "auto") return PermutationMode::Auto;
  if (s == "monte-carlo") return PermutationMode::MonteCarlo;
  if (s == "exhaustive") return PermutationMode::Exhaustive;
  fail(ErrorKind::Usage, "--mode must be auto, monte-carlo or exhaustive");
}

inline int cmd_biastest(const Options& o, std::ostream& out) {
  std::optional<LoadedModel> m;
  std::optional<DiagnosticModel> model;
  std::optional<FitResult> re, within;
  Json j;
  j["command"] = "biastest";
  std::string text;
  std::vector<std::string> inputs;

  if (!o.external_fit.empty()) {
    if (!o.data.empty()) fail(ErrorKind::Usage, "--data and --external-fit are mutually exclusive");
    const ExternalFit fit = load_external_fit(o.external_fit);
    model.emplace(DiagnosticModel::from_external(fit));
    j["source"] = "external-fit";
    j["external_fit"] = {{"n", fit.n()}, {"p", fit.p()}, {"m", fit.m()}, {"x_labels", fit.x_labels}};
    text += "external fit: n = " + std::to_string(fit.n()) + ", p = " + std::to_string(fit.p()) + ", m = " +
            std::to_string(fit.m()) + "\n";
    inputs.push_back(o.external_fit);
  } else {
    m.emplace(load_model(o));
    const auto method = parse_variance(o.variance.empty() ? "reml" : o.variance);
    const VarianceEstimate v = estimate_variance(m->bundle, method);
    re.emplace(fit_re(m->bundle, v));
    try {
      within.emplace(fit_fe_lsdv(m->bundle));
    } catch (const Error&) {
      // FE columns are informational here; skip them when FE is infeasible.
    }
    model.emplace(DiagnosticModel::from_fit(*re, m->bundle));
    j["source"] = "data";
    j["model"] = model_json(*m);
    j["variance"] = report::to_json(v);
    text += model_line(*m) + variance_line(v);
    inputs.push_back(o.data);
  }

  std::vector<KVector> ks;
  for (const auto& raw : o.k) ks.push_back(make_kvector(*model, parse_k(raw, model->p()), "k=(" + raw + ")"));

  PermutationPlan plan;
  plan.n_permutations = o.n_perms;
  plan.seed = o.seed;
  plan.threads = o.threads;
  plan.mode = parse_mode(o.mode);
  const BiasDiagnosticResult res = run_bias_diagnostic(*model, ks, plan);
  j["bias"] = report::to_json(res);

  std::vector<std::vector<std::string>> rows;
  Json table = Json::array();
  for (const auto& e : res.entries) {
    std::vector<std::string> row{e.label};
    Json trow;
    trow["term"] = e.label;
    if (re) {
      const auto r = e.k.dot(re->beta);
      std::optional<double> fe;
      if (within) fe = within->coefficient(e.label);
      row.push_back(fe ? report::format_g(*fe, 6) : "-");
      row.push_back(report::format_g(r, 6));
      row.push_back(fe ? report::format_g(r - *fe, 6) : "-");
      trow["fe"] = fe ? Json(*fe) : Json(nullptr);
      trow["re"] = r;
      trow["re_minus_fe"] = fe ? Json(r - *fe) : Json(nullptr);
    }
    trow["bias"] = e.observed;
    trow["p_value"] = e.p_value;
    table.push_back(trow);
    row.push_back(report::format_g(e.observed, 6));
    row.push_back(report::format_g(e.p_value, 6));
    rows.push_back(std::move(row));
  }
  std::vector<std::string> header{"term"};
  if (re) header.insert(header.end(), {"FE", "RE", "RE-FE"});
  header.insert(header.end(), {"bias", "p-value"});
  text += "\n" + report::text_table(header, rows);
  const auto& first = res.entries.front();
  text += (first.exhaustive ? "exhaustive enumeration over " : "permutations: ") + std::to_string(first.n_permutations) +
          (first.exhaustive ? " permutations" : ", seed " + std::to_string(o.seed)) + "\n";

  std::filesystem::path plots = o.plot_dir;
  if (plots.empty() && !o.out.empty()) plots = std::filesystem::path(o.out).parent_path();
  if (!o.plot_dir.empty() || !o.out.empty()) {
    for (std::size_t i = 0; i < res.entries.size(); ++i) {
      const std::string stem = file_stem_for(res.entries[i].label, i);
      write_text(plots / (stem + ".svg"), report::histogram_svg(res.entries[i]));
      write_text(plots / (stem + ".csv"), report::histogram_csv(res.entries[i]));
    }
  }

  j["table"] = table;
  j["provenance"] = provenance(o, inputs, true);
  emit(o, j, text, out);
  return 0;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  SimulationConfig cfg = o.sim;
  cfg.seed = o.seed;
  const SimulatedPanel sim = simulate_panel(cfg);

  Json truth;
  truth["command"] = "simulate";
  truth["n_units"] = cfg.n_units;
  truth["n_periods"] = cfg.n_periods;
  truth["beta"] = {{"(Intercept)", cfg.intercept}, {"x1", cfg.beta1}, {"x2", cfg.beta2}};
  truth["sigma2_eta"] = cfg.sigma2_eta;
  truth["sigma2_eps"] = cfg.sigma2_eps;
  truth["delta"] = cfg.delta;
  truth["seed"] = cfg.seed;
  truth["eta"] = report::to_json(sim.eta);
  truth["provenance"] = {{"tool", "panelbias"}, {"version", PANELBIAS_VERSION}};

  std::ostringstream csv;
  write_panel_csv(csv, sim.data);
  if (o.out.empty()) {
    out << csv.str();
    if (!o.truth.empty()) write_text(o.truth, report::dump(truth));
    return 0;
  }
  write_text(o.out, csv.str());
  std::filesystem::path truth_path = o.truth;
  if (truth_path.empty()) truth_path = std::filesystem::path(o.out).replace_extension(".truth.json");
  write_text(truth_path, report::dump(truth));
  if (o.json)
    out << report::dump(truth);
  else
    out << "wrote " << o.out << " (" << sim.data.rows() << " rows) and " << truth_path.string() << "\n";
  return 0;
}

inline int cmd_import_fit(const Options& o, std::ostream& out) {
  if (o.external_fit.empty()) fail(ErrorKind::Usage, "import-fit needs --external-fit DIR");
  const ExternalFit fit = load_external_fit(o.external_fit);
  const DiagnosticModel model = DiagnosticModel::from_external(fit);

  Json j;
  j["command"] = "import-fit";
  j["n"] = fit.n();
  j["p"] = fit.p();
  j["m"] = fit.m();
  j["x_labels"] = fit.x_labels;
  Json g = Json::array();
  for (const auto& b : fit.g_structure) {
    Json ids = Json::array();
    for (Index i : b.members) ids.push_back(i + 1);
    g.push_back({{"label", b.label}, {"members", ids}});
  }
  j["g_structure"] = g;
  Json perm = Json::array();
  for (const auto& b : fit.permutation_blocks) perm.push_back(b.size());
  j["permutation_block_sizes"] = perm;
  j["r_blocks"] = fit.R_hat.is_diagonal() ? fit.n() : static_cast<Index>(fit.R_hat.blocks().size());
  j["g_diagonal"] = fit.G_hat.is_diagonal();
  std::vector<std::string> inestimable;
  for (Index c = 0; c < fit.p(); ++c)
    if (!model.is_estimable(Eigen::VectorXd::Unit(fit.p(), c))) inestimable.push_back(fit.x_labels[static_cast<std::size_t>(c)]);
  j["inestimable_coefficients"] = inestimable;
  j["provenance"] = provenance(o, {o.external_fit}, false);
  if (!o.export_dir.empty()) write_external_fit(o.export_dir, fit);

  std::ostringstream text;
  text << "external fit " << o.external_fit << ": valid\n"
       << "  n = " << fit.n() << ", p = " << fit.p() << ", m = " << fit.m() << "\n"
       << "  G blocks: " << fit.g_structure.size() << ", permutation blocks: " << fit.permutation_blocks.size()
       << ", R blocks: " << j["r_blocks"].get<Index>() << "\n";
  if (!inestimable.empty()) text << "  inestimable coefficients: " << inestimable.size() << "\n";
  if (!o.export_dir.empty()) text << "  exported to " << o.export_dir << "\n";
  emit(o, j, text.str(), out);
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--response", o.response, "response column");
  cmd->add_option("--fixed", o.fixed, "fixed-effect terms, comma separated")->delimiter(',');
  cmd->add_option("--group", o.group, "unit (group) column");
  cmd->add_option("--time", o.time, "time column (default: first unused column)");
  cmd->add_option("--categorical", o.categorical, "columns to read as categorical")->delimiter(',');
  cmd->add_flag("--no-intercept", o.no_intercept, "drop the intercept");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Panel random-effects fits, Hausman/CRE tests and the internal bias diagnostic", "panelbias"};
  app.set_version_flag("--version", PANELBIAS_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--data", o.data, "panel CSV");
  app.add_option("--out", o.out, "output path (JSON report; CSV for simulate)");
  app.add_option("--seed", o.seed, "random seed")->capture_default_str();
  app.add_option("--threads", o.threads, "worker threads for permutations, 0 = all cores")->capture_default_str();
  app.add_flag("--json", o.json, "print the JSON report instead of text");

  auto* fit = app.add_subcommand("fit", "FE (within, LSDV) and RE fits");
  add_model_flags(fit, o);
  fit->add_option("--variance", o.variance, "reml | swamy-arora (default swamy-arora)");

  auto* hausman = app.add_subcommand("hausman", "Hausman FE vs RE test");
  add_model_flags(hausman, o);
  hausman->add_option("--variance", o.variance, "reml | swamy-arora (default swamy-arora)");
  hausman->add_flag("--cre", o.cre, "Mundlak correlated-random-effects Wald test instead");

  auto* bias = app.add_subcommand("biastest", "internal bias diagnostic with permutation p-values");
  add_model_flags(bias, o);
  bias->add_option("--variance", o.variance, "reml | swamy-arora (default reml)");
  bias->add_option("--external-fit", o.external_fit, "directory holding an external fit");
  bias->add_option("--n-perms", o.n_perms, "number of permutations")->capture_default_str();
  bias->add_option("--k", o.k, "coefficient vector \"c1,...,cp\" (repeatable; default: every coefficient)")
      ->allow_extra_args(false);
  bias->add_option("--mode", o.mode, "auto | monte-carlo | exhaustive")->capture_default_str();
  bias->add_option("--plot-dir", o.plot_dir, "directory for SVG/CSV histograms (default: next to --out)");

  auto* sim = app.add_subcommand("simulate", "simulate a random-intercept panel");
  sim->add_option("--N", o.sim.n_units, "units")->capture_default_str();
  sim->add_option("--T", o.sim.n_periods, "periods")->capture_default_str();
  sim->add_option("--delta", o.sim.delta, "dependence between regressor assignment and effects")->capture_default_str();
  sim->add_option("--intercept", o.sim.intercept)->capture_default_str();
  sim->add_option("--beta1", o.sim.beta1)->capture_default_str();
  sim->add_option("--beta2", o.sim.beta2)->capture_default_str();
  sim->add_option("--sigma2-eta", o.sim.sigma2_eta)->capture_default_str();
  sim->add_option("--sigma2-eps", o.sim.sigma2_eps)->capture_default_str();
  sim->add_option("--truth", o.truth, "ground-truth JSON path (default: <out>.truth.json)");

  auto* imp = app.add_subcommand("import-fit", "validate an external fit directory");
  imp->add_option("--external-fit", o.external_fit, "directory holding an external fit");
  imp->add_option("--export", o.export_dir, "write a normalized copy to this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(o, out);
    if (*hausman) return cmd_hausman(o, out);
    if (*bias) return cmd_biastest(o, out);
    if (*sim) return cmd_simulate(o, out);
    if (*imp) return cmd_import_fit(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace panelbias::cli
