// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance 3 7c 7e    run the listed ids
//
// Ids: 1 2 2reml 3 4 5 6 7 7a..7g. "2reml" is the REML half of criterion 2
// on its own; "7" runs all property items. Exit status is 0 when every
// selected check passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace panelbias;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6) { return report::format_g(v, digits); }

std::string join(const Eigen::VectorXd& v, int digits = 4) {
  std::string s = "(";
  for (Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i), digits);
  return s + ")";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool all_within(const Eigen::VectorXd& got, const std::vector<double>& want, double tol) {
  for (std::size_t i = 0; i < want.size(); ++i)
    if (std::abs(got(static_cast<Index>(i)) - want[i]) > tol) return false;
  return true;
}

VarianceEstimate fixed_variance(double s2eta, double s2eps) {
  VarianceEstimate v;
  v.sigma2_eta["all"] = s2eta;
  v.sigma2_eps = s2eps;
  return v;
}

PermutationPlan plan_of(std::uint64_t n, std::uint64_t seed, unsigned threads = 1) {
  PermutationPlan p;
  p.n_permutations = n;
  p.seed = seed;
  p.threads = threads;
  return p;
}

DesignBundle sim_design(std::uint64_t seed, Index n_units, Index n_periods, double delta) {
  SimulationConfig cfg;
  cfg.n_units = n_units;
  cfg.n_periods = n_periods;
  cfg.delta = delta;
  cfg.seed = seed;
  return build_design(simulate_panel(cfg).data, simulated_model_spec());
}

const std::vector<double> kFeSlopes = {0.66, -0.32, -0.64};
const std::vector<double> kReTable = {2.15, 0.59, -0.37, -0.62};
const std::vector<double> kBiasTable = {-0.17, -0.04, -0.04, 0.01};

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = testutil::gasoline_design();
  const auto within = fit_fe_within(b);
  const auto lsdv = fit_fe_lsdv(b);
  const double secs = seconds_since(t0);
  const bool ok = all_within(within.beta, kFeSlopes, 0.01) && std::abs(lsdv.beta(0) - 2.29) <= 0.01 && secs < 1.0;
  return {ok, "slopes " + join(within.beta) + ", intercept " + fmt(lsdv.beta(0), 4) + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion_2_reml() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = testutil::gasoline_design();
  const auto re = fit_re(b, estimate_reml(b));
  const double secs = seconds_since(t0);
  return {all_within(re.beta, kReTable, 0.01) && secs < 1.0, "REML " + join(re.beta) + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = testutil::gasoline_design();
  const auto sa = fit_re(b, estimate_swamy_arora(b));
  const double secs = seconds_since(t0);
  const bool sa_ok = all_within(sa.beta, kReTable, 0.01) && secs < 1.0;
  const auto reml = criterion_2_reml();
  return {sa_ok && reml.pass,
          "Swamy-Arora " + join(sa.beta) + (sa_ok ? "" : " [outside 0.01]") + ", " + fmt(secs, 3) + " s; " + reml.detail};
}

Outcome criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = testutil::gasoline_design();
  const auto h = hausman_test(fit_fe_within(b), fit_re(b, estimate_swamy_arora(b)));
  const double secs = seconds_since(t0);
  const bool ok = std::abs(h.statistic - 302.8) <= 1.0 && h.df == 3 && h.p_value < 1e-15 && secs < 1.0;
  return {ok, "chisq = " + fmt(h.statistic, 5) + ", df = " + std::to_string(h.df) + ", p = " + fmt(h.p_value, 3) +
                  ", " + fmt(secs, 3) + " s"};
}

struct GasolineModel {
  DesignBundle b;
  FitResult re;
  FitResult lsdv;
};

GasolineModel gasoline_model() {
  const auto b = testutil::gasoline_design();
  return {b, fit_re(b, estimate_reml(b)), fit_fe_lsdv(b)};
}

Outcome criterion_4() {
  const auto g = gasoline_model();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  Eigen::VectorXd est(4), gap(4);
  for (Index j = 0; j < 4; ++j) {
    est(j) = bias_estimate(compute_nu_hat(model, make_kvector(model, Eigen::VectorXd::Unit(4, j), "k")), *g.re.eta_hat);
    gap(j) = std::abs(est(j) - (g.re.beta(j) - g.lsdv.beta(j)));
  }
  const bool ok = all_within(est, kBiasTable, 0.01) && gap.maxCoeff() <= 0.04;
  return {ok, "bias " + join(est) + ", max |bias - (RE-FE)| = " + fmt(gap.maxCoeff(), 3)};
}

Outcome criterion_5() {
  const auto g = gasoline_model();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_bias_diagnostic(model, {}, plan_of(1'000'000, 42, 4));
  const double secs = seconds_since(t0);
  Eigen::VectorXd p(4);
  for (Index j = 0; j < 4; ++j) p(j) = r.entries[static_cast<std::size_t>(j)].p_value;
  // Order: (Intercept), lincomep, lrpmg, lcarpcap.
  const bool ok = std::abs(p(0) - 0.10) <= 0.02 && std::abs(p(1) - 0.16) <= 0.02 && p(2) <= 0.005 &&
                  std::abs(p(3) - 0.20) <= 0.02 && secs < 60.0;
  return {ok, "p-values " + join(p) + " (B = 1e6, seed 42, 4 threads), " + fmt(secs, 3) + " s"};
}

Outcome criterion_6() {
  const auto f = testutil::membership_fit(5);
  const auto model = DiagnosticModel::from_external(f);
  const auto o = testutil::dense_gls(f.X, Eigen::MatrixXd(f.Z), f.G_hat.dense(), f.R_hat.dense(), f.y);
  const double nu_err = testutil::max_rel_diff(model.nu_basis(), o.nu_basis);
  const auto r = run_bias_diagnostic(model, {}, plan_of(20000, 42));
  double obs_err = 0.0;
  for (Index j = 0; j < model.p(); ++j) {
    const double oracle = o.nu_basis.row(j).dot(f.eta_hat);
    obs_err = std::max(obs_err, std::abs(r.entries[static_cast<std::size_t>(j)].observed - oracle) /
                                    std::max(1e-3, std::abs(oracle)));
  }

  const auto& blocks = f.permutation_blocks;
  std::vector<int> block_of(static_cast<std::size_t>(f.m()), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (Index j : blocks[b]) block_of[static_cast<std::size_t>(j)] = static_cast<int>(b);
  bool contained = true;
  std::vector<int> moved(blocks.size(), 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto perm = draw_permutation(blocks, f.m(), 42, 0, i);
    for (Index j = 0; j < f.m(); ++j) {
      const auto from = static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]);
      contained = contained && block_of[from] == block_of[static_cast<std::size_t>(j)];
      if (perm[static_cast<std::size_t>(j)] != j) ++moved[static_cast<std::size_t>(block_of[static_cast<std::size_t>(j)])];
    }
  }
  const bool mixed = std::all_of(moved.begin(), moved.end(), [](int c) { return c > 0; });
  const bool ok = nu_err <= 1e-8 && obs_err <= 1e-8 && blocks.size() == 2 && contained && mixed;
  return {ok, "n = " + std::to_string(f.n()) + ", m = " + std::to_string(f.m()) + ", nu rel err " + fmt(nu_err, 3) +
                  ", statistic rel err " + fmt(obs_err, 3) + ", 1e4 draws " +
                  (contained ? "stay within blocks" : "cross blocks")};
}

// ---------------------------------------------------------------------------

Outcome property_a() {
  std::mt19937_64 rng(8);
  std::vector<std::string> units;
  const Index n_units = 10, t = 4;
  Eigen::MatrixXd x(n_units * t, 2);
  for (Index g = 0; g < n_units; ++g) {
    Eigen::VectorXd w = testutil::random_vector(rng, t);
    w.array() -= w.mean();
    for (Index s = 0; s < t; ++s) {
      units.push_back("u" + std::to_string(g));
      x(g * t + s, 0) = static_cast<double>(s) - 1.5;
      x(g * t + s, 1) = w(s);
    }
  }
  const Eigen::VectorXd y = testutil::random_vector(rng, n_units * t);
  const auto b = testutil::design_from_csv(testutil::panel_csv(units, y, x), {"x1", "x2"}, false);
  const double xz = (b.X.transpose() * Eigen::MatrixXd(b.Z)).cwiseAbs().maxCoeff();
  const auto model = DiagnosticModel::from_fit(fit_re(b, fixed_variance(0.7, 1.0)), b);
  double worst = 0.0;
  for (const auto& k : {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(2.5, -1)})
    worst = std::max(worst, compute_nu_hat(model, make_kvector(model, k, "k")).cwiseAbs().maxCoeff());
  return {xz <= 1e-12 && worst <= 1e-10, "max |X'Z| " + fmt(xz, 3) + ", max |nu| " + fmt(worst, 3)};
}

Outcome property_b() {
  const auto b = testutil::gasoline_design();
  const auto re = fit_re(b, fixed_variance(0.0, 1.7));
  const Eigen::VectorXd ols = (b.X.transpose() * b.X).ldlt().solve(b.X.transpose() * b.y);
  const double beta_err = testutil::max_rel_diff(re.beta, ols);
  const double eta_max = re.eta_hat ? re.eta_hat->cwiseAbs().maxCoeff() : 1.0;
  return {beta_err <= 1e-10 && eta_max == 0.0, "beta rel err vs OLS " + fmt(beta_err, 3) + ", max |eta| " + fmt(eta_max, 3)};
}

Outcome property_c() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<Index> n_dist(20, 200), m_dist(2, 20);
  std::uniform_real_distribution<double> pos(0.1, 3.0), w(0.2, 1.0);
  double worst = 0.0;
  int woodbury = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index n = n_dist(rng), m = std::min<Index>(m_dist(rng), n / 2);
    std::uniform_int_distribution<Index> pick(0, m - 1);
    std::vector<Triplet> t;
    for (Index r = 0; r < n; ++r) {
      const Index a = pick(rng);
      t.emplace_back(r, a, rep % 2 ? w(rng) : 1.0);
      if (rep % 2 && r % 3 == 0) t.emplace_back(r, (a + 1) % m, w(rng));
    }
    SparseMatrix z(n, m);
    z.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd g(m);
    for (Index j = 0; j < m; ++j) g(j) = pos(rng);
    std::vector<CovarianceBlock> blocks;
    for (Index start = 0; start < n; start += 2) {
      const Index k = std::min<Index>(2, n - start);
      const Eigen::MatrixXd a = testutil::random_matrix(rng, k, k);
      CovarianceBlock cb;
      for (Index i = 0; i < k; ++i) cb.indices.push_back(start + i);
      cb.cov = a * a.transpose() + static_cast<double>(k) * Eigen::MatrixXd::Identity(k, k);
      blocks.push_back(std::move(cb));
    }
    const auto r = rep % 3 == 0 ? BlockDiagonal::identity(n, pos(rng)) : BlockDiagonal::from_blocks(n, blocks);
    VSolver solver(z, BlockDiagonal::diagonal(g), r);
    woodbury += solver.uses_woodbury();
    const Eigen::MatrixXd zd(z);
    const Eigen::MatrixXd v = zd * g.asDiagonal() * zd.transpose() + r.dense();
    const Eigen::MatrixXd rhs = testutil::random_matrix(rng, n, 3);
    worst = std::max(worst, testutil::max_rel_diff(solver.solve(rhs), v.llt().solve(rhs)));
  }
  return {worst <= 1e-8 && woodbury == 100,
          std::to_string(woodbury) + "/100 Woodbury solves, worst rel err " + fmt(worst, 3)};
}

Outcome property_d() {
  std::mt19937_64 rng(11);
  bool ok = true;
  std::string detail;
  const std::uint64_t draws = 20000;
  for (Index m = 4; m <= 6; ++m) {
    const Eigen::VectorXd nu = testutil::random_vector(rng, m), eta = testutil::random_vector(rng, m);
    auto plan = plan_of(draws, 7);
    plan.mode = PermutationMode::MonteCarlo;
    const auto mc = permutation_pvalue(nu, eta, plan);
    plan.mode = PermutationMode::Exhaustive;
    const auto ex = permutation_pvalue(nu, eta, plan);
    const double se = std::sqrt(ex.p_value * (1.0 - ex.p_value) / static_cast<double>(draws));
    const bool within = std::abs(mc.p_value - ex.p_value) <= 3.0 * std::max(se, 1.0 / static_cast<double>(draws));
    ok = ok && within && ex.exhaustive && !mc.exhaustive;
    detail += (m > 4 ? "; " : "") + ("m=" + std::to_string(m) + " exact " + fmt(ex.p_value, 4) + " MC " + fmt(mc.p_value, 4));
  }
  return {ok, detail};
}

double null_ks_pvalue(Index column, double* mean_p = nullptr) {
  std::vector<double> p;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto b = sim_design(20000 + rep, 50, 5, 0.0);
    const auto model = DiagnosticModel::from_fit(fit_re(b, estimate_reml(b)), b);
    const auto k = make_kvector(model, Eigen::VectorXd::Unit(3, column), "k");
    p.push_back(run_bias_diagnostic(model, {k}, plan_of(2000, rep)).entries[0].p_value);
  }
  if (mean_p) *mean_p = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  return testutil::ks_pvalue(testutil::ks_uniform_statistic(p), p.size());
}

Outcome property_e() {
  double mean1 = 0.0, mean2 = 0.0;
  const double ks1 = null_ks_pvalue(1, &mean1);
  const double ks2 = null_ks_pvalue(2, &mean2);
  return {ks1 > 0.01, "x1 KS p = " + fmt(ks1, 3) + " (mean p " + fmt(mean1, 3) + "); x2 KS p = " + fmt(ks2, 3) +
                          " (mean p " + fmt(mean2, 3) + ", information only)"};
}

Outcome property_f() {
  std::vector<double> rel;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto b = sim_design(1000 + rep, 200, 10, 0.3);
    const double h = hausman_test(fit_fe_within(b), fit_re(b, estimate_swamy_arora(b))).statistic;
    const double w = cre_mundlak_test(b, VarianceMethod::SwamyArora).wald;
    rel.push_back(std::abs(h - w) / h);
  }
  std::sort(rel.begin(), rel.end());
  const double median = 0.5 * (rel[9] + rel[10]);
  return {median < 0.15, "median |H - W|/H = " + fmt(median, 3) + " (N=200, T=10, delta=0.3, 20 reps)"};
}

Outcome property_g() {
  const auto g = gasoline_model();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  std::vector<std::string> reports;
  for (unsigned t : {1u, 2u, 8u}) reports.push_back(report::dump(report::to_json(run_bias_diagnostic(model, {}, plan_of(100000, 42, t)))));
  const bool same = reports[0] == reports[1] && reports[0] == reports[2];
  return {same, std::string("reports at 1, 2, 8 threads ") + (same ? "identical" : "differ") + " (" +
                    std::to_string(reports[0].size()) + " bytes)"};
}

struct Check {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

const std::vector<Check>& checks() {
  static const std::vector<Check> all = {
      {"1", "Gasoline FE slopes and LSDV intercept", criterion_1},
      {"2", "Gasoline RE, Swamy-Arora and REML", criterion_2},
      {"2reml", "Gasoline RE, REML backend", criterion_2_reml},
      {"3", "Hausman on Gasoline", criterion_3},
      {"4", "Gasoline bias estimates", criterion_4},
      {"5", "Gasoline bias p-values", criterion_5},
      {"6", "Multiple-membership diagnostic vs dense oracle", criterion_6},
      {"7a", "X'R^-1 Z = 0 gives zero nu", property_a},
      {"7b", "zero random-effect variance gives OLS", property_b},
      {"7c", "Woodbury vs dense solve", property_c},
      {"7d", "exhaustive vs Monte Carlo p-values", property_d},
      {"7e", "null p-value uniformity", property_e},
      {"7f", "Hausman vs CRE agreement", property_f},
      {"7g", "thread-count determinism", property_g},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty()) wanted = {"1", "2", "3", "4", "5", "6", "7"};
  std::vector<const Check*> selected;
  for (const auto& w : wanted) {
    bool found = false;
    for (const auto& c : checks())
      if (c.id == w || (w == "7" && c.id.size() == 2 && c.id[0] == '7')) {
        selected.push_back(&c);
        found = true;
      }
    if (!found) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  }
  int failures = 0;
  for (const Check* c : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c->run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-5s %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c->id.c_str(), c->title.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
