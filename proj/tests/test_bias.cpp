#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "test_util.hpp"

using namespace panelbias;
using testutil::kind_of;

namespace {

VarianceEstimate fixed_variance(double s2eta, double s2eps) {
  VarianceEstimate v;
  v.sigma2_eta["all"] = s2eta;
  v.sigma2_eps = s2eps;
  return v;
}

PermutationPlan plan_of(std::uint64_t n, std::uint64_t seed = 42, unsigned threads = 1) {
  PermutationPlan p;
  p.n_permutations = n;
  p.seed = seed;
  p.threads = threads;
  return p;
}

/// Exact p-value over all m! permutations of a single block.
double enumerated_pvalue(const Eigen::VectorXd& nu, const Eigen::VectorXd& eta) {
  std::vector<Index> perm(static_cast<std::size_t>(eta.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double obs = 0.0;
  for (Index i = 0; i < nu.size(); ++i) obs += nu(i) * eta(i);
  obs = std::abs(obs);
  std::uint64_t hit = 0, total = 0;
  do {
    double s = 0.0;
    for (Index i = 0; i < nu.size(); ++i) s += nu(i) * eta(perm[static_cast<std::size_t>(i)]);
    hit += std::abs(s) >= obs;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hit) / static_cast<double>(total);
}

DiagnosticModel simulated_model(std::uint64_t seed, Index n_units, Index n_periods, double delta) {
  SimulationConfig cfg;
  cfg.n_units = n_units;
  cfg.n_periods = n_periods;
  cfg.delta = delta;
  cfg.seed = seed;
  const auto b = build_design(simulate_panel(cfg).data, simulated_model_spec());
  return DiagnosticModel::from_fit(fit_re(b, estimate_reml(b)), b);
}

struct GasolineRun {
  DesignBundle b;
  FitResult re;
  FitResult lsdv;
};

const GasolineRun& gasoline() {
  static const GasolineRun run = [] {
    const auto b = testutil::gasoline_design();
    return GasolineRun{b, fit_re(b, estimate_reml(b)), fit_fe_lsdv(b)};
  }();
  return run;
}

}  // namespace

TEST(BiasEstimate, ZeroWhenXOrthogonalToZ) {
  // Balanced one-way layout; both columns sum to zero within every unit, so
  // X'R^-1 Z = 0 with R = I.
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
  ASSERT_LE((b.X.transpose() * Eigen::MatrixXd(b.Z)).cwiseAbs().maxCoeff(), 1e-12);
  const auto model = DiagnosticModel::from_fit(fit_re(b, fixed_variance(0.7, 1.0)), b);
  for (const auto& k : {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(2.5, -1)})
    EXPECT_LE(compute_nu_hat(model, make_kvector(model, k, "k")).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BiasEstimate, GasolineReferenceValues) {
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const double reference[] = {-0.17, -0.04, -0.04, 0.01};
  for (Index j = 0; j < 4; ++j) {
    const auto nu = compute_nu_hat(model, make_kvector(model, Eigen::VectorXd::Unit(4, j), "k"));
    const double est = bias_estimate(nu, *g.re.eta_hat);
    EXPECT_NEAR(est, reference[j], 0.01) << g.b.x_labels[static_cast<std::size_t>(j)];
    // Tracks the RE - FE difference.
    EXPECT_LE(std::abs(est - (g.re.beta(j) - g.lsdv.beta(j))), 0.04) << g.b.x_labels[static_cast<std::size_t>(j)];
  }
}

TEST(BiasEstimate, NuIsBiasOfGlsTowardEta) {
  // For any eta, W eta with W = nu basis equals beta(y + Z eta) - beta(y).
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  std::mt19937_64 rng(4);
  const Eigen::VectorXd eta = testutil::random_vector(rng, g.b.m());
  DesignBundle shifted = g.b;
  shifted.y += g.b.Z * eta;
  const auto re2 = fit_re(shifted, *g.re.variance);
  EXPECT_LE((model.nu_basis() * eta - (re2.beta - g.re.beta)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(BiasEstimate, HandInstanceMatchesDenseOracle) {
  // 12 x 3 with two multiple-membership rows and a 2x2 R block.
  std::mt19937_64 rng(3);
  ExternalFit f;
  f.X = testutil::random_matrix(rng, 12, 3);
  f.X.col(0).setOnes();
  std::vector<Triplet> t;
  for (Index r = 0; r < 12; ++r) t.emplace_back(r, r % 4, 1.0);
  t.emplace_back(4, 1, 0.5);
  t.emplace_back(8, 3, 0.5);
  f.Z.resize(12, 4);
  f.Z.setFromTriplets(t.begin(), t.end());
  f.y = testutil::random_vector(rng, 12);
  Eigen::Vector4d g(0.5, 0.2, 0.9, 0.4);
  f.G_hat = BlockDiagonal::diagonal(g);
  Eigen::Matrix2d rb;
  rb << 1.0, 0.3, 0.3, 2.0;
  std::vector<CovarianceBlock> blocks = {{{2, 5}, rb}};
  for (Index r : {0, 1, 3, 4, 6, 7, 8, 9, 10, 11}) blocks.push_back({{r}, Eigen::MatrixXd::Constant(1, 1, 1.5)});
  f.R_hat = BlockDiagonal::from_blocks(12, blocks);
  const auto o = testutil::dense_gls(f.X, Eigen::MatrixXd(f.Z), g.asDiagonal().toDenseMatrix(), f.R_hat.dense(), f.y);
  f.beta_hat = o.beta;
  f.eta_hat = o.eta;
  validate_external_fit(f);

  const auto model = DiagnosticModel::from_external(f);
  EXPECT_LE((model.nu_basis() - o.nu_basis).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::Vector3d k(0.0, 1.0, -1.0);
  const auto nu = compute_nu_hat(model, make_kvector(model, k, "contrast"));
  EXPECT_LE((nu - o.nu_basis.transpose() * k).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(bias_estimate(nu, f.eta_hat), k.dot(o.nu_basis * o.eta), 1e-10);
}

TEST(BiasEstimate, ZeroEtaAndZeroObserved) {
  const Eigen::VectorXd nu = Eigen::VectorXd::LinSpaced(6, -1.0, 2.0);
  EXPECT_EQ(bias_estimate(nu, Eigen::VectorXd::Zero(6)), 0.0);
  EXPECT_EQ(kind_of([&] { bias_estimate(nu, Eigen::VectorXd::Zero(5)); }), ErrorKind::Consistency);

  // nu orthogonal to eta: observed 0, every permuted |s| >= 0.
  Eigen::VectorXd eta(6), nu0(6);
  eta << 1, 2, 3, 4, 5, 6;
  nu0 << 1, -1, 1, -1, 1, -0.5;  // 1 - 2 + 3 - 4 + 5 - 3 = 0
  ASSERT_EQ(bias_estimate(nu0, eta), 0.0);
  const auto e = permutation_pvalue(nu0, eta, plan_of(5000));
  EXPECT_EQ(e.p_value, 1.0);
  EXPECT_EQ(e.n_extreme, e.n_permutations);
}

TEST(Permutation, ExhaustiveMatchesEnumerationOracle) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd nu = testutil::random_vector(rng, 4), eta = testutil::random_vector(rng, 4);
    const auto e = permutation_pvalue(nu, eta, plan_of(1000));
    EXPECT_TRUE(e.exhaustive);
    EXPECT_EQ(e.n_permutations, 24u);
    EXPECT_EQ(e.p_value, enumerated_pvalue(nu, eta));
  }
}

TEST(Permutation, MonteCarloAgreesWithExhaustive) {
  std::mt19937_64 rng(11);
  for (Index m = 4; m <= 6; ++m) {
    const Eigen::VectorXd nu = testutil::random_vector(rng, m), eta = testutil::random_vector(rng, m);
    auto plan = plan_of(20000, 7);
    plan.mode = PermutationMode::MonteCarlo;
    const auto mc = permutation_pvalue(nu, eta, plan);
    plan.mode = PermutationMode::Exhaustive;
    const auto ex = permutation_pvalue(nu, eta, plan);
    EXPECT_FALSE(mc.exhaustive);
    EXPECT_TRUE(ex.exhaustive);
    const double se = std::sqrt(ex.p_value * (1.0 - ex.p_value) / 20000.0);
    EXPECT_LE(std::abs(mc.p_value - ex.p_value), 3.0 * std::max(se, 1.0 / 20000.0)) << "m = " << m;
  }
}

TEST(Permutation, ExhaustiveRespectsBlocks) {
  // Blocks {0,1,2} and {3,4}: 3! * 2! = 12 arrangements.
  Eigen::VectorXd nu(5), eta(5);
  nu << 1.0, -2.0, 0.5, 3.0, -1.0;
  eta << 0.3, -0.1, 0.7, 1.2, -0.4;
  auto plan = plan_of(100);
  plan.blocks = {{0, 1, 2}, {3, 4}};
  const auto e = permutation_pvalue(nu, eta, plan);
  ASSERT_TRUE(e.exhaustive);
  ASSERT_EQ(e.n_permutations, 12u);
  std::vector<int> a = {0, 1, 2};
  std::uint64_t hit = 0;
  do {
    for (int swap = 0; swap < 2; ++swap) {
      const double s = nu(0) * eta(a[0]) + nu(1) * eta(a[1]) + nu(2) * eta(a[2]) + nu(3) * eta(swap ? 4 : 3) +
                       nu(4) * eta(swap ? 3 : 4);
      hit += std::abs(s) >= std::abs(e.observed);
    }
  } while (std::next_permutation(a.begin(), a.end()));
  EXPECT_EQ(e.n_extreme, hit);
}

TEST(Permutation, ExhaustiveModeRefusesLargeSpaces) {
  auto plan = plan_of(10);
  plan.mode = PermutationMode::Exhaustive;
  EXPECT_EQ(kind_of([&] { permutation_pvalue(Eigen::VectorXd::Ones(9), Eigen::VectorXd::Ones(9), plan); }),
            ErrorKind::Parameter);
  // Auto mode samples above 8!.
  const auto e = permutation_pvalue(Eigen::VectorXd::LinSpaced(9, 0, 1), Eigen::VectorXd::LinSpaced(9, 1, 2), plan_of(10));
  EXPECT_FALSE(e.exhaustive);
  EXPECT_EQ(e.n_permutations, 10u);
}

TEST(Permutation, ZeroPermutationsRejected) {
  EXPECT_EQ(kind_of([] { permutation_pvalue(Eigen::VectorXd::Ones(9), Eigen::VectorXd::Ones(9), plan_of(0)); }),
            ErrorKind::Parameter);
}

TEST(Permutation, BlocksMustPartition) {
  auto plan = plan_of(10);
  plan.blocks = {{0, 1}, {1, 2}};
  EXPECT_EQ(kind_of([&] { permutation_pvalue(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3), plan); }),
            ErrorKind::Consistency);
}

TEST(Permutation, DrawsAreUniform) {
  // All 6 arrangements of 3 items appear with frequency near 1/6.
  std::map<std::vector<Index>, int> freq;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++freq[draw_permutation({{0, 1, 2}}, 3, 42, 0, static_cast<std::uint64_t>(i))];
  ASSERT_EQ(freq.size(), 6u);
  double chi2 = 0.0;
  for (const auto& [perm, count] : freq) chi2 += std::pow(count - draws / 6.0, 2) / (draws / 6.0);
  EXPECT_GT(chi2_upper_tail(chi2, 5), 0.001) << chi2;
}

TEST(Permutation, StreamsDiffer) {
  const std::vector<std::vector<Index>> blocks = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
  int same = 0;
  for (std::uint64_t i = 0; i < 200; ++i) same += draw_permutation(blocks, 10, 42, 0, i) == draw_permutation(blocks, 10, 42, 1, i);
  EXPECT_LT(same, 3);
  EXPECT_EQ(draw_permutation(blocks, 10, 42, 3, 17), draw_permutation(blocks, 10, 42, 3, 17));
}

TEST(Permutation, LemireDrawIsInRange) {
  CounterRng rng(1, 2, 3);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int c : seen) EXPECT_GT(c, 850);
}

TEST(Diagnostic, InestimableContrastRejected) {
  std::mt19937_64 rng(2);
  ExternalFit f;
  f.X = testutil::random_matrix(rng, 12, 3);
  f.X.col(2) = f.X.col(1);  // identical columns
  std::vector<Triplet> t;
  for (Index r = 0; r < 12; ++r) t.emplace_back(r, r % 3, 1.0);
  f.Z.resize(12, 3);
  f.Z.setFromTriplets(t.begin(), t.end());
  f.y = testutil::random_vector(rng, 12);
  f.G_hat = BlockDiagonal::identity(3, 0.4);
  f.R_hat = BlockDiagonal::identity(12);
  f.beta_hat = Eigen::VectorXd::Zero(3);
  f.eta_hat = testutil::random_vector(rng, 3);
  validate_external_fit(f);
  const auto model = DiagnosticModel::from_external(f);
  const auto bad = make_kvector(model, Eigen::Vector3d(0, 1, -1), "x2-x3");
  const auto good = make_kvector(model, Eigen::Vector3d(0, 1, 1), "x2+x3");
  EXPECT_FALSE(bad.estimable);
  EXPECT_TRUE(good.estimable);
  EXPECT_EQ(kind_of([&] { compute_nu_hat(model, bad); }), ErrorKind::Estimability);
  const auto msg = testutil::message_of([&] { run_bias_diagnostic(model, {good, bad}, plan_of(100)); });
  EXPECT_NE(msg.find("x2-x3"), std::string::npos);
  EXPECT_EQ(msg.find("x2+x3"), std::string::npos);
  EXPECT_NO_THROW(run_bias_diagnostic(model, {good}, plan_of(100)));
}

TEST(Diagnostic, WrongLengthKIsUsageError) {
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const auto msg = testutil::message_of([&] { make_kvector(model, Eigen::Vector3d(1, 0, 0), "short"); });
  EXPECT_NE(msg.find("p = 4"), std::string::npos) << msg;
  EXPECT_EQ(kind_of([&] { make_kvector(model, Eigen::Vector3d(1, 0, 0), "short"); }), ErrorKind::Usage);
}

TEST(Diagnostic, RequiresRandomEffectsFit) {
  const auto& g = gasoline();
  EXPECT_EQ(kind_of([&] { DiagnosticModel::from_fit(g.lsdv, g.b); }), ErrorKind::Parameter);
}

TEST(Diagnostic, MembershipFitMatchesDenseOracle) {
  const auto f = testutil::membership_fit(5);
  const auto model = DiagnosticModel::from_external(f);
  const auto o = testutil::dense_gls(f.X, Eigen::MatrixXd(f.Z), f.G_hat.dense(), f.R_hat.dense(), f.y);
  EXPECT_LE(testutil::max_rel_diff(model.nu_basis(), o.nu_basis), 1e-8);
  ASSERT_EQ(model.default_blocks().size(), 2u);
  const auto result = run_bias_diagnostic(model, {}, plan_of(20000));
  ASSERT_EQ(result.entries.size(), 4u);
  for (Index j = 0; j < 4; ++j) {
    const double oracle = o.nu_basis.row(j).dot(f.eta_hat);
    EXPECT_NEAR(result.entries[static_cast<std::size_t>(j)].observed, oracle, 1e-8 * std::max(1e-3, std::abs(oracle)));
  }
}

TEST(Diagnostic, PermutationsStayWithinBlocks) {
  const auto f = testutil::membership_fit(6);
  const auto& blocks = f.permutation_blocks;
  ASSERT_EQ(blocks.size(), 2u);
  std::vector<int> block_of(static_cast<std::size_t>(f.m()), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (Index j : blocks[b]) block_of[static_cast<std::size_t>(j)] = static_cast<int>(b);
  std::vector<int> moved(blocks.size(), 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto perm = draw_permutation(blocks, f.m(), 42, 0, i);
    for (Index j = 0; j < f.m(); ++j) {
      ASSERT_EQ(block_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])], block_of[static_cast<std::size_t>(j)]);
      if (perm[static_cast<std::size_t>(j)] != j) ++moved[static_cast<std::size_t>(block_of[static_cast<std::size_t>(j)])];
    }
  }
  for (int m : moved) EXPECT_GT(m, 0);
}

TEST(Diagnostic, ContrastLinearity) {
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const auto bias = [&](const Eigen::VectorXd& k) {
    return bias_estimate(compute_nu_hat(model, make_kvector(model, k, "k")), model.eta_hat());
  };
  const Eigen::VectorXd k1 = Eigen::VectorXd::Unit(4, 1), k2 = Eigen::VectorXd::Unit(4, 3);
  EXPECT_NEAR(bias(k1 - k2), bias(k1) - bias(k2), 1e-10);
}

TEST(Diagnostic, ScalingKScalesStatisticsNotPValue) {
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const Eigen::VectorXd k = Eigen::VectorXd::Unit(4, 1);
  const auto base = run_bias_diagnostic(model, {make_kvector(model, k, "k")}, plan_of(20000)).entries[0];
  for (double c : {2.0, -0.5, 8.0}) {
    const auto e = run_bias_diagnostic(model, {make_kvector(model, c * k, "ck")}, plan_of(20000)).entries[0];
    EXPECT_EQ(e.p_value, base.p_value) << "c = " << c;
    EXPECT_EQ(e.observed, c * base.observed);
    const auto& q = e.quantiles;
    const auto& q0 = base.quantiles;
    if (c > 0) {
      EXPECT_EQ(q.min, c * q0.min);
      EXPECT_EQ(q.q50, c * q0.q50);
      EXPECT_EQ(q.max, c * q0.max);
    } else {
      EXPECT_EQ(q.min, c * q0.max);
      EXPECT_EQ(q.max, c * q0.min);
    }
  }
}

TEST(Diagnostic, GasolinePValues) {
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const auto r = run_bias_diagnostic(model, {}, plan_of(200000));
  ASSERT_EQ(r.entries.size(), 4u);
  EXPECT_NEAR(r.entries[0].p_value, 0.10, 0.02);
  EXPECT_NEAR(r.entries[1].p_value, 0.16, 0.02);
  EXPECT_LE(r.entries[2].p_value, 0.005);
  EXPECT_NEAR(r.entries[3].p_value, 0.20, 0.02);
  EXPECT_EQ(r.entries[2].label, "lrpmg");
  for (const auto& e : r.entries) {
    EXPECT_EQ(e.n_permutations, 200000u);
    EXPECT_EQ(e.p_value, static_cast<double>(e.n_extreme) / 200000.0);
  }
}

TEST(Diagnostic, ThreadCountDoesNotChangeResults) {
  const auto& g = gasoline();
  const auto model = DiagnosticModel::from_fit(g.re, g.b);
  const auto one = run_bias_diagnostic(model, {}, plan_of(30000, 99, 1));
  for (unsigned t : {2u, 8u}) {
    const auto many = run_bias_diagnostic(model, {}, plan_of(30000, 99, t));
    for (std::size_t i = 0; i < one.entries.size(); ++i) {
      EXPECT_EQ(many.entries[i].n_extreme, one.entries[i].n_extreme);
      EXPECT_EQ(many.entries[i].histogram.counts, one.entries[i].histogram.counts);
      EXPECT_EQ(many.entries[i].histogram.edges, one.entries[i].histogram.edges);
      EXPECT_EQ(many.entries[i].quantiles.q01, one.entries[i].quantiles.q01);
      EXPECT_EQ(many.entries[i].quantiles.q99, one.entries[i].quantiles.q99);
    }
  }
}

static std::vector<double> null_pvalues(Index column) {
  std::vector<double> p;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto model = simulated_model(20000 + rep, 50, 5, 0.0);
    const auto k = make_kvector(model, Eigen::VectorXd::Unit(3, column), "k");
    p.push_back(run_bias_diagnostic(model, {k}, plan_of(2000, rep)).entries[0].p_value);
  }
  return p;
}

TEST(Diagnostic, NullPValuesAreUniform) {
  // x2 has no unit-level component.
  const auto p = null_pvalues(2);
  const double d = testutil::ks_uniform_statistic(p);
  EXPECT_GT(testutil::ks_pvalue(d, p.size()), 0.01) << "KS D = " << d;
}

TEST(Diagnostic, NullPValuesConservativeForBetweenUnitRegressor) {
  // x1 varies between units. eta-hat is built from a GLS residual orthogonal
  // to V^-1 X, which shrinks the observed statistic relative to its
  // permutations: p-values lean toward 1 but the size stays below nominal.
  const auto p = null_pvalues(1);
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  const auto small = std::count_if(p.begin(), p.end(), [](double v) { return v < 0.05; });
  EXPECT_GT(mean, 0.5);
  EXPECT_LE(static_cast<double>(small) / static_cast<double>(p.size()), 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 200.0));
}

TEST(Diagnostic, PowerUnderDependence) {
  int rejections = 0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    const auto model = simulated_model(30000 + rep, 50, 5, 2.0);
    const auto k = make_kvector(model, Eigen::VectorXd::Unit(3, 1), "x1");
    rejections += run_bias_diagnostic(model, {k}, plan_of(2000, rep)).entries[0].p_value < 0.05;
  }
  EXPECT_GE(rejections, 40);
}

TEST(Summary, QuantilesFollowType7) {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.25), 3.25);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.5), 5.5);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.99), 9.91);
  const auto s = summarize_sorted(v);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.max, 10.0);
  EXPECT_DOUBLE_EQ(s.q01, 1.09);
}

TEST(Summary, HistogramBinsCoverRange) {
  std::vector<double> v;
  for (int i = 0; i <= 810; ++i) v.push_back(-1.0 + i / 405.0);
  const auto h = make_histogram(v);
  ASSERT_EQ(h.counts.size(), 81u);
  ASSERT_EQ(h.edges.size(), 82u);
  EXPECT_EQ(h.edges.front(), -1.0);
  EXPECT_EQ(h.edges.back(), 1.0);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}), 811u);
  for (std::size_t i = 0; i + 1 < h.counts.size(); ++i) EXPECT_NEAR(static_cast<double>(h.counts[i]), 10.0, 1.0);
  const auto flat = make_histogram(std::vector<double>(5, 2.0));
  EXPECT_EQ(std::accumulate(flat.counts.begin(), flat.counts.end(), std::uint64_t{0}), 5u);
  EXPECT_LT(flat.edges.front(), 2.0);
  EXPECT_GT(flat.edges.back(), 2.0);
}
