#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <ostream>
#include <vector>

#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"
#include "panelbias/permutation.hpp"

namespace panelbias {

/// Random-intercept panel y = b0 + b1*x1 + b2*x2 + eta_unit + eps.
///
/// x1 = (unit profile) + N(0,1) noise, where the N profiles are matched to
/// units by sorting on delta * eta / sd(eta) + N(0,1). With delta = 0 the
/// assignment is independent of the random effects; larger delta sends high
/// profiles to units with high eta. x2 is pure noise.
struct SimulationConfig {
  Index n_units = 50;
  Index n_periods = 5;
  double intercept = 1.0;
  double beta1 = 1.0;
  double beta2 = -0.5;
  double sigma2_eta = 1.0;
  double sigma2_eps = 1.0;
  double delta = 0.0;
  std::uint64_t seed = 1;
};

struct SimulatedPanel {
  SimulationConfig config;
  PanelDataset data;  // columns: unit, time, y, x1, x2
  Eigen::VectorXd eta;
};

/// Standard normals from a counter-based stream (Box-Muller), so a seed gives
/// the same panel on every platform.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream, 0) {}
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double uniform() { return static_cast<double>(rng_.next() >> 11) * 0x1.0p-53; }
  CounterRng rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline SimulatedPanel simulate_panel(const SimulationConfig& cfg) {
  if (cfg.n_units <= 0 || cfg.n_periods <= 0) fail(ErrorKind::Usage, "simulate: N and T must be positive");
  if (cfg.sigma2_eta < 0.0 || !(cfg.sigma2_eps > 0.0))
    fail(ErrorKind::Usage, "simulate: need sigma2_eta >= 0 and sigma2_eps > 0");
  const Index n_units = cfg.n_units, n_periods = cfg.n_periods;
  NormalStream normal(cfg.seed, 0);
  const double sd_eta = std::sqrt(cfg.sigma2_eta), sd_eps = std::sqrt(cfg.sigma2_eps);

  SimulatedPanel out;
  out.config = cfg;
  out.eta.resize(n_units);
  std::vector<double> key(static_cast<std::size_t>(n_units)), profile(static_cast<std::size_t>(n_units));
  for (Index i = 0; i < n_units; ++i) {
    const double z = normal.next();
    out.eta(i) = sd_eta * z;
    key[static_cast<std::size_t>(i)] = cfg.delta * z + normal.next();
  }
  for (auto& v : profile) v = normal.next();
  std::sort(profile.begin(), profile.end());
  std::vector<Index> by_key(static_cast<std::size_t>(n_units));
  std::iota(by_key.begin(), by_key.end(), Index{0});
  std::stable_sort(by_key.begin(), by_key.end(),
                   [&](Index a, Index b) { return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)]; });
  std::vector<double> unit_profile(static_cast<std::size_t>(n_units));
  for (std::size_t r = 0; r < by_key.size(); ++r) unit_profile[static_cast<std::size_t>(by_key[r])] = profile[r];

  PanelDataset& ds = out.data;
  ds.unit_name = "unit";
  ds.time_name = "time";
  ds.numeric_names = {"y", "x1", "x2"};
  ds.column_names = {"unit", "time", "y", "x1", "x2"};
  const Index n = n_units * n_periods;
  ds.numeric.assign(3, Eigen::VectorXd(n));
  std::unordered_map<std::string, Index> lu, lt;
  Index r = 0;
  for (Index i = 0; i < n_units; ++i)
    for (Index t = 0; t < n_periods; ++t, ++r) {
      ds.unit.add("u" + std::to_string(i + 1), lu);
      ds.time.add(std::to_string(t + 1), lt);
      const double x1 = unit_profile[static_cast<std::size_t>(i)] + normal.next();
      const double x2 = normal.next();
      const double y = cfg.intercept + cfg.beta1 * x1 + cfg.beta2 * x2 + out.eta(i) + sd_eps * normal.next();
      ds.numeric[0](r) = y;
      ds.numeric[1](r) = x1;
      ds.numeric[2](r) = x2;
    }
  return out;
}

inline ModelSpec simulated_model_spec() { return ModelSpec{"y", {"x1", "x2"}, true, "unit", {}}; }

inline void write_panel_csv(std::ostream& out, const PanelDataset& ds) {
  out << ds.unit_name << ',' << ds.time_name;
  for (const auto& name : ds.numeric_names) out << ',' << name;
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    out << ds.unit.label(r) << ',' << ds.time.label(r);
    for (const auto& col : ds.numeric) out << ',' << col(static_cast<Index>(r));
    out << '\n';
  }
}

}  // namespace panelbias
