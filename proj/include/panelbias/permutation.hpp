#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

#include "panelbias/block_diagonal.hpp"
#include "panelbias/errors.hpp"

namespace panelbias {

// ---------------------------------------------------------------------------
// Counter-based random streams
//
// Every permutation draw is a pure function of (seed, stream, index), so the
// reference distribution does not depend on how draws are split over threads.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
      : state_(splitmix64(splitmix64(seed ^ splitmix64(stream ^ 0xD1B54A32D192ED03ULL)) ^ splitmix64(index))) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound), unbiased (Lemire's multiply-shift).
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

enum class PermutationMode { Auto, MonteCarlo, Exhaustive };

/// Largest number of distinct within-block permutations enumerated exactly
/// in Auto mode (8!).
inline constexpr std::uint64_t kExhaustiveLimit = 40320;

struct PermutationPlan {
  std::vector<std::vector<Index>> blocks;  // empty: use the model's default
  std::uint64_t n_permutations = 1'000'000;
  std::uint64_t seed = 42;
  unsigned threads = 1;  // 0: hardware concurrency
  PermutationMode mode = PermutationMode::Auto;
};

inline void validate_plan(const PermutationPlan& plan, Index m) {
  if (plan.n_permutations == 0) fail(ErrorKind::Parameter, "number of permutations must be at least 1");
  std::vector<int> hits(static_cast<std::size_t>(m), 0);
  for (const auto& b : plan.blocks)
    for (Index j : b) {
      if (j < 0 || j >= m)
        fail(ErrorKind::Consistency, "permutation block index " + std::to_string(j + 1) + " outside 1.." + std::to_string(m));
      ++hits[static_cast<std::size_t>(j)];
    }
  for (Index j = 0; j < m; ++j)
    if (hits[static_cast<std::size_t>(j)] != 1)
      fail(ErrorKind::Consistency, "permutation blocks must partition the random effects; index " + std::to_string(j + 1) +
                                       " appears " + std::to_string(hits[static_cast<std::size_t>(j)]) + " times");
}

/// Product of block-size factorials, saturating just above `cap`.
inline std::uint64_t count_block_permutations(const std::vector<std::vector<Index>>& blocks,
                                              std::uint64_t cap = kExhaustiveLimit) {
  std::uint64_t total = 1;
  for (const auto& b : blocks)
    for (std::uint64_t k = 2; k <= b.size(); ++k) {
      total *= k;
      if (total > cap) return cap + 1;
    }
  return total;
}

/// Permutation number `index` of stream `stream`: out[i] is the random effect
/// whose prediction lands at position i. Indices only move within a block.
inline std::vector<Index> draw_permutation(const std::vector<std::vector<Index>>& blocks, Index m, std::uint64_t seed,
                                           std::uint64_t stream, std::uint64_t index) {
  std::vector<Index> out(static_cast<std::size_t>(m));
  std::iota(out.begin(), out.end(), Index{0});
  CounterRng rng(seed, stream, index);
  std::vector<Index> shuffled;
  for (const auto& block : blocks) {
    shuffled = block;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    for (std::size_t t = 0; t < block.size(); ++t) out[static_cast<std::size_t>(block[t])] = shuffled[t];
  }
  return out;
}

/// sum_i nu_i * eta_{perm_i}, accumulated left to right.
inline double permuted_dot(const Eigen::VectorXd& nu, const Eigen::VectorXd& eta, const std::vector<Index>& perm) {
  double s = 0.0;
  for (Index i = 0; i < nu.size(); ++i) s += nu(i) * eta(perm[static_cast<std::size_t>(i)]);
  return s;
}

/// Statistics for every distinct within-block permutation (identity included).
inline std::vector<double> enumerate_statistics(const Eigen::VectorXd& nu, const Eigen::VectorXd& eta,
                                                const std::vector<std::vector<Index>>& blocks) {
  std::vector<std::vector<std::vector<Index>>> per_block;
  for (const auto& b : blocks) {
    std::vector<Index> cur = b;
    std::sort(cur.begin(), cur.end());
    std::vector<std::vector<Index>> all;
    do all.push_back(cur);
    while (std::next_permutation(cur.begin(), cur.end()));
    per_block.push_back(std::move(all));
  }
  std::vector<std::size_t> odo(blocks.size(), 0);
  std::vector<Index> perm(static_cast<std::size_t>(nu.size()));
  std::vector<double> stats;
  for (;;) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      std::vector<Index> sorted = blocks[b];
      std::sort(sorted.begin(), sorted.end());
      const auto& arrangement = per_block[b][odo[b]];
      for (std::size_t t = 0; t < sorted.size(); ++t) perm[static_cast<std::size_t>(sorted[t])] = arrangement[t];
    }
    stats.push_back(permuted_dot(nu, eta, perm));
    std::size_t b = 0;
    while (b < odo.size() && ++odo[b] == per_block[b].size()) odo[b++] = 0;
    if (b == odo.size()) break;
  }
  return stats;
}

/// Monte Carlo statistics; draw b always uses stream index b.
inline std::vector<double> sample_statistics(const Eigen::VectorXd& nu, const Eigen::VectorXd& eta,
                                             const std::vector<std::vector<Index>>& blocks, std::uint64_t n_draws,
                                             std::uint64_t seed, std::uint64_t stream, unsigned threads) {
  std::vector<double> stats(n_draws);
  const Index m = nu.size();
  auto work = [&](std::uint64_t begin, std::uint64_t end) {
    for (std::uint64_t b = begin; b < end; ++b) stats[b] = permuted_dot(nu, eta, draw_permutation(blocks, m, seed, stream, b));
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_draws));
  if (threads <= 1) {
    work(0, n_draws);
    return stats;
  }
  std::vector<std::thread> pool;
  const std::uint64_t chunk = (n_draws + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::uint64_t begin = t * chunk, end = std::min(n_draws, begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
  return stats;
}

// ---------------------------------------------------------------------------
// Summaries of the reference distribution
// ---------------------------------------------------------------------------

struct DistributionSummary {
  double min = 0, q01 = 0, q25 = 0, q50 = 0, q75 = 0, q99 = 0, max = 0;
};

/// Linear-interpolation quantile of sorted data (R's type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline DistributionSummary summarize_sorted(const std::vector<double>& sorted) {
  return {sorted.front(),
          sorted_quantile(sorted, 0.01),
          sorted_quantile(sorted, 0.25),
          sorted_quantile(sorted, 0.50),
          sorted_quantile(sorted, 0.75),
          sorted_quantile(sorted, 0.99),
          sorted.back()};
}

inline constexpr int kHistogramBins = 81;

struct Histogram {
  std::vector<double> edges;  // bins + 1 values
  std::vector<std::uint64_t> counts;
};

/// Equal-width bins spanning [min, max] of the data.
inline Histogram make_histogram(const std::vector<double>& sorted, int bins = kHistogramBins) {
  Histogram h;
  double lo = sorted.front(), hi = sorted.back();
  if (!(hi > lo)) {
    const double pad = 0.5 * std::max(1e-12, std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  const double width = (hi - lo) / bins;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + width * i;
  h.edges.back() = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double s : sorted) {
    auto bin = static_cast<long>(std::floor((s - lo) / width));
    bin = std::clamp(bin, 0L, static_cast<long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

}  // namespace panelbias
