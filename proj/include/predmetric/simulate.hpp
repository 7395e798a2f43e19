#pragma once

// Finite-N Monte Carlo estimates of expected KL risk with a paired design:
// every prior's predictive density is evaluated on the same simulated x^N.

#include "predmetric/predictive.hpp"
#include "predmetric/risk_asym.hpp"

#include <cstdint>

namespace predmetric {

enum class KlScheme { Exact, Quadrature, MonteCarlo };

std::string_view to_string(KlScheme k) noexcept;

struct SimPlan {
  ModelPair pair;
  Point theta;
  std::size_t n = 100;
  std::vector<PriorSpec> priors;
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
  // Index of the prior differences are taken against; -1 means the last one.
  int baseline = -1;
  KlScheme kl = KlScheme::Exact;
  std::size_t kl_mc_draws = 4096;
  int y_nodes = 64;
  GridOptions grid = [] {
    GridOptions g;
    g.refine = false;
    return g;
  }();
  int threads = 1;
};

struct PriorRisk {
  std::string name;
  double mean = 0.0;
  double se = 0.0;
  // Paired difference to the baseline prior.
  double diff = 0.0;
  double diff_se = 0.0;
  double unpaired_diff_se = 0.0;
  double scaled_diff = 0.0;  // N^2 diff
  double scaled_diff_se = 0.0;
  // risk_diff_thm2(prior) - risk_diff_thm2(baseline).
  double asymptote = 0.0;
};

struct RiskReport {
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::string baseline;
  std::vector<PriorRisk> priors;
  // (1/2N) sum g~_ij g^ij.
  double leading_term = 0.0;
  // per_replicate[r * priors + p]: KL of prior p in replicate r.
  std::vector<double> per_replicate;
  double wall_seconds = 0.0;
};

// Substream seed for replicate `index` (SplitMix64 of the master seed and index).
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) noexcept;

// D(p~(.|θ), p^) for one predictive density.
double kl_divergence(const ModelPair& pair, const Point& theta, const PredictiveDensity& predictive,
                     KlScheme scheme = KlScheme::Exact, int y_nodes = 64, std::size_t mc_draws = 4096,
                     std::uint64_t seed = 0);

RiskReport mc_risk(const SimPlan& plan);

struct ConvergenceRow {
  std::size_t n = 0;
  std::string prior;
  double scaled_diff = 0.0;
  double scaled_diff_se = 0.0;
  double asymptote = 0.0;
  double n_times_baseline_risk = 0.0;
  double n_times_baseline_risk_se = 0.0;
  double leading = 0.0;  // 1/2 sum g~_ij g^ij
};

// One mc_risk per N in `ns` (plan.n is ignored).
std::vector<ConvergenceRow> asymptote_convergence(const SimPlan& plan, const std::vector<std::size_t>& ns);

}  // namespace predmetric
