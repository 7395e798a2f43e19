#include "predmetric/simulate.hpp"


#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

namespace predmetric {

std::string_view to_string(KlScheme k) noexcept {
  switch (k) {
    case KlScheme::Exact: return "exact";
    case KlScheme::Quadrature: return "quadrature";
    case KlScheme::MonteCarlo: return "monte-carlo";
  }
  return "unknown";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Nodes and weights for E over p~(y | θ), plus log p~ at each node.
struct TargetRule {
  ObservationRule rule;
  std::vector<double> log_true;
  double omitted_mass = 0.0;
  bool discrete = false;
};

// Drops the lightest lattice points while their combined mass stays below `budget`.
void prune_lattice(ObservationRule& rule, double budget) {
  std::vector<std::size_t> order(rule.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rule.weights[a] < rule.weights[b]; });
  double dropped = 0.0;
  std::size_t cut = 0;
  while (cut < order.size() && dropped + rule.weights[order[cut]] <= budget) dropped += rule.weights[order[cut++]];
  if (cut == 0) return;
  std::vector<char> keep(rule.size(), 1);
  for (std::size_t k = 0; k < cut; ++k) keep[order[k]] = 0;
  ObservationRule out;
  out.obs_dim = rule.obs_dim;
  for (std::size_t j = 0; j < rule.size(); ++j) {
    if (!keep[j]) continue;
    const auto node = rule.node(j);
    out.nodes.insert(out.nodes.end(), node.begin(), node.end());
    out.weights.push_back(rule.weights[j]);
  }
  rule = std::move(out);
}

TargetRule target_rule(const ModelPair& pair, const Point& theta, KlScheme scheme, int y_nodes, std::size_t mc_draws,
                       std::uint64_t seed) {
  TargetRule t;
  ExpectationScheme es;
  es.quadrature_nodes = y_nodes;
  es.series_tail_mass = 1e-13;
  es.mc_samples = mc_draws;
  es.mc_seed = seed;
  es.mode = scheme == KlScheme::MonteCarlo ? TensorMode::MonteCarlo : TensorMode::Quadrature;
  t.rule = pair.y_model().observation_rule(theta, es);
  t.discrete = pair.family() == Family::Poisson;
  if (t.discrete && scheme != KlScheme::MonteCarlo) prune_lattice(t.rule, 1e-14);
  double total = 0.0;
  t.log_true.resize(t.rule.size());
  for (std::size_t j = 0; j < t.rule.size(); ++j) {
    t.log_true[j] = pair.y_model().log_density(t.rule.node(j), theta);
    total += t.rule.weights[j];
  }
  if (t.discrete && scheme != KlScheme::MonteCarlo) t.omitted_mass = std::max(0.0, 1.0 - total);
  return t;
}

double gaussian_kl(const Vector& mean_p, const Matrix& cov_p, const Vector& mean_q, const Matrix& cov_q) {
  const MetricAt q = check_spd(cov_q);
  const MetricAt p = check_spd(cov_p);
  const Vector r = mean_q - mean_p;
  const double d = static_cast<double>(mean_p.size());
  return 0.5 * ((q.inverse * cov_p).trace() + r.dot(q.inverse * r) - d + std::log(q.det) - std::log(p.det));
}

double kl_from_rule(const TargetRule& t, const PredictiveDensity& predictive) {
  std::vector<double> log_pred(t.rule.size());
  predictive.log_density_batch(t.rule.nodes, log_pred);
  double kl = 0.0;
  for (std::size_t j = 0; j < t.rule.size(); ++j) kl += t.rule.weights[j] * (t.log_true[j] - log_pred[j]);
  if (!std::isfinite(kl)) fail(ErrorKind::Integration, "KL divergence is not finite");
  if (t.omitted_mass > 1e-8 * std::max(std::abs(kl), 1e-300))
    fail(ErrorKind::Truncation, "omitted target mass " + std::to_string(t.omitted_mass) + " is not negligible next to KL " +
                                    std::to_string(kl));
  return kl;
}

double gaussian_kl_if_possible(const ModelPair& pair, const Point& theta, const PredictiveDensity& predictive,
                               bool& done) {
  done = false;
  const NormalPairSpec* spec = pair.normal_spec();
  if (!spec || !predictive.gaussian()) return 0.0;
  done = true;
  return gaussian_kl(theta, spec->sigma_tilde, predictive.gaussian()->mean, predictive.gaussian()->cov);
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master) ^ index);
}

double kl_divergence(const ModelPair& pair, const Point& theta, const PredictiveDensity& predictive, KlScheme scheme,
                     int y_nodes, std::size_t mc_draws, std::uint64_t seed) {
  if (scheme == KlScheme::Exact) {
    bool done = false;
    const double kl = gaussian_kl_if_possible(pair, theta, predictive, done);
    if (done) return kl;
  }
  return kl_from_rule(target_rule(pair, theta, scheme, y_nodes, mc_draws, seed), predictive);
}

namespace {

struct ReplicateContext {
  const SimPlan& plan;
  const TargetRule& target;
  std::size_t baseline;
  std::optional<Vector> y_max;
};

PredictiveDensity closed_or_grid(const ReplicateContext& ctx, const PriorSpec& prior, const Dataset& data,
                                 std::optional<PosteriorGrid>& grid) {
  const ModelPair& pair = ctx.plan.pair;
  const std::size_t n = data.size();
  const int d = pair.dim();
  if (pair.family() == Family::Normal && prior.kind() == PriorKind::VolumeElement) {
    Vector xbar = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i) xbar += Eigen::Map<const Vector>(data.row(i).data(), d);
    return normal_predictive_uniform(*pair.normal_spec(), n, xbar / static_cast<double>(n));
  }
  if (pair.family() == Family::Poisson &&
      (prior.kind() == PriorKind::VolumeElement || prior.kind() == PriorKind::SteinPoisson)) {
    Vector totals = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i) totals += Eigen::Map<const Vector>(data.row(i).data(), d);
    if (prior.kind() == PriorKind::VolumeElement) return poisson_predictive_P(*pair.poisson_spec(), totals, n);
    return poisson_predictive_S(*pair.poisson_spec(), totals, n, ctx.y_max);
  }
  if (!grid) grid = PosteriorGrid::build(pair, data, ctx.plan.priors[ctx.baseline], ctx.plan.grid);
  return grid->predictive(prior);
}

void run_replicate(const ReplicateContext& ctx, std::size_t r, double* out) {
  const SimPlan& plan = ctx.plan;
  Rng rng(substream_seed(plan.seed, r));
  const Dataset data = plan.pair.x_model().sample_dataset(plan.theta, plan.n, rng);
  std::optional<PosteriorGrid> grid;
  for (std::size_t p = 0; p < plan.priors.size(); ++p) {
    const PredictiveDensity pred = closed_or_grid(ctx, plan.priors[p], data, grid);
    bool done = false;
    double kl = 0.0;
    if (plan.kl == KlScheme::Exact) kl = gaussian_kl_if_possible(plan.pair, plan.theta, pred, done);
    if (!done) kl = kl_from_rule(ctx.target, pred);
    out[p] = kl;
  }
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

RiskReport mc_risk(const SimPlan& plan) {
  const auto start = std::chrono::steady_clock::now();
  if (plan.replicates < 2) fail(ErrorKind::Spec, "a simulation plan needs at least two replicates");
  if (plan.n < 1) fail(ErrorKind::Spec, "a simulation plan needs N >= 1");
  if (plan.priors.empty()) fail(ErrorKind::Spec, "a simulation plan needs at least one prior");
  if (plan.threads < 1) fail(ErrorKind::Spec, "thread count must be positive");
  plan.pair.chart().require(plan.theta);
  const std::size_t np = plan.priors.size();
  const std::size_t baseline = plan.baseline < 0 ? np - 1 : static_cast<std::size_t>(plan.baseline);
  if (baseline >= np) fail(ErrorKind::Spec, "baseline prior index out of range");

  const TargetRule target = target_rule(plan.pair, plan.theta, plan.kl, plan.y_nodes, plan.kl_mc_draws,
                                        substream_seed(plan.seed, ~0ULL));
  std::optional<Vector> y_max;
  if (plan.pair.family() == Family::Poisson) {
    Vector m = Vector::Zero(plan.pair.dim());
    for (std::size_t j = 0; j < target.rule.size(); ++j)
      for (int i = 0; i < plan.pair.dim(); ++i) m[i] = std::max(m[i], target.rule.node(j)[static_cast<std::size_t>(i)]);
    y_max = m;
  }
  const ReplicateContext ctx{plan, target, baseline, y_max};

  std::vector<double> kl(plan.replicates * np, 0.0);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = plan.replicates;
  std::string error_message;
  ErrorKind error_kind = ErrorKind::Internal;
  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= plan.replicates) return;
      try {
        run_replicate(ctx, r, kl.data() + r * np);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (r < error_index) {
          error_index = r;
          error_kind = e.kind();
          error_message = e.what();
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (r < error_index) {
          error_index = r;
          error_kind = ErrorKind::Internal;
          error_message = e.what();
        }
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(plan.threads), plan.replicates));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error_index < plan.replicates)
    fail(error_kind, "replicate " + std::to_string(error_index) + ": " + error_message);

  RiskReport report;
  report.n = plan.n;
  report.replicates = plan.replicates;
  report.seed = plan.seed;
  report.baseline = plan.priors[baseline].name();
  report.leading_term = leading_risk_term(plan.pair, plan.theta, static_cast<double>(plan.n));
  const double n2 = static_cast<double>(plan.n) * static_cast<double>(plan.n);

  std::vector<double> base(plan.replicates);
  for (std::size_t r = 0; r < plan.replicates; ++r) base[r] = kl[r * np + baseline];
  const double base_mean = mean_of(base);
  const double base_se = se_of(base, base_mean);
  double base_asymptote = std::numeric_limits<double>::quiet_NaN();
  try {
    base_asymptote = risk_diff_thm2(plan.pair, plan.priors[baseline], plan.theta);
  } catch (const Error&) {
  }
  for (std::size_t p = 0; p < np; ++p) {
    PriorRisk pr;
    pr.name = plan.priors[p].name();
    std::vector<double> own(plan.replicates), diff(plan.replicates);
    for (std::size_t r = 0; r < plan.replicates; ++r) {
      own[r] = kl[r * np + p];
      diff[r] = own[r] - base[r];
    }
    pr.mean = mean_of(own);
    pr.se = se_of(own, pr.mean);
    pr.diff = mean_of(diff);
    pr.diff_se = se_of(diff, pr.diff);
    pr.unpaired_diff_se = std::sqrt(pr.se * pr.se + base_se * base_se);
    pr.scaled_diff = n2 * pr.diff;
    pr.scaled_diff_se = n2 * pr.diff_se;
    try {
      pr.asymptote = risk_diff_thm2(plan.pair, plan.priors[p], plan.theta) - base_asymptote;
    } catch (const Error&) {
      pr.asymptote = std::numeric_limits<double>::quiet_NaN();
    }
    report.priors.push_back(std::move(pr));
  }
  report.per_replicate = std::move(kl);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<ConvergenceRow> asymptote_convergence(const SimPlan& plan, const std::vector<std::size_t>& ns) {
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (ns[i] <= ns[i - 1]) fail(ErrorKind::Spec, "N list must be strictly increasing");
  std::vector<ConvergenceRow> rows;
  for (std::size_t n : ns) {
    SimPlan p = plan;
    p.n = n;
    const RiskReport report = mc_risk(p);
    const std::size_t baseline = plan.baseline < 0 ? plan.priors.size() - 1 : static_cast<std::size_t>(plan.baseline);
    const PriorRisk& base = report.priors[baseline];
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < report.priors.size(); ++i) {
      const PriorRisk& pr = report.priors[i];
      rows.push_back({n, pr.name, pr.scaled_diff, pr.scaled_diff_se, pr.asymptote, nn * base.mean, nn * base.se,
                      nn * report.leading_term});
    }
  }
  return rows;
}

}  // namespace predmetric
