#include "predmetric/cli.hpp"
#include "predmetric/predictive.hpp"
#include "predmetric/risk_asym.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace predmetric::cli {

using nlohmann::json;

namespace {

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

void emit(const RunContext& ctx, const json& line) { ctx.out << line.dump() << '\n'; }

// Writes `text` to out_dir/name, or to ctx.out when no directory is set.
std::string write_output(const RunContext& ctx, const std::string& name, const std::string& text) {
  if (ctx.out_dir.empty()) {
    ctx.out << text;
    return "-";
  }
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  const std::string path = (std::filesystem::path(ctx.out_dir) / name).string();
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Config, "cannot write '" + path + "'");
  f << text;
  return path;
}

Point theta_in_reference(const ModelPair& pair, const ExperimentConfig& config, const Chart& chart) {
  if (config.theta.empty()) return default_theta(pair);
  if (static_cast<int>(config.theta.size()) != pair.dim()) fail(ErrorKind::Config, "theta has the wrong dimension");
  const Point t = Eigen::Map<const Vector>(config.theta.data(), pair.dim());
  if (!chart.admits(t)) fail(ErrorKind::Config, "theta lies outside the domain of chart '" + chart.name() + "'");
  return transfer(t, chart, pair.chart());
}

bool same_models(const ModelConfig& m) {
  if (m.family == "normal") return m.sigma == m.sigma_tilde;
  if (m.family == "location_scale") return m.phi == m.phi_tilde && m.nu == m.nu_tilde;
  for (double v : m.s)
    if (v != 1.0) return false;
  return true;
}

std::optional<double> closed_form_risk(const ModelPair& pair, const PriorConfig& p, const Point& theta) {
  if (p.power != 1.0) return std::nullopt;
  if (p.name == "pi_P") return 0.0;
  if (const LocationScaleConstants* c = pair.location_scale()) {
    if (p.name == "pi_R" || p.name == "pi_C") return riskr_closed_form(*c);
    if (p.name == "pi_ckappa") return riskhs_closed_form(*c, {p.c, p.kappa}, theta);
  }
  if (p.name == "pi_S" && pair.poisson_spec()) return poisson_stein_risk(pair.poisson_spec()->s, theta);
  return std::nullopt;
}

double rel_gap(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

// max that lets a NaN error poison the result.
double worse(double worst, double e) { return std::isnan(e) ? std::numeric_limits<double>::infinity() : std::max(worst, e); }

// ---------------------------------------------------------------------------
// check

struct CheckResult {
  std::string name;
  bool pass = true;
  double max_error = 0.0;
  double tol = 0.0;
  std::string detail;
};

class CheckRunner {
 public:
  CheckRunner(const RunContext& ctx, std::string pair_label) : ctx_(ctx), label_(std::move(pair_label)) {}

  void run(const std::string& name, double tol, const std::function<double(std::string&)>& body) {
    CheckResult r{name, true, 0.0, tol, {}};
    try {
      r.max_error = body(r.detail);
      r.pass = r.max_error <= tol;
    } catch (const Error& e) {
      r.pass = false;
      r.max_error = std::numeric_limits<double>::infinity();
      r.detail = e.what();
    }
    json line = {{"check", r.name}, {"pair", label_}, {"pass", r.pass}, {"tol", r.tol}};
    line["max_error"] = std::isfinite(r.max_error) ? json(r.max_error) : json("inf");
    if (!r.detail.empty()) line["detail"] = r.detail;
    emit(ctx_, line);
    if (!r.pass) ++failures_;
  }

  int failures() const { return failures_; }

 private:
  const RunContext& ctx_;
  std::string label_;
  int failures_ = 0;
};

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

int check_one(const ExperimentConfig& config, const RunContext& ctx) {
  const ModelPair pair = build_pair(config.model, config.fixture_metric_perturbation);
  const std::vector<PriorConfig> prior_configs = effective_priors(pair, config);
  const std::vector<PriorSpec> priors = build_priors(pair, config);
  const std::vector<Point> probes = build_probes(pair, config.probes);
  const MetricField g = pair.data_metric();
  const MetricField gt = pair.target_metric();
  const MetricField gr = pair.predictive_metric();
  std::string label = config.model.family + "/d=" + std::to_string(pair.dim());
  if (config.model.family == "location_scale") label += "/" + config.model.phi + "," + config.model.phi_tilde;
  CheckRunner runner(ctx, label);

  runner.run("spd", 0.0, [&](std::string&) {
    for (const Point& p : probes) {
      check_spd(g(p));
      check_spd(gt(p));
      check_spd(gr(p));
    }
    return 0.0;
  });

  auto duality = [&](const TensorProvider& side, const MetricField& m) {
    return [&side, &m, &probes](std::string&) {
      double worst = 0.0;
      for (const Point& p : probes) {
        const std::vector<Matrix> fd = metric_derivatives(m, p);
        const std::vector<Matrix> dual = metric_derivatives_from_duality(t_tensor_and_connections(side, p));
        double scale = 1.0;
        for (const Matrix& d : fd) scale = std::max(scale, d.cwiseAbs().maxCoeff());
        for (std::size_t k = 0; k < fd.size(); ++k) worst = worse(worst, max_abs_diff(fd[k], dual[k]) / scale);
      }
      return worst;
    };
  };
  runner.run("duality_x", 1e-6, duality(pair.x_tensors(), g));
  runner.run("duality_y", 1e-6, duality(pair.y_tensors(), gt));

  runner.run("determinant_identity", 1e-10, [&](std::string&) {
    double worst = 0.0;
    for (const Point& p : probes) {
      const double dg = g(p).determinant(), dgt = gt(p).determinant();
      worst = worse(worst, rel_gap(gr(p).determinant(), dg * dg / dgt));
    }
    return worst;
  });

  runner.run("volume_gradient_identities", 1e-6, [&](std::string&) {
    double worst = 0.0;
    const PriorSpec pi_p = volume_element_prior(pair);
    for (const Point& p : probes) {
      const Vector lv = log_volume_gradient(gr, p);
      const Vector split = 2.0 * log_volume_gradient(g, p) - log_volume_gradient(gt, p);
      const Vector trace = connection_trace(raise_last(riemannian_connection(gr, p), check_spd(gr(p)).inverse));
      const Vector density = fd_gradient([&](const Point& q) { return pi_p.log_density(q); }, p, pair.chart());
      const double scale = 1.0 + lv.cwiseAbs().maxCoeff();
      worst = worse(worst, (lv - split).cwiseAbs().maxCoeff() / scale);
      worst = worse(worst, (lv - trace).cwiseAbs().maxCoeff() / scale);
      worst = worse(worst, (lv - density).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
  });

  runner.run("route_agreement", 1e-5, [&](std::string& detail) {
    double worst = 0.0;
    for (const PriorSpec& prior : priors)
      for (const Point& p : probes) {
        const double t2 = risk_diff_thm2(pair, prior, p);
        const double t1 = risk_diff_thm1(pair, prior, volume_element_prior(pair), p);
        const double e = rel_gap(t1, t2);
        if (!(e <= worst)) {
          worst = e;
          detail = "worst prior " + prior.name();
        }
      }
    return worst;
  });

  bool any_closed = false;
  for (const PriorConfig& pc : prior_configs) any_closed = any_closed || closed_form_risk(pair, pc, probes[0]).has_value();
  if (any_closed)
    runner.run("closed_form_risk", 1e-6, [&](std::string&) {
      double worst = 0.0;
      for (std::size_t i = 0; i < priors.size(); ++i)
        for (const Point& p : probes)
          if (auto cf = closed_form_risk(pair, prior_configs[i], p))
            worst = worse(worst, rel_gap(risk_diff_thm2(pair, priors[i], p), *cf));
      return worst;
    });

  if (pair.family() == Family::LocationScale || pair.family() == Family::Poisson) {
    runner.run("isometry", 1e-10, [&](std::string& detail) {
      const bool ls = pair.family() == Family::LocationScale;
      const Chart& target = pair.chart_named(ls ? "upper_half_plane" : "xi");
      detail = "chart " + target.name();
      const MetricField pushed = pushforward_metric(gr, pair.chart(), target);
      double worst = 0.0;
      for (const Point& p : probes) {
        const Point q = transfer(p, pair.chart(), target);
        const Matrix m = pushed(q);
        Matrix expect = Matrix::Identity(pair.dim(), pair.dim());
        if (ls) {
          const LocationScaleConstants& c = *pair.location_scale();
          expect *= c.b * c.b / c.b_tilde / (q[1] * q[1]);
        }
        worst = worse(worst, max_abs_diff(m, expect) / expect.cwiseAbs().maxCoeff());
      }
      return worst;
    });
  }

  // Predictive-density oracles on a few simulated datasets.
  Rng rng(substream_seed(config.seed, 0));
  const Point theta = theta_in_reference(pair, config, pair.chart_named(config.chart));
  if (pair.family() == Family::Normal && pair.dim() <= 2) {
    runner.run("oracle_normal_conjugate", 1e-6, [&](std::string&) {
      double worst = 0.0;
      const std::size_t n = 20;
      for (int rep = 0; rep < 3; ++rep) {
        const Dataset data = pair.x_model().sample_dataset(theta, n, rng);
        Vector xbar = Vector::Zero(pair.dim());
        for (std::size_t i = 0; i < n; ++i) xbar += Eigen::Map<const Vector>(data.row(i).data(), pair.dim());
        xbar /= static_cast<double>(n);
        const PredictiveDensity closed = normal_predictive_uniform(*pair.normal_spec(), n, xbar);
        std::vector<double> y(static_cast<std::size_t>(pair.dim()));
        pair.y_model().sample(theta, rng, y);
        worst = worse(worst, std::abs(quadrature_predictive(pair, volume_element_prior(pair), data, y) /
                                             closed.density(y) -
                                         1.0));
      }
      return worst;
    });
  }
  if (pair.family() == Family::Poisson && pair.dim() <= 2) {
    runner.run("oracle_poisson_piP", 1e-6, [&](std::string&) {
      double worst = 0.0;
      const std::size_t n = 20;
      for (int rep = 0; rep < 3; ++rep) {
        const Dataset data = pair.x_model().sample_dataset(theta, n, rng);
        Vector totals = Vector::Zero(pair.dim());
        for (std::size_t i = 0; i < n; ++i) totals += Eigen::Map<const Vector>(data.row(i).data(), pair.dim());
        const PredictiveDensity closed = poisson_predictive_P(*pair.poisson_spec(), totals, n);
        std::vector<double> y(static_cast<std::size_t>(pair.dim()));
        pair.y_model().sample(theta, rng, y);
        worst = worse(worst, std::abs(quadrature_predictive(pair, volume_element_prior(pair), data, y) /
                                             closed.density(y) -
                                         1.0));
      }
      return worst;
    });
  }
  if (pair.family() == Family::Poisson && pair.dim() >= 3) {
    runner.run("oracle_poisson_piS_routes", 1e-8, [&](std::string&) {
      double worst = 0.0;
      const Vector& s = pair.poisson_spec()->s;
      for (int rep = 0; rep < 3; ++rep) {
        const Dataset data = pair.x_model().sample_dataset(theta, 5, rng);
        Vector c = Vector::Constant(pair.dim(), 0.5);
        for (std::size_t i = 0; i < data.size(); ++i) c += Eigen::Map<const Vector>(data.row(i).data(), pair.dim());
        const Vector zero = Vector::Zero(pair.dim());
        const double a = poisson_stein_log_integral(s, zero, c, 5.0);
        const double b = poisson_stein_log_integral_kronrod(s, zero, c, 5.0);
        worst = worse(worst, std::abs(a - b));
      }
      return worst;
    });
  }

  for (const PriorSpec& prior : priors) {
    const PriorKind k = prior.kind();
    if (k != PriorKind::RightInvariant && k != PriorKind::Ckappa && k != PriorKind::Cauchy &&
        k != PriorKind::SteinPoisson)
      continue;
    runner.run("superharmonic:" + prior.name(), 0.0, [&](std::string& detail) {
      const SuperharmonicReport rep = superharmonic_check(prior.ratio(), gr, probes);
      detail = std::string(to_string(rep.verdict));
      return rep.verdict == SuperharmonicVerdict::Violated ? 1.0 : 0.0;
    });
  }

  if (same_models(config.model) && config.fixture_metric_perturbation == 0.0) {
    runner.run("conventional_jeffreys", 1e-10, [&](std::string&) {
      return ratio_coefficient_of_variation(volume_element_prior(pair), jeffreys_prior(pair), probes);
    });
    runner.run("conventional_reduction", 1e-8, [&](std::string&) {
      double worst = 0.0;
      for (const PriorSpec& prior : priors)
        for (const Point& p : probes)
          worst = worse(worst, rel_gap(conventional_risk_diff(pair, prior, p), risk_diff_thm2(pair, prior, p)));
      return worst;
    });
  }
  return runner.failures();
}

std::vector<ExperimentConfig> default_suite() {
  std::vector<ExperimentConfig> suite;
  auto add = [&](ModelConfig m, std::vector<PriorConfig> priors) {
    ExperimentConfig c;
    c.seed = 20240229;
    c.model = std::move(m);
    c.priors = std::move(priors);
    c.probes.count = 8;
    suite.push_back(std::move(c));
  };
  const PriorConfig bump{"bump", 0.0, 1.0, 1.0, 11};
  ModelConfig normal2;
  normal2.family = "normal";
  normal2.sigma = {{1.0, 0.3}, {0.3, 2.0}};
  normal2.sigma_tilde = {{2.0, -0.2}, {-0.2, 1.0}};
  add(normal2, {bump});
  ModelConfig normal1;
  normal1.family = "normal";
  add(normal1, {bump});
  ModelConfig ls;
  add(ls, {});
  ModelConfig ls2;
  ls2.phi = "logistic";
  ls2.phi_tilde = "student_t";
  ls2.nu_tilde = 5.0;
  add(ls2, {{"pi_R"}, {"pi_ckappa", 0.5, 2.0}, bump});
  ModelConfig po3;
  po3.family = "poisson";
  po3.s = {0.5, 1.0, 2.0};
  add(po3, {{"pi_S"}, bump});
  ModelConfig po4;
  po4.family = "poisson";
  po4.s = {1.0, 1.0, 1.0, 1.0};
  add(po4, {{"pi_S"}});
  ModelConfig po2;
  po2.family = "poisson";
  po2.s = {0.1, 0.2};
  add(po2, {});
  return suite;
}

}  // namespace

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::Spec:
    case ErrorKind::Range: return 2;
    default: return 3;
  }
}

int cmd_geom(const ExperimentConfig& config, const RunContext& ctx) {
  const ModelPair pair = build_pair(config.model, config.fixture_metric_perturbation);
  const Chart& chart = pair.chart_named(config.chart);
  const Point theta = theta_in_reference(pair, config, chart);
  const Point theta_chart = transfer(theta, pair.chart(), chart);

  const MetricField g = pushforward_metric(pair.data_metric(), pair.chart(), chart);
  const MetricField gt = pushforward_metric(pair.target_metric(), pair.chart(), chart);
  const MetricField gr = pushforward_metric(pair.predictive_metric(), pair.chart(), chart);
  const Matrix gr_at = gr(theta_chart);

  const TensorSet tx = t_tensor_and_connections(pair.x_tensors(), theta);
  const TensorSet ty = t_tensor_and_connections(pair.y_tensors(), theta);
  const Matrix gx_inv = check_spd(tx.metric).inverse;
  const Matrix gy_inv = check_spd(ty.metric).inverse;
  const MetricField gr_ref = pair.predictive_metric();
  json traces = {
      {"x_e", to_json(connection_trace(raise_last(tx.gamma_e, gx_inv)))},
      {"x_m", to_json(connection_trace(raise_last(tx.gamma_m, gx_inv)))},
      {"y_e", to_json(connection_trace(raise_last(ty.gamma_e, gy_inv)))},
      {"y_m", to_json(connection_trace(raise_last(ty.gamma_m, gy_inv)))},
      {"predictive_riemannian",
       to_json(connection_trace(raise_last(riemannian_connection(gr_ref, theta), check_spd(gr_ref(theta)).inverse)))}};

  json laplacians = json::array();
  for (const PriorSpec& prior : build_priors(pair, config))
    laplacians.push_back({{"prior", prior.name()}, {"laplacian_of_ratio", laplace_beltrami(gr_ref, prior.ratio(), theta)}});

  const PriorSpec pi_p = volume_element_prior(pair);
  emit(ctx, {{"command", "geom"},
             {"family", std::string(to_string(pair.family()))},
             {"chart", chart.name()},
             {"theta", to_json(theta_chart)},
             {"theta_reference", to_json(theta)},
             {"g", to_json(g(theta_chart))},
             {"g_tilde", to_json(gt(theta_chart))},
             {"g_predictive", to_json(gr_at)},
             {"sqrt_det_g_predictive", std::sqrt(check_spd(gr_at).det)},
             {"pi_P_density", std::exp(pi_p.log_density(theta))},
             {"connection_traces", traces},
             {"laplacians", laplacians}});
  return 0;
}

int cmd_check(const std::optional<ExperimentConfig>& config, const RunContext& ctx) {
  const std::vector<ExperimentConfig> suite = config ? std::vector<ExperimentConfig>{*config} : default_suite();
  int failures = 0;
  for (const ExperimentConfig& c : suite) failures += check_one(c, ctx);
  emit(ctx, {{"command", "check"}, {"configs", suite.size()}, {"failures", failures}});
  return failures == 0 ? 0 : 1;
}

std::string figure1_csv(const Figure1Config& p) {
  if (!(p.curvature > 0.0) || !std::isfinite(p.curvature)) fail(ErrorKind::Config, "figure1.curvature must be positive");
  if (!(p.kappa > 0.0)) fail(ErrorKind::Config, "figure1.kappa must be positive");
  if (!(p.rho_max >= 0.0) || !std::isfinite(p.rho_max)) fail(ErrorKind::Config, "figure1.rho_max must be >= 0");
  if (p.rho_points < 2) fail(ErrorKind::Config, "figure1.rho_points must be >= 2");
  std::ostringstream csv;
  csv << "rho,risk_piP,risk_piR,risk_piC,risk_c0_k1,risk_c1_k1\n";
  // Risk of pi_R and pi_C does not depend on rho; pi_{c,kappa} depends on it
  // only through the distance to (0, kappa).
  const double riskr = -0.5 * p.curvature;
  for (int i = 0; i < p.rho_points; ++i) {
    const double rho = p.rho_max * i / (p.rho_points - 1);
    const double ch = std::cosh(rho);
    csv << format_double(rho) << ',' << format_double(0.0) << ',' << format_double(riskr) << ','
        << format_double(riskr) << ',' << format_double(riskhs_closed_form(p.curvature, 0.0, ch)) << ','
        << format_double(riskhs_closed_form(p.curvature, 1.0, ch)) << '\n';
  }
  return csv.str();
}

int cmd_figure1(const Figure1Config& params, const RunContext& ctx) {
  const std::string csv = figure1_csv(params);
  const std::string path = write_output(ctx, "figure1.csv", csv);
  if (path != "-") emit(ctx, {{"command", "figure1"}, {"csv", path}, {"rows", params.rho_points}});
  return 0;
}

int cmd_risk_asym(const ExperimentConfig& config, const RunContext& ctx) {
  const ModelPair pair = build_pair(config.model, config.fixture_metric_perturbation);
  const std::vector<PriorConfig> prior_configs = effective_priors(pair, config);
  const std::vector<PriorSpec> priors = build_priors(pair, config);
  const std::vector<Point> probes = build_probes(pair, config.probes);
  const PriorSpec pi_p = volume_element_prior(pair);

  std::ostringstream csv;
  csv << "probe";
  for (int i = 0; i < pair.dim(); ++i) csv << ",theta_" << i + 1;
  csv << ",prior,risk_thm2,risk_thm1,closed_form\n";
  for (std::size_t k = 0; k < priors.size(); ++k) {
    double worst_gap = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t m = 0; m < probes.size(); ++m) {
      const Point& p = probes[m];
      const double t2 = risk_diff_thm2(pair, priors[k], p);
      const double t1 = risk_diff_thm1(pair, priors[k], pi_p, p);
      const auto cf = closed_form_risk(pair, prior_configs[k], p);
      worst_gap = std::max(worst_gap, std::abs(t1 - t2));
      lo = std::min(lo, t2);
      hi = std::max(hi, t2);
      csv << m;
      for (int i = 0; i < pair.dim(); ++i) csv << ',' << format_double(p[i]);
      csv << ',' << priors[k].name() << ',' << format_double(t2) << ',' << format_double(t1) << ','
          << (cf ? format_double(*cf) : std::string()) << '\n';
    }
    emit(ctx, {{"command", "risk-asym"},
               {"prior", priors[k].name()},
               {"probes", probes.size()},
               {"min", lo},
               {"max", hi},
               {"max_route_gap", worst_gap}});
  }
  const std::string path = write_output(ctx, "risk_asym.csv", csv.str());
  if (path != "-") emit(ctx, {{"command", "risk-asym"}, {"csv", path}});
  return 0;
}

int cmd_risk_mc(const ExperimentConfig& config, const RunContext& ctx) {
  const ModelPair pair = build_pair(config.model, config.fixture_metric_perturbation);
  SimPlan plan{.pair = pair,
               .theta = theta_in_reference(pair, config, pair.chart_named(config.chart)),
               .priors = build_priors(pair, config)};
  plan.n = config.sim.n;
  plan.replicates = config.sim.replicates;
  plan.seed = config.seed;
  plan.baseline = static_cast<int>(baseline_index(plan.priors, config.sim.baseline));
  plan.kl = parse_kl_scheme(config.sim.kl);
  plan.kl_mc_draws = config.sim.kl_mc_draws;
  plan.y_nodes = config.sim.y_nodes;
  plan.threads = ctx.threads;

  emit(ctx, {{"command", "risk-mc"},
             {"seed", config.seed},
             {"substreams", "replicate r draws from mt19937_64 seeded with splitmix64(splitmix64(seed) xor r)"},
             {"threads", ctx.threads},
             {"family", std::string(to_string(pair.family()))},
             {"theta", to_json(plan.theta)},
             {"replicates", plan.replicates},
             {"kl", std::string(to_string(plan.kl))},
             {"baseline", plan.priors[static_cast<std::size_t>(plan.baseline)].name()}});

  std::ostringstream csv;
  if (config.sim.n_list.empty()) {
    const RiskReport report = mc_risk(plan);
    csv << "prior,n,replicates,mean,se,diff,diff_se,unpaired_diff_se,scaled_diff,scaled_diff_se,asymptote\n";
    json priors = json::array();
    for (const PriorRisk& r : report.priors) {
      csv << r.name << ',' << report.n << ',' << report.replicates << ',' << format_double(r.mean) << ','
          << format_double(r.se) << ',' << format_double(r.diff) << ',' << format_double(r.diff_se) << ','
          << format_double(r.unpaired_diff_se) << ',' << format_double(r.scaled_diff) << ','
          << format_double(r.scaled_diff_se) << ',' << format_double(r.asymptote) << '\n';
      priors.push_back({{"prior", r.name},
                        {"mean", r.mean},
                        {"se", r.se},
                        {"diff", r.diff},
                        {"diff_se", r.diff_se},
                        {"scaled_diff", r.scaled_diff},
                        {"scaled_diff_se", r.scaled_diff_se},
                        {"asymptote", std::isfinite(r.asymptote) ? json(r.asymptote) : json(nullptr)}});
    }
    emit(ctx, {{"command", "risk-mc"},
               {"n", report.n},
               {"leading_term", report.leading_term},
               {"priors", priors},
               {"wall_seconds", report.wall_seconds}});
    const std::string path = write_output(ctx, "risk_mc.csv", csv.str());
    if (path != "-") emit(ctx, {{"command", "risk-mc"}, {"csv", path}});
    return 0;
  }
  std::vector<std::size_t> ns = config.sim.n_list;
  const auto rows = asymptote_convergence(plan, ns);
  csv << "n,prior,scaled_diff,scaled_diff_se,asymptote,n_baseline_risk,n_baseline_risk_se,leading\n";
  for (const ConvergenceRow& r : rows) {
    csv << r.n << ',' << r.prior << ',' << format_double(r.scaled_diff) << ',' << format_double(r.scaled_diff_se)
        << ',' << format_double(r.asymptote) << ',' << format_double(r.n_times_baseline_risk) << ','
        << format_double(r.n_times_baseline_risk_se) << ',' << format_double(r.leading) << '\n';
    emit(ctx, {{"command", "risk-mc"},
               {"n", r.n},
               {"prior", r.prior},
               {"scaled_diff", r.scaled_diff},
               {"scaled_diff_se", r.scaled_diff_se},
               {"asymptote", r.asymptote}});
  }
  const std::string path = write_output(ctx, "convergence.csv", csv.str());
  if (path != "-") emit(ctx, {{"command", "risk-mc"}, {"csv", path}});
  return 0;
}

}  // namespace predmetric::cli
