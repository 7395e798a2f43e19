#include "predmetric/cli.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace predmetric::cli {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(ErrorKind::Config, what); }

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_error(where + " must be a JSON object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : j.items())
    if (!keys.count(item.key())) config_error("unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw std::runtime_error("expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw std::runtime_error("expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (it->is_number_integer() && !it->is_number_unsigned()) throw std::runtime_error("expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::runtime_error("expected a string");
    }
    out = it->get<T>();
  } catch (const std::exception& e) {
    config_error(where + "." + key + ": " + e.what());
  }
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) config_error(what + " must be finite");
}

ModelConfig model_from_json(const json& j) {
  reject_unknown(j, "model",
                 {"family", "sigma", "sigma_tilde", "phi", "phi_tilde", "nu", "nu_tilde", "quadrature_nodes", "s"});
  ModelConfig m;
  read(j, "family", "model", m.family);
  read(j, "sigma", "model", m.sigma);
  read(j, "sigma_tilde", "model", m.sigma_tilde);
  read(j, "phi", "model", m.phi);
  read(j, "phi_tilde", "model", m.phi_tilde);
  read(j, "nu", "model", m.nu);
  read(j, "nu_tilde", "model", m.nu_tilde);
  read(j, "quadrature_nodes", "model", m.quadrature_nodes);
  read(j, "s", "model", m.s);
  if (m.family != "normal" && m.family != "location_scale" && m.family != "poisson")
    config_error("model.family must be normal, location_scale or poisson, got '" + m.family + "'");
  return m;
}

json model_to_json(const ModelConfig& m) {
  return {{"family", m.family}, {"sigma", m.sigma}, {"sigma_tilde", m.sigma_tilde}, {"phi", m.phi},
          {"phi_tilde", m.phi_tilde}, {"nu", m.nu}, {"nu_tilde", m.nu_tilde},
          {"quadrature_nodes", m.quadrature_nodes}, {"s", m.s}};
}

PriorConfig prior_from_json(const json& j) {
  reject_unknown(j, "priors[]", {"name", "c", "kappa", "power", "bump_seed", "bumps", "bump_eps"});
  PriorConfig p;
  read(j, "name", "priors[]", p.name);
  read(j, "c", "priors[]", p.c);
  read(j, "kappa", "priors[]", p.kappa);
  read(j, "power", "priors[]", p.power);
  read(j, "bump_seed", "priors[]", p.bump_seed);
  read(j, "bumps", "priors[]", p.bumps);
  read(j, "bump_eps", "priors[]", p.bump_eps);
  static const std::set<std::string> names{"pi_P", "pi_J", "pi_R", "pi_C", "pi_ckappa", "pi_S", "bump"};
  if (!names.count(p.name)) config_error("unknown prior '" + p.name + "'");
  return p;
}

json prior_to_json(const PriorConfig& p) {
  return {{"name", p.name}, {"c", p.c}, {"kappa", p.kappa}, {"power", p.power}, {"bump_seed", p.bump_seed},
          {"bumps", p.bumps}, {"bump_eps", p.bump_eps}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(std::string("malformed JSON: ") + e.what());
  }
  reject_unknown(j, "config",
                 {"seed", "model", "chart", "priors", "probes", "theta", "sim", "figure1", "output_dir", "threads",
                  "fixture_metric_perturbation"});
  ExperimentConfig c;
  if (!j.contains("seed")) config_error("config must set a master seed");
  read(j, "seed", "config", c.seed);
  if (j.contains("model")) c.model = model_from_json(j["model"]);
  read(j, "chart", "config", c.chart);
  if (j.contains("priors")) {
    if (!j["priors"].is_array()) config_error("priors must be an array");
    for (const json& p : j["priors"]) c.priors.push_back(prior_from_json(p));
  }
  if (j.contains("probes")) {
    const json& p = j["probes"];
    reject_unknown(p, "probes", {"lo", "hi", "count", "points"});
    read(p, "lo", "probes", c.probes.lo);
    read(p, "hi", "probes", c.probes.hi);
    read(p, "count", "probes", c.probes.count);
    read(p, "points", "probes", c.probes.points);
    if (c.probes.count < 0) config_error("probes.count must be >= 0");
  }
  read(j, "theta", "config", c.theta);
  if (j.contains("sim")) {
    const json& s = j["sim"];
    reject_unknown(s, "sim", {"n", "n_list", "replicates", "kl", "kl_mc_draws", "y_nodes", "baseline"});
    read(s, "n", "sim", c.sim.n);
    read(s, "n_list", "sim", c.sim.n_list);
    read(s, "replicates", "sim", c.sim.replicates);
    read(s, "kl", "sim", c.sim.kl);
    read(s, "kl_mc_draws", "sim", c.sim.kl_mc_draws);
    read(s, "y_nodes", "sim", c.sim.y_nodes);
    read(s, "baseline", "sim", c.sim.baseline);
    parse_kl_scheme(c.sim.kl);
    if (c.sim.n < 1) config_error("sim.n must be >= 1");
    if (c.sim.replicates < 2) config_error("sim.replicates must be >= 2");
  }
  if (j.contains("figure1")) {
    const json& f = j["figure1"];
    reject_unknown(f, "figure1", {"curvature", "kappa", "rho_max", "rho_points"});
    read(f, "curvature", "figure1", c.figure1.curvature);
    read(f, "kappa", "figure1", c.figure1.kappa);
    read(f, "rho_max", "figure1", c.figure1.rho_max);
    read(f, "rho_points", "figure1", c.figure1.rho_points);
  }
  read(j, "output_dir", "config", c.output_dir);
  read(j, "threads", "config", c.threads);
  read(j, "fixture_metric_perturbation", "config", c.fixture_metric_perturbation);
  if (c.threads < 1) config_error("threads must be >= 1");
  check_finite(c.fixture_metric_perturbation, "fixture_metric_perturbation");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  json priors = json::array();
  for (const PriorConfig& p : c.priors) priors.push_back(prior_to_json(p));
  json j = {{"seed", c.seed},
            {"model", model_to_json(c.model)},
            {"chart", c.chart},
            {"priors", priors},
            {"probes", {{"lo", c.probes.lo}, {"hi", c.probes.hi}, {"count", c.probes.count}, {"points", c.probes.points}}},
            {"theta", c.theta},
            {"sim",
             {{"n", c.sim.n},
              {"n_list", c.sim.n_list},
              {"replicates", c.sim.replicates},
              {"kl", c.sim.kl},
              {"kl_mc_draws", c.sim.kl_mc_draws},
              {"y_nodes", c.sim.y_nodes},
              {"baseline", c.sim.baseline}}},
            {"figure1",
             {{"curvature", c.figure1.curvature},
              {"kappa", c.figure1.kappa},
              {"rho_max", c.figure1.rho_max},
              {"rho_points", c.figure1.rho_points}}},
            {"output_dir", c.output_dir},
            {"threads", c.threads},
            {"fixture_metric_perturbation", c.fixture_metric_perturbation}};
  return j.dump(2);
}

KlScheme parse_kl_scheme(const std::string& name) {
  if (name == "exact") return KlScheme::Exact;
  if (name == "quadrature") return KlScheme::Quadrature;
  if (name == "monte-carlo") return KlScheme::MonteCarlo;
  config_error("sim.kl must be exact, quadrature or monte-carlo, got '" + name + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows, const std::string& what) {
  const std::size_t n = rows.size();
  if (n == 0) config_error(what + " must be a non-empty square matrix");
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) config_error(what + " must be square");
    for (std::size_t k = 0; k < n; ++k) {
      check_finite(rows[i][k], what);
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return m;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

ModelPair build_pair(const ModelConfig& m, double perturbation) {
  ModelPair pair = [&] {
    if (m.family == "normal") {
      const Matrix s = to_matrix(m.sigma, "model.sigma");
      const Matrix st = to_matrix(m.sigma_tilde, "model.sigma_tilde");
      if (s.rows() != st.rows()) config_error("model.sigma and model.sigma_tilde differ in dimension");
      return builtin_normal({s, st});
    }
    if (m.family == "location_scale") {
      if (m.quadrature_nodes < 8) config_error("model.quadrature_nodes must be >= 8");
      return builtin_location_scale(
          {make_base_density(m.phi, m.nu), make_base_density(m.phi_tilde, m.nu_tilde), m.quadrature_nodes});
    }
    if (m.family == "poisson") {
      if (m.s.empty()) config_error("model.s must be non-empty");
      for (double v : m.s)
        if (!(v > 0.0) || !std::isfinite(v)) config_error("model.s entries must be positive");
      return builtin_poisson({to_vector(m.s)});
    }
    config_error("unknown model family '" + m.family + "'");
  }();
  if (perturbation != 0.0) pair = pair.with_x_tensors(perturb_metric(pair.x_tensors_ptr(), perturbation));
  return pair;
}

Point default_theta(const ModelPair& pair) {
  switch (pair.family()) {
    case Family::LocationScale: return Eigen::Vector2d(0.0, 1.0);
    case Family::Poisson: return Vector::Ones(pair.dim());
    default: return Vector::Zero(pair.dim());
  }
}

void probe_box(const ModelPair& pair, const ProbeConfig& probes, Vector& lo, Vector& hi) {
  const int d = pair.dim();
  if (!probes.lo.empty() || !probes.hi.empty()) {
    if (static_cast<int>(probes.lo.size()) != d || static_cast<int>(probes.hi.size()) != d)
      config_error("probes.lo and probes.hi must have one entry per parameter");
    lo = to_vector(probes.lo);
    hi = to_vector(probes.hi);
    for (int i = 0; i < d; ++i)
      if (!(lo[i] < hi[i])) config_error("probes.lo must be below probes.hi");
    return;
  }
  switch (pair.family()) {
    case Family::LocationScale:
      lo = Eigen::Vector2d(-2.0, 0.5);
      hi = Eigen::Vector2d(2.0, 2.0);
      break;
    case Family::Poisson:
      lo = Vector::Constant(d, 0.2);
      hi = Vector::Constant(d, 5.0);
      break;
    default:
      lo = Vector::Constant(d, -2.0);
      hi = Vector::Constant(d, 2.0);
  }
}

std::vector<Point> build_probes(const ModelPair& pair, const ProbeConfig& probes) {
  Vector lo, hi;
  probe_box(pair, probes, lo, hi);
  std::vector<Point> pts;
  for (const auto& p : probes.points) {
    if (static_cast<int>(p.size()) != pair.dim()) config_error("probe point has the wrong dimension");
    Point q = to_vector(p);
    if (!pair.chart().admits(q)) config_error("probe point outside the parameter domain");
    pts.push_back(q);
  }
  return make_probes(pair.chart(), lo, hi, probes.count, pts);
}

PriorSpec build_prior(const ModelPair& pair, const PriorConfig& p, const Vector& lo, const Vector& hi) {
  PriorSpec prior = [&] {
    if (p.name == "pi_P") return volume_element_prior(pair);
    if (p.name == "pi_J") return jeffreys_prior(pair);
    if (p.name == "pi_R") return prior_right_invariant(pair);
    if (p.name == "pi_C") return prior_cauchy(pair);
    if (p.name == "pi_ckappa") return prior_ckappa(pair, {p.c, p.kappa});
    if (p.name == "pi_S") return prior_stein_poisson(pair);
    if (p.name == "bump") {
      BumpPriorOptions o;
      o.bumps = p.bumps;
      o.eps = p.bump_eps;
      return random_bump_prior(pair, lo, hi, p.bump_seed, o);
    }
    config_error("unknown prior '" + p.name + "'");
  }();
  if (p.power != 1.0) prior = power_prior(prior, p.power);
  return prior;
}

std::vector<PriorConfig> effective_priors(const ModelPair& pair, const ExperimentConfig& config) {
  std::vector<PriorConfig> list = config.priors;
  if (list.empty()) {
    switch (pair.family()) {
      case Family::LocationScale:
        list = {{"pi_R"}, {"pi_C"}, {"pi_ckappa", 0.0, 1.0}, {"pi_ckappa", 1.0, 1.0}};
        break;
      case Family::Poisson:
        if (pair.dim() >= 3) list = {{"pi_S"}};
        break;
      default: break;
    }
  }
  bool has_p = false;
  for (const PriorConfig& p : list) has_p = has_p || (p.name == "pi_P" && p.power == 1.0);
  if (!has_p) list.push_back(PriorConfig{});
  return list;
}

std::vector<PriorSpec> build_priors(const ModelPair& pair, const ExperimentConfig& config) {
  Vector lo, hi;
  probe_box(pair, config.probes, lo, hi);
  std::vector<PriorSpec> out;
  for (const PriorConfig& p : effective_priors(pair, config)) out.push_back(build_prior(pair, p, lo, hi));
  return out;
}

std::size_t baseline_index(const std::vector<PriorSpec>& priors, int configured) {
  if (configured >= 0) {
    if (static_cast<std::size_t>(configured) >= priors.size()) config_error("sim.baseline out of range");
    return static_cast<std::size_t>(configured);
  }
  for (std::size_t i = 0; i < priors.size(); ++i)
    if (priors[i].kind() == PriorKind::VolumeElement) return i;
  return priors.size() - 1;
}

}  // namespace predmetric::cli
