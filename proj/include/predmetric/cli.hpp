#pragma once

// Experiment configuration and the subcommands of the predmetric tool.
// A config is one JSON document; unknown keys are rejected and every field is
// written back on serialization, so parse(serialize(c)) == c.

#include "predmetric/models.hpp"
#include "predmetric/priors.hpp"
#include "predmetric/simulate.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace predmetric::cli {

struct ModelConfig {
  std::string family = "location_scale";  // normal | location_scale | poisson
  // normal
  std::vector<std::vector<double>> sigma{{1.0}};
  std::vector<std::vector<double>> sigma_tilde{{1.0}};
  // location_scale
  std::string phi = "normal";
  std::string phi_tilde = "normal";
  double nu = 0.0;
  double nu_tilde = 0.0;
  int quadrature_nodes = 128;
  // poisson
  std::vector<double> s{1.0};

  bool operator==(const ModelConfig&) const = default;
};

struct PriorConfig {
  std::string name = "pi_P";  // pi_P | pi_J | pi_R | pi_C | pi_ckappa | pi_S | bump
  double c = 0.0;
  double kappa = 1.0;
  double power = 1.0;  // ratio raised to this power when != 1
  std::uint64_t bump_seed = 0;
  int bumps = 3;
  double bump_eps = 0.5;

  bool operator==(const PriorConfig&) const = default;
};

struct ProbeConfig {
  // Empty lo/hi select a family default box.
  std::vector<double> lo;
  std::vector<double> hi;
  int count = 20;
  std::vector<std::vector<double>> points;

  bool operator==(const ProbeConfig&) const = default;
};

struct SimConfig {
  std::size_t n = 100;
  std::vector<std::size_t> n_list;  // non-empty: convergence table instead of one report
  std::size_t replicates = 10000;
  std::string kl = "exact";  // exact | quadrature | monte-carlo
  std::size_t kl_mc_draws = 4096;
  int y_nodes = 64;
  int baseline = -1;  // -1: the pi_P entry

  bool operator==(const SimConfig&) const = default;
};

struct Figure1Config {
  double curvature = 1.0;  // b~ / b^2
  double kappa = 1.0;
  double rho_max = 5.0;
  int rho_points = 101;

  bool operator==(const Figure1Config&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  std::string chart = "reference";
  std::vector<PriorConfig> priors;
  ProbeConfig probes;
  std::vector<double> theta;  // empty: family default
  SimConfig sim;
  Figure1Config figure1;
  std::string output_dir = ".";
  int threads = 1;
  // Test fixture: multiplies the x-model metric by (1 + eps), leaving the
  // connections alone. Zero disables it.
  double fixture_metric_perturbation = 0.0;

  bool operator==(const ExperimentConfig&) const = default;
};

// ErrorKind::Config on malformed JSON, unknown keys, wrong types or a missing seed.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

ModelPair build_pair(const ModelConfig& model, double metric_perturbation = 0.0);
PriorSpec build_prior(const ModelPair& pair, const PriorConfig& prior, const Vector& box_lo, const Vector& box_hi);
std::vector<PriorConfig> effective_priors(const ModelPair& pair, const ExperimentConfig& config);
// Configured priors in order (a family default list when none are given),
// with pi_P appended when absent.
std::vector<PriorSpec> build_priors(const ModelPair& pair, const ExperimentConfig& config);
// Configured index, or the first pi_P entry when negative.
std::size_t baseline_index(const std::vector<PriorSpec>& priors, int configured);
void probe_box(const ModelPair& pair, const ProbeConfig& probes, Vector& lo, Vector& hi);
std::vector<Point> build_probes(const ModelPair& pair, const ProbeConfig& probes);
Point default_theta(const ModelPair& pair);
KlScheme parse_kl_scheme(const std::string& name);

// Numbers with 17 significant digits.
std::string format_double(double v);

struct RunContext {
  std::ostream& out;  // JSON lines
  std::ostream& err;
  std::string out_dir;
  int threads = 1;
};

// Each returns the process exit status: 0 ok, 1 check failure.
// Errors propagate as predmetric::Error; exit_code_for maps them.
int cmd_geom(const ExperimentConfig& config, const RunContext& ctx);
int cmd_check(const std::optional<ExperimentConfig>& config, const RunContext& ctx);
int cmd_figure1(const Figure1Config& params, const RunContext& ctx);
int cmd_risk_asym(const ExperimentConfig& config, const RunContext& ctx);
int cmd_risk_mc(const ExperimentConfig& config, const RunContext& ctx);

// 2 for configuration problems, 3 for numerical failures.
int exit_code_for(const Error& e);

// Full tool entry point (argument parsing included).
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

std::string figure1_csv(const Figure1Config& params);

}  // namespace predmetric::cli
