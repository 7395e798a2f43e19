#include "predmetric/cli.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace predmetric::cli {

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Predictive-metric priors: geometry, asymptotic and Monte Carlo risk"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory for CSV files");
  };
  CLI::App* geom = app.add_subcommand("geom", "metrics, connection traces and Laplacians at theta");
  CLI::App* check = app.add_subcommand("check", "run the invariant suite (builtin pairs without --config)");
  CLI::App* figure1 = app.add_subcommand("figure1", "asymptotic risk curves of the location-scale priors");
  CLI::App* risk_asym = app.add_subcommand("risk-asym", "asymptotic risk differences over the probe grid");
  CLI::App* risk_mc = app.add_subcommand("risk-mc", "Monte Carlo risk with paired replicates");
  common(geom, true);
  common(check, false);
  common(figure1, false);
  common(risk_asym, true);
  common(risk_mc, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    std::optional<ExperimentConfig> config;
    if (!config_path.empty()) {
      config = load_config(config_path);
      if (seed) config->seed = *seed;
      if (threads) config->threads = *threads;
      if (!out_dir.empty()) config->output_dir = out_dir;
    }
    RunContext ctx{out, err, config ? config->output_dir : out_dir, config ? config->threads : threads.value_or(1)};
    if (geom->parsed()) return cmd_geom(*config, ctx);
    if (check->parsed()) return cmd_check(config, ctx);
    if (figure1->parsed()) return cmd_figure1(config ? config->figure1 : Figure1Config{}, ctx);
    if (risk_asym->parsed()) return cmd_risk_asym(*config, ctx);
    if (risk_mc->parsed()) return cmd_risk_mc(*config, ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace predmetric::cli
