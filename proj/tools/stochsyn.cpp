// Command-line driver for the data-driven synthesis pipeline.

#include "stochsyn/config.hpp"
#include "stochsyn/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace stochsyn;

namespace {

struct CommonOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> grid;
  std::optional<double> alpha;
  std::optional<std::size_t> inputs;
  std::string delta_mode;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> mc_horizon;
  bool chain = false;
};

void add_common(CLI::App* app, CommonOptions& o, bool with_chain) {
  app->add_option("-c,--config", o.config, "TOML run config")->check(CLI::ExistingFile);
  app->add_option("-p,--preset", o.preset, "built-in case study: package_delivery | van_der_pol");
  app->add_option("-o,--out", o.out, "output directory (default from config, out/<preset>)");
  app->add_option("--seed", o.seed, "root seed (default 1)");
  app->add_option("--n", o.samples, "number of data samples N");
  app->add_option("--grid", o.grid, "cells per state dimension");
  app->add_option("--alpha", o.alpha, "credible-set confidence parameter in (0, 1) (default 0.1)");
  app->add_option("--inputs", o.inputs, "input levels per input dimension (default 5)");
  app->add_option("--delta-mode", o.delta_mode, "parametric delta: bound (default) | exact");
  app->add_option("--runs", o.runs, "Monte Carlo runs per initial state (default 500)");
  app->add_option("--mc-horizon", o.mc_horizon, "Monte Carlo horizon (default 60)");
  if (with_chain) app->add_flag("--chain", o.chain, "run missing predecessor stages first");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (!o.preset.empty()) {
    cfg = preset_config(o.preset);
  } else {
    throw ConfigError("need --config or --preset");
  }
  if (!o.config.empty() && !o.preset.empty() && cfg.preset != o.preset) {
    throw ConfigError("--preset '" + o.preset + "' conflicts with the config's preset '" + cfg.preset + "'");
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.samples) cfg.estimation.samples = *o.samples;
  if (o.grid) cfg.abstraction.grid.assign(cfg.system.state_dim, *o.grid);
  if (o.alpha) cfg.estimation.alpha = *o.alpha;
  if (o.inputs) cfg.abstraction.inputs_per_dim = *o.inputs;
  if (!o.delta_mode.empty()) {
    if (o.delta_mode != "bound" && o.delta_mode != "exact") {
      throw ConfigError("config field 'synthesis.delta_mode': expected bound or exact");
    }
    cfg.synthesis.delta_mode = o.delta_mode == "exact" ? DeltaMode::exact : DeltaMode::bound;
  }
  if (o.runs) cfg.simulate.runs = *o.runs;
  if (o.mc_horizon) cfg.simulate.horizon = *o.mc_horizon;
  validate(cfg);
  return cfg;
}

int verify(const std::vector<double>& gamma, const std::vector<double>& sigma, double step, double tol) {
  if (gamma.size() != sigma.size()) throw ConfigError("--gamma and --sigma need the same number of entries");
  const Vector g = Eigen::Map<const Vector>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
  const Vector s = Eigen::Map<const Vector>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  const CouplingVerification v = verify_coupling(g, s, step, tol);
  auto line = [](bool ok, const std::string& what) { std::printf("%s  %s\n", ok ? "PASS" : "FAIL", what.c_str()); };
  std::printf("grid points: %zu, truncated tail: %.3e\n", v.points, v.truncated_tail);
  std::printf("coupled mass: %.9f (closed form %.9f)\n", v.coupled_mass, v.expected_mass);
  line(v.mass_ok, "coupled mass matches 2 Phi(-|gamma|_Sigma / 2) within " + std::to_string(tol));
  line(v.def3_ok, "sub-coupling on the relation with dominated marginals");
  line(v.completion_ok, "completed coupling has exact marginals");
  if (v.dense_checked) line(v.dense_ok, "dense construction agrees");
  return v.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochsyn: controller synthesis for unknown stochastic systems from data"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 runtime failure, 2 config error.\n"
      "STOCHSYN_THREADS caps the worker count.");

  CommonOptions opts;
  struct StageCommand {
    const char* name;
    const char* help;
    Stage stage;
  };
  const StageCommand stage_commands[] = {
      {"generate-data", "sample a dataset from the true system", Stage::generate},
      {"estimate", "Bayesian regression posterior and credible set", Stage::estimate},
      {"abstract", "finite abstraction and (eps, delta) tables", Stage::abstract},
      {"synthesize", "robust value iteration, policy, certified bounds", Stage::synthesize},
      {"simulate", "closed-loop Monte Carlo validation", Stage::simulate},
  };
  std::vector<std::pair<CLI::App*, Stage>> stage_apps;
  for (const auto& sc : stage_commands) {
    CLI::App* sub = app.add_subcommand(sc.name, sc.help);
    add_common(sub, opts, true);
    stage_apps.emplace_back(sub, sc.stage);
  }
  CLI::App* run = app.add_subcommand("run", "all stages in order");
  add_common(run, opts, false);
  CLI::App* show = app.add_subcommand("show-config", "print the resolved config as TOML");
  add_common(show, opts, false);

  CLI::App* vc = app.add_subcommand("verify-coupling", "numeric checks of the Gaussian sub-coupling");
  std::vector<double> gamma{1.0};
  std::vector<double> sigma{1.0};
  double step = 1e-3;
  double tol = 1e-3;
  vc->add_option("--gamma", gamma, "mean offset (1 or 2 entries)")->delimiter(',');
  vc->add_option("--sigma", sigma, "noise standard deviation per dimension")->delimiter(',');
  vc->add_option("--step", step, "grid step");
  vc->add_option("--tol", tol, "tolerance on the coupled mass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (vc->parsed()) return verify(gamma, sigma, step, tol);
    const RunConfig cfg = resolve(opts);
    if (show->parsed()) {
      std::cout << config_to_toml(cfg);
      return 0;
    }
    if (run->parsed()) {
      run_pipeline(cfg);
      return 0;
    }
    for (const auto& [sub, stage] : stage_apps) {
      if (sub->parsed()) run_stage(cfg, stage, opts.chain);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
