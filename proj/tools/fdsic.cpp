// fdsic: run a self-interference cancellation experiment and write CSV/SVG/meta outputs.

#include <iostream>

#include "CLI11.hpp"
#include "fdsic/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace fdsic;
  CLI::App app{"Digital self-interference cancellation lab"};
  app.set_help_all_flag("--help-all");

  ExperimentConfig cfg;
  std::string experiment, config_path, grid, profile;
  double mu_frac = 0, mu = 0;
  bool full = false;
  app.add_option("experiment", experiment, "power-budget | bias | sinr-sweep | attenuation-sweep | convergence | bounds-probe");
  app.add_option("--config", config_path, "flat key = value file with the same keys as the options");
  app.add_option("--profile", profile, "transceiver profile file (default: built-in Type 2 values)");
  app.add_option("--trials", cfg.trials, "Monte Carlo trials");
  app.add_option("--mu-frac", mu_frac, "step size as a fraction of the canceller's mean-square bound");
  app.add_option("--mu", mu, "absolute step size (overrides --mu-frac)");
  app.add_option("--tx-grid", grid, "Tx powers in dBm, a:b:step or a,b,c");
  app.add_option("--source", cfg.source, "gaussian | ofdm");
  app.add_option("--seed", cfg.seed, "base seed; trial i uses seed + i");
  app.add_option("--out", cfg.output_dir, "output directory");
  app.add_option("--iterations", cfg.iterations, "iterations per run (0: experiment default)");
  app.add_option("--t-samples", cfg.t_samples, "regressors used to estimate the fourth-moment matrix");
  app.add_option("-M", cfg.M, "linear memory length");
  app.add_option("-N", cfg.N, "nonlinear memory length");
  app.add_option("--threads", cfg.threads, "worker threads (0: all cores)");
  app.add_flag("--check", cfg.check, "exit with status 3 if any acceptance check fails");
  app.add_flag("--full", full, "full-scale run with 200 trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (!config_path.empty()) apply_config_kv(cfg, load_kv_file(config_path));
    if (!experiment.empty()) cfg.experiment = experiment;
    if (!profile.empty()) cfg.profile_path = profile;
    if (!grid.empty()) cfg.tx_grid = parse_grid(grid);
    if (mu_frac > 0) cfg.mu_frac = mu_frac;
    if (mu > 0) cfg.mu_abs = mu;
    if (full) cfg.trials = 200;
    if (!cfg.profile_path.empty()) cfg.profile = load_profile(cfg.profile_path);
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const ExperimentReport rep = run_experiment(cfg);
    write_report(rep, cfg.output_dir);
    for (const auto& c : rep.checks)
      std::cout << (c.passed ? "PASS " : (c.required ? "FAIL " : "NOTE ")) << c.name << ": " << c.detail << '\n';
    std::cout << "outputs written to " << cfg.output_dir << '\n';
    if (cfg.check && !rep.all_required_passed()) return kExitCheck;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
