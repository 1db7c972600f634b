#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "glarmix/cli_commands.hpp"
#include "glarmix/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mixed-effects observation-driven models for panels of count and binomial series"};
  app.require_subcommand(1);

  glarmix::ToolOptions opts;
  std::uint64_t seed_arg = 0;
  int q_arg = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    cmd->add_option("--config", opts.config_path, "model configuration (JSON)")->required();
    if (needs_data) cmd->add_option("--data", opts.data_path, "panel data (CSV)")->required();
    cmd->add_option("--out-dir", opts.out_dir, "directory for output CSVs")
        ->default_val(std::string("."));
    cmd->add_option("--workers", opts.workers, "worker threads for per-series evaluation")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--q", q_arg, "quadrature points per dimension (overrides the config)")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* fit = app.add_subcommand("fit", "maximum-likelihood fit");
  add_common(fit, true);
  fit->add_flag("--emit-basis", opts.emit_basis, "also write the lag basis matrix");

  CLI::App* simulate = app.add_subcommand("simulate", "draw a synthetic panel");
  add_common(simulate, false);
  simulate->add_option("--seed", seed_arg, "RNG seed (overrides the config)");

  CLI::App* loglik = app.add_subcommand("loglik", "evaluate the marginal log likelihood");
  add_common(loglik, true);
  loglik->add_option("--psi", opts.psi_path, "packed parameter values (CSV)")->required();

  CLI::App* posterior = app.add_subcommand("posterior", "posterior random-effect means");
  add_common(posterior, true);
  posterior->add_option("--psi", opts.psi_path, "packed parameter values (CSV)")->required();

  CLI::App* benchmark = app.add_subcommand("benchmark-q", "cost and accuracy per quadrature size");
  add_common(benchmark, true);
  benchmark->add_option("--psi", opts.psi_path, "packed parameter values (CSV)");
  benchmark->add_option("--q-list", opts.q_list, "quadrature sizes to profile");

  CLI11_PARSE(app, argc, argv);
  if (simulate->parsed() && simulate->count("--seed")) opts.seed = seed_arg;
  if (q_arg > 0) opts.q_points = q_arg;

  try {
    if (fit->parsed()) return glarmix::run_fit(opts, std::cout);
    if (simulate->parsed()) return glarmix::run_simulate(opts, std::cout);
    if (loglik->parsed()) return glarmix::run_loglik(opts, std::cout);
    if (posterior->parsed()) return glarmix::run_posterior(opts, std::cout);
    if (benchmark->parsed()) return glarmix::run_benchmark(opts, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
