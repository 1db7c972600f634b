#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace glarmix {

struct ToolOptions {
  std::string data_path;
  std::string config_path;
  std::string out_dir = ".";
  std::string psi_path;  // parameter CSV for loglik/posterior/benchmark
  int workers = 1;
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::optional<int> q_points;        // overrides the quadrature schedule
  std::vector<int> q_list;            // benchmark grid
  bool emit_basis = false;
};

// Each command reads config (and data where applicable), writes its CSVs into
// out_dir, prints a summary to `out`, and returns the process exit code:
// 0 on success, 2 when a fit finished without meeting the convergence test.
// Input and model errors are reported by throwing.
int run_fit(const ToolOptions& opts, std::ostream& out);
int run_simulate(const ToolOptions& opts, std::ostream& out);
int run_loglik(const ToolOptions& opts, std::ostream& out);
int run_posterior(const ToolOptions& opts, std::ostream& out);
int run_benchmark(const ToolOptions& opts, std::ostream& out);

}  // namespace glarmix
