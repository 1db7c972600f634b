#include "glarmix/cli_commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>

#include "glarmix/csv.hpp"
#include "glarmix/errors.hpp"
#include "glarmix/fit.hpp"
#include "glarmix/model_config.hpp"
#include "glarmix/ranef.hpp"

namespace glarmix {

namespace {

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw contract_error("cannot create output directory " + dir + ": " + ec.message());
}

BuiltModel load_model(const ToolOptions& opts, const ModelConfig& config) {
  if (opts.data_path.empty()) throw contract_error("no --data file given");
  return build_from_table(config, read_csv(opts.data_path));
}

FitOptions fit_options(const ModelConfig& config, const ToolOptions& opts) {
  FitOptions fo;
  if (!config.q_schedule.empty()) fo.q_schedule = config.q_schedule;
  if (opts.q_points) fo.q_schedule = {{*opts.q_points, 200}};
  fo.grad_tol = config.optimizer.grad_tol;
  fo.param_tol = config.optimizer.param_tol;
  fo.max_halvings = config.optimizer.max_halvings;
  fo.ridge = config.optimizer.ridge;
  fo.workers = opts.workers;
  return fo;
}

int final_q(const ModelConfig& config, const ToolOptions& opts) {
  if (opts.q_points) return *opts.q_points;
  if (!config.q_schedule.empty()) return config.q_schedule.back().first;
  return FitOptions{}.q_schedule.back().first;
}

void write_posterior_csv(const std::string& path, const BuiltModel& model,
                         const std::vector<Eigen::VectorXd>& z_means,
                         const std::vector<Eigen::VectorXd>& u_means) {
  std::vector<std::vector<std::string>> rows;
  for (size_t j = 0; j < z_means.size(); ++j) {
    for (long a = 0; a < z_means[j].size(); ++a) {
      rows.push_back({model.data.series[j].id, model.re_names[static_cast<size_t>(a)],
                      format_number(z_means[j][a]), format_number(u_means[j][a])});
    }
  }
  write_csv(path, {"series", "effect", "z_mean", "u_mean"}, rows);
}

// Per-series impulse-response weights over the basis support. The fixed part
// expands the constrained regression block; series with basis terms among the
// random-effect columns get their posterior mean added on top.
void write_transfer_csv(const std::string& path, const BuiltModel& model,
                        const Eigen::VectorXd& params,
                        const std::vector<Eigen::VectorXd>& u_means) {
  const ParamLayout layout = model.spec.layout();
  const Eigen::VectorXd theta = model.spec.constraints.reg * layout.reg(params);
  const int n_lags = static_cast<int>(model.basis.rows());
  const int n_terms = static_cast<int>(model.basis.cols());
  std::vector<int> basis_r_cols(n_terms, -1);
  for (int k = 0; k < n_terms; ++k) {
    const std::string name = model.lag_basis->input + "_b" + std::to_string(k + 1);
    auto it = std::find(model.re_names.begin(), model.re_names.end(), name);
    if (it != model.re_names.end())
      basis_r_cols[k] = static_cast<int>(it - model.re_names.begin());
  }
  std::vector<std::vector<std::string>> rows;
  for (int j = 0; j < model.data.n_series(); ++j) {
    Eigen::VectorXd coef_fixed = Eigen::VectorXd::Zero(n_terms);
    Eigen::VectorXd coef_total = Eigen::VectorXd::Zero(n_terms);
    for (int k = 0; k < n_terms; ++k) {
      if (model.basis_x_cols[static_cast<size_t>(k)] >= 0)
        coef_fixed[k] = theta[model.spec.constraints.reg_offset[static_cast<size_t>(j)] +
                              model.basis_x_cols[static_cast<size_t>(k)]];
      coef_total[k] = coef_fixed[k];
      if (basis_r_cols[k] >= 0 && !u_means.empty()) coef_total[k] += u_means[static_cast<size_t>(j)][basis_r_cols[k]];
    }
    const Eigen::VectorXd omega_fixed = model.basis * coef_fixed;
    const Eigen::VectorXd omega_total = model.basis * coef_total;
    for (int l = 0; l < n_lags; ++l) {
      rows.push_back({model.data.series[static_cast<size_t>(j)].id, std::to_string(l + 1),
                      format_number(omega_fixed[l]), format_number(omega_total[l])});
    }
  }
  write_csv(path, {"series", "lag", "omega_fixed", "omega_total"}, rows);
}

void write_basis_csv(const std::string& path, const Eigen::MatrixXd& basis) {
  std::vector<std::string> header = {"lag"};
  for (long k = 0; k < basis.cols(); ++k) header.push_back("h" + std::to_string(k + 1));
  std::vector<std::vector<std::string>> rows;
  for (long l = 0; l < basis.rows(); ++l) {
    std::vector<std::string> row = {std::to_string(l + 1)};
    for (long k = 0; k < basis.cols(); ++k) row.push_back(format_number(basis(l, k)));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

}  // namespace

int run_fit(const ToolOptions& opts, std::ostream& out) {
  const ModelConfig config = load_config(opts.config_path);
  const BuiltModel model = load_model(opts, config);
  ensure_out_dir(opts.out_dir);

  FitResult res = fit(model.data, model.spec, fit_options(config, opts));

  std::vector<std::vector<std::string>> est_rows;
  for (size_t i = 0; i < model.param_names.size(); ++i) {
    est_rows.push_back({model.param_components[i], model.param_names[i],
                        format_number(res.estimate[static_cast<long>(i)]),
                        format_number(res.se[static_cast<long>(i)])});
  }
  write_csv(join(opts.out_dir, "estimates.csv"), {"component", "parameter", "estimate", "se"},
            est_rows);

  {
    std::vector<std::string> header = {"parameter"};
    header.insert(header.end(), model.param_names.begin(), model.param_names.end());
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < model.param_names.size(); ++i) {
      std::vector<std::string> row = {model.param_names[i]};
      for (size_t k = 0; k < model.param_names.size(); ++k)
        row.push_back(format_number(res.vcov(static_cast<long>(i), static_cast<long>(k))));
      rows.push_back(std::move(row));
    }
    write_csv(join(opts.out_dir, "vcov.csv"), header, rows);
  }

  {
    // trace.csv is deterministic for a given data set and config; wall times
    // go to timings.csv so reruns can be compared byte for byte.
    std::vector<std::vector<std::string>> trace_rows, timing_rows;
    for (const IterationRecord& rec : res.trace) {
      trace_rows.push_back({std::to_string(rec.q), std::to_string(rec.iteration),
                            format_number(rec.value), format_number(rec.grad_norm),
                            format_number(rec.step_norm)});
      timing_rows.push_back(
          {std::to_string(rec.q), std::to_string(rec.iteration), format_number(rec.seconds)});
    }
    write_csv(join(opts.out_dir, "trace.csv"),
              {"q", "iteration", "loglik", "grad_norm", "step_norm"}, trace_rows);
    write_csv(join(opts.out_dir, "timings.csv"), {"q", "iteration", "seconds"}, timing_rows);
  }

  write_posterior_csv(join(opts.out_dir, "posterior.csv"), model, res.re_means, res.re_u);
  if (model.lag_basis) {
    write_transfer_csv(join(opts.out_dir, "transfer.csv"), model, res.estimate, res.re_u);
    if (opts.emit_basis) write_basis_csv(join(opts.out_dir, "basis.csv"), model.basis);
  }

  out << "series: " << model.data.n_series() << ", parameters: " << model.param_names.size()
      << "\n";
  out << "converged: " << (res.converged ? "yes" : "no") << " (final q = " << res.final_q << ")\n";
  out << "loglik: " << format_number(res.loglik) << "\n";
  out << "likelihood integrals: " << res.instr.integral_count
      << ", max inner iterations: " << res.instr.inner_iterations_max << "\n";
  for (const std::string& w : res.warnings) out << "warning: " << w << "\n";
  out << "wrote estimates.csv, vcov.csv, trace.csv, timings.csv, posterior.csv";
  if (model.lag_basis) out << ", transfer.csv";
  if (model.lag_basis && opts.emit_basis) out << ", basis.csv";
  out << " in " << opts.out_dir << "\n";
  return res.converged ? 0 : 2;
}

int run_simulate(const ToolOptions& opts, std::ostream& out) {
  const ModelConfig config = load_config(opts.config_path);
  const std::uint64_t seed = opts.seed ? *opts.seed : config.seed;
  BuiltSimulation built = build_simulation(config, seed);
  ensure_out_dir(opts.out_dir);

  const BuiltModel& model = built.model;
  // Covariate columns: everything the model uses, in declaration order.
  std::vector<std::pair<std::string, std::pair<char, int>>> cols;  // name -> (source, col)
  for (const std::string& name : built.covariate_names) {
    auto fx = std::find(model.fixed_names.begin(), model.fixed_names.end(), name);
    if (fx != model.fixed_names.end()) {
      cols.push_back({name, {'x', static_cast<int>(fx - model.fixed_names.begin())}});
      continue;
    }
    auto rx = std::find(model.re_names.begin(), model.re_names.end(), name);
    if (rx != model.re_names.end())
      cols.push_back({name, {'r', static_cast<int>(rx - model.re_names.begin())}});
  }

  {
    std::vector<std::string> header = {"series", "t", "y", "m"};
    for (const auto& c : cols) header.push_back(c.first);
    std::vector<std::vector<std::string>> rows;
    for (const SeriesData& s : model.data.series) {
      for (long t = 0; t < s.n(); ++t) {
        std::vector<std::string> row = {s.id, std::to_string(t + 1), format_number(s.y[t]),
                                        format_number(s.m[t])};
        for (const auto& c : cols)
          row.push_back(format_number(c.second.first == 'x' ? s.x(t, c.second.second)
                                                            : s.r(t, c.second.second)));
        rows.push_back(std::move(row));
      }
    }
    write_csv(join(opts.out_dir, "data.csv"), header, rows);
  }

  {
    std::vector<std::vector<std::string>> rows;
    for (size_t j = 0; j < built.sim.latents.size(); ++j) {
      const SeriesLatents& lat = built.sim.latents[j];
      const std::string& id = model.data.series[j].id;
      for (long t = 0; t < lat.w.size(); ++t)
        rows.push_back({id, std::to_string(t + 1), format_number(lat.w[t]),
                        format_number(lat.e[t])});
    }
    write_csv(join(opts.out_dir, "latents.csv"), {"series", "t", "w", "e"}, rows);
  }

  {
    std::vector<std::vector<std::string>> rows;
    for (size_t j = 0; j < built.sim.latents.size(); ++j) {
      const SeriesLatents& lat = built.sim.latents[j];
      for (long a = 0; a < lat.z.size(); ++a)
        rows.push_back({model.data.series[j].id, model.re_names[static_cast<size_t>(a)],
                        format_number(lat.z[a]), format_number(lat.u[a])});
    }
    write_csv(join(opts.out_dir, "ranef.csv"), {"series", "effect", "z", "u"}, rows);
  }

  long total = 0;
  for (const SeriesData& s : model.data.series) total += s.n();
  out << "simulated " << model.data.n_series() << " series, " << total
      << " observations (seed " << seed << ")\n";
  out << "wrote data.csv, latents.csv, ranef.csv in " << opts.out_dir << "\n";
  return 0;
}

int run_loglik(const ToolOptions& opts, std::ostream& out) {
  const ModelConfig config = load_config(opts.config_path);
  const BuiltModel model = load_model(opts, config);
  if (opts.psi_path.empty()) throw contract_error("no --psi parameter file given");
  const Eigen::VectorXd params = read_params(model, read_csv(opts.psi_path));
  ensure_out_dir(opts.out_dir);

  const int q = final_q(config, opts);
  PanelEval ev = panel_loglik(model.data, model.spec, params, q, 1, opts.workers);

  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < model.param_names.size(); ++i)
    rows.push_back({model.param_names[i], format_number(ev.grad[static_cast<long>(i)])});
  write_csv(join(opts.out_dir, "gradient.csv"), {"parameter", "gradient"}, rows);

  out << "loglik " << format_number(ev.loglik) << " (q = " << q << ")\n";
  out << "wrote gradient.csv in " << opts.out_dir << "\n";
  return 0;
}

int run_posterior(const ToolOptions& opts, std::ostream& out) {
  const ModelConfig config = load_config(opts.config_path);
  const BuiltModel model = load_model(opts, config);
  if (opts.psi_path.empty()) throw contract_error("no --psi parameter file given");
  const Eigen::VectorXd params = read_params(model, read_csv(opts.psi_path));
  ensure_out_dir(opts.out_dir);

  const int q = final_q(config, opts);
  PanelEval ev = panel_loglik(model.data, model.spec, params, q, 0, opts.workers);
  const Eigen::MatrixXd L =
      lambda_to_L(model.spec.layout().chol(params), model.spec.re_structure);
  std::vector<Eigen::VectorXd> u_means;
  for (const Eigen::VectorXd& z : ev.re_means) u_means.push_back(L * z);
  write_posterior_csv(join(opts.out_dir, "posterior.csv"), model, ev.re_means, u_means);

  out << "loglik " << format_number(ev.loglik) << " (q = " << q << ")\n";
  out << "wrote posterior.csv in " << opts.out_dir << "\n";
  return 0;
}

int run_benchmark(const ToolOptions& opts, std::ostream& out) {
  const ModelConfig config = load_config(opts.config_path);
  const BuiltModel model = load_model(opts, config);
  ensure_out_dir(opts.out_dir);

  Eigen::VectorXd params;
  if (!opts.psi_path.empty()) {
    params = read_params(model, read_csv(opts.psi_path));
  } else {
    out << "no --psi given; fitting first to obtain a reference point\n";
    FitResult res = fit(model.data, model.spec, fit_options(config, opts));
    params = res.estimate;
  }

  std::vector<int> q_list = opts.q_list;
  if (q_list.empty()) q_list = {2, 3, 4, 5, 6, 7};
  std::vector<BenchmarkRow> rows = benchmark_q(model.data, model.spec, params, q_list,
                                               opts.workers);

  std::vector<std::vector<std::string>> csv_rows;
  for (const BenchmarkRow& r : rows)
    csv_rows.push_back({std::to_string(r.q), std::to_string(r.points), format_number(r.seconds),
                        format_number(r.loglik), format_number(r.max_param_pct_change),
                        format_number(r.max_se_pct_change)});
  write_csv(join(opts.out_dir, "benchmark.csv"),
            {"q", "points", "seconds", "loglik", "max_param_pct_change", "max_se_pct_change"},
            csv_rows);

  out << std::left << std::setw(4) << "q" << std::setw(10) << "points" << std::setw(12)
      << "seconds" << std::setw(22) << "loglik" << std::setw(14) << "param_pct" << "se_pct\n";
  for (const BenchmarkRow& r : rows) {
    out << std::left << std::setw(4) << r.q << std::setw(10) << r.points << std::setw(12)
        << std::setprecision(4) << r.seconds << std::setw(22) << std::setprecision(12) << r.loglik
        << std::setw(14) << std::setprecision(4) << r.max_param_pct_change
        << std::setprecision(4) << r.max_se_pct_change << "\n";
  }
  out << "wrote benchmark.csv in " << opts.out_dir << "\n";
  return 0;
}

}  // namespace glarmix
