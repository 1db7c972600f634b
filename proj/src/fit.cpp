#include "glarmix/fit.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "glarmix/errors.hpp"
#include "glarmix/filter.hpp"
#include "glarmix/mathutil.hpp"

namespace glarmix {

namespace {

using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point start) {
  return std::chrono::duration<double>(clock::now() - start).count();
}

}  // namespace

NewtonResult newton_maximize(const Objective& f, const Eigen::VectorXd& x0,
                             const NewtonOptions& opts) {
  NewtonResult res;
  res.x = x0;
  res.eval = f(res.x, 2);
  if (!std::isfinite(res.eval.value))
    throw divergence_error("newton_maximize: objective not finite at the starting point", -1);

  const int n = static_cast<int>(x0.size());
  double ridge = opts.ridge;

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    const auto iter_start = clock::now();
    if (n == 0) {  // nothing to move
      res.converged = true;
      break;
    }
    const double grad_norm = res.eval.grad.lpNorm<Eigen::Infinity>();
    const bool grad_ok = grad_norm <= opts.grad_tol * (1.0 + std::abs(res.eval.value));

    // Levenberg shift until the negated curvature factorizes.
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::MatrixXd neg_hess = -res.eval.hess;
    double shift = 0.0;
    llt.compute(neg_hess);
    while (llt.info() != Eigen::Success) {
      shift = shift == 0.0 ? ridge : shift * 10.0;
      if (shift > 1e12 * (1.0 + neg_hess.diagonal().cwiseAbs().maxCoeff())) {
        res.diagnostic = "curvature could not be regularized";
        return res;
      }
      llt.compute(neg_hess + shift * Eigen::MatrixXd::Identity(n, n));
    }
    const Eigen::VectorXd direction = llt.solve(res.eval.grad);

    // Converged when the gradient test passes and the (undamped) Newton step
    // would not move the iterate. A ridged direction is not trusted here; a
    // small gradient with indefinite curvature is a saddle, not an optimum.
    const double rel_step =
        direction.lpNorm<Eigen::Infinity>() / (1.0 + res.x.lpNorm<Eigen::Infinity>());
    if (grad_ok && shift == 0.0 && rel_step <= opts.param_tol) {
      res.converged = true;
      break;
    }

    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    for (int h = 0; h <= opts.max_halvings; ++h, scale *= 0.5) {
      cand = res.x + scale * direction;
      if (!cand.allFinite()) continue;
      double value;
      try {
        value = f(cand, 0).value;
      } catch (const divergence_error&) {
        continue;  // candidate outside the region where the recursion is finite
      } catch (const degenerate_error&) {
        continue;
      } catch (const inner_failure&) {
        continue;
      }
      if (std::isfinite(value) && value > res.eval.value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (grad_ok && shift == 0.0) {
        // Flat to double precision around a point that passes the gradient
        // test: there is nothing left to gain.
        res.converged = true;
        break;
      }
      // Retry once with a heavily damped (gradient-like) step before giving up.
      if (ridge < 1e6) {
        ridge *= 1e4;
        continue;
      }
      res.diagnostic = "step halving found no ascent";
      return res;
    }

    res.x = cand;
    res.eval = f(res.x, 2);
    ++res.steps;
    res.trace.push_back({0, iter, res.eval.value,
                         res.eval.grad.lpNorm<Eigen::Infinity>(),
                         (scale * direction).lpNorm<Eigen::Infinity>(),
                         seconds_since(iter_start)});
  }
  if (!res.converged && res.diagnostic.empty()) res.diagnostic = "iteration cap reached";
  return res;
}

namespace {

// Per-series unconstrained fit used for starting values: regressors are the
// series' X plus any random-effect columns without a fixed counterpart.
struct SeriesStart {
  Eigen::VectorXd coefs;  // b_j + n_unlinked
  Eigen::VectorXd arma;   // p + q
  bool usable = false;
};

SeriesStart per_series_start(const SeriesData& s, const ModelSpec& spec, int j,
                             std::vector<std::string>* warnings) {
  const int b = static_cast<int>(s.x.cols());
  const int d = spec.re_structure.dim();
  std::vector<int> unlinked;
  for (int a = 0; a < d; ++a)
    if (spec.re_fixed_link[a] < 0) unlinked.push_back(a);

  Eigen::MatrixXd design(s.n(), b + unlinked.size());
  design.leftCols(b) = s.x;
  for (size_t a = 0; a < unlinked.size(); ++a) design.col(b + a) = s.r.col(unlinked[a]);

  const ArmaOrder ord = spec.orders[j];
  const int k = static_cast<int>(design.cols()) + ord.p + ord.q;
  const Eigen::VectorXd no_offset;

  Objective obj = [&](const Eigen::VectorXd& x, int want) -> ObjectiveEval {
    ArmaParams arma;
    arma.ar = x.segment(design.cols(), ord.p);
    arma.ma = x.tail(ord.q);
    const FilterOutput filt = glarma_filter(s.y, s.m, spec.family, design,
                                            x.head(design.cols()), no_offset, arma, want);
    return {filt.loglik, filt.grad, filt.hess};
  };

  NewtonOptions opts;
  opts.max_iter = 100;
  SeriesStart out;
  try {
    const NewtonResult res = newton_maximize(obj, Eigen::VectorXd::Zero(k), opts);
    if (res.x.allFinite()) {
      out.coefs = res.x.head(design.cols());
      out.arma = res.x.tail(ord.p + ord.q);
      out.usable = true;
      if (!res.converged && warnings)
        warnings->push_back("initialize: per-series fit for '" + s.id +
                            "' stopped early (" + res.diagnostic + ")");
    }
  } catch (const std::exception& err) {
    if (warnings)
      warnings->push_back("initialize: per-series fit for '" + s.id +
                          "' diverged, using zeros (" + err.what() + ")");
  }
  if (!out.usable) {
    out.coefs = Eigen::VectorXd::Zero(design.cols());
    out.arma = Eigen::VectorXd::Zero(ord.p + ord.q);
    out.usable = true;
  }
  return out;
}

Eigen::VectorXd project_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& target,
                                      const char* label) {
  if (a.cols() == 0) return Eigen::VectorXd(0);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols())
    throw contract_error(std::string("initialize: ") + label +
                         " constraint matrix is rank deficient");
  return qr.solve(target);
}

double sample_sd(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1));
}

}  // namespace

Eigen::VectorXd initialize(const PanelData& data, const ModelSpec& spec,
                           std::vector<std::string>* warnings) {
  validate_panel(data, spec);
  const ParamLayout layout = spec.layout();
  const int n_series = data.n_series();
  const int d = spec.re_structure.dim();

  Eigen::VectorXd reg_stack(spec.constraints.reg.rows());
  Eigen::VectorXd arma_stack(spec.constraints.arma.rows());
  std::vector<SeriesStart> starts;
  starts.reserve(n_series);
  std::vector<int> unlinked;
  for (int a = 0; a < d; ++a)
    if (spec.re_fixed_link[a] < 0) unlinked.push_back(a);

  for (int j = 0; j < n_series; ++j) {
    const SeriesData& s = data.series[j];
    starts.push_back(per_series_start(s, spec, j, warnings));
    reg_stack.segment(spec.constraints.reg_offset[j], s.x.cols()) =
        starts.back().coefs.head(s.x.cols());
    arma_stack.segment(spec.constraints.arma_offset[j],
                       spec.orders[j].p + spec.orders[j].q) = starts.back().arma;
  }

  Eigen::VectorXd params = Eigen::VectorXd::Zero(layout.total());
  params.head(layout.n_reg) = project_least_squares(spec.constraints.reg, reg_stack, "regression");
  params.segment(layout.n_reg, layout.n_arma) =
      project_least_squares(spec.constraints.arma, arma_stack, "serial");

  // Factor diagonal from the spread of the per-series coefficient estimates
  // attached to each random column; off-diagonal free entries start at zero.
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(layout.n_chol);
  for (int a = 0; a < d; ++a) {
    std::vector<double> values;
    values.reserve(n_series);
    for (int j = 0; j < n_series; ++j) {
      const int link = spec.re_fixed_link[a];
      if (link >= 0) {
        values.push_back(starts[j].coefs[link]);
      } else {
        const auto pos = std::find(unlinked.begin(), unlinked.end(), a) - unlinked.begin();
        values.push_back(starts[j].coefs[data.series[j].x.cols() + pos]);
      }
    }
    const int idx = spec.re_structure.free_index(a, a);
    lambda[idx] = std::max(0.1, sample_sd(values));
  }
  params.tail(layout.n_chol) = lambda;
  return params;
}

namespace {

void add_stationarity_warnings(const PanelData& data, const ModelSpec& spec,
                               const Eigen::VectorXd& params, int stage_q,
                               std::vector<std::string>* warnings) {
  const ParamLayout layout = spec.layout();
  const Eigen::VectorXd arma_stack = spec.constraints.arma * layout.arma(params);
  for (int j = 0; j < data.n_series(); ++j) {
    const ArmaOrder ord = spec.orders[j];
    const Eigen::VectorXd ar =
        arma_stack.segment(spec.constraints.arma_offset[j], ord.p + ord.q).head(ord.p);
    if (!ar_stationary(ar)) {
      warnings->push_back("fit: AR coefficients for series '" + data.series[j].id +
                          "' outside the stationary region at Q = " + std::to_string(stage_q));
      return;  // one warning per stage is enough
    }
  }
}

// Flip factor columns whose diagonal came out negative; the covariance is
// invariant and the reflected point is an equivalent optimum.
bool normalize_factor_signs(const LStructure& s, Eigen::VectorXd& lambda) {
  bool flipped = false;
  const auto& entries = s.free_entries();
  for (int col = 0; col < s.dim(); ++col) {
    const int diag = s.free_index(col, col);
    if (lambda[diag] < 0.0) {
      flipped = true;
      for (int i = 0; i < s.n_free(); ++i)
        if (entries[i].second == col) lambda[i] = -lambda[i];
    }
  }
  return flipped;
}

}  // namespace

FitResult fit(const PanelData& data, const ModelSpec& spec, const FitOptions& opts,
              const Eigen::VectorXd* start) {
  if (opts.q_schedule.empty()) throw contract_error("fit: empty quadrature schedule");
  for (size_t i = 0; i + 1 < opts.q_schedule.size(); ++i)
    if (opts.q_schedule[i].first > opts.q_schedule[i + 1].first)
      throw contract_error("fit: quadrature schedule must be nondecreasing in Q");

  const PreparedPanel prep = prepare_panel(data, spec);
  const ParamLayout layout = spec.layout();

  FitResult result;
  Eigen::VectorXd x = start ? *start : initialize(data, spec, &result.warnings);
  if (x.size() != layout.total()) throw contract_error("fit: starting point has the wrong length");

  PanelEval last_eval;
  auto make_objective = [&](int q) -> Objective {
    return [&, q](const Eigen::VectorXd& cand, int want) -> ObjectiveEval {
      PanelEval eval = panel_loglik(prep, cand, q, want == 0 ? 0 : 2, opts.workers, opts.inner);
      result.instr.integral_count += eval.instr.integral_count;
      result.instr.inner_iterations_total += eval.instr.inner_iterations_total;
      result.instr.inner_iterations_max =
          std::max(result.instr.inner_iterations_max, eval.instr.inner_iterations_max);
      ObjectiveEval out{eval.loglik, eval.grad, eval.hess};
      if (want != 0) last_eval = std::move(eval);
      return out;
    };
  };

  NewtonResult stage_res;
  for (size_t stage = 0; stage < opts.q_schedule.size(); ++stage) {
    const auto [q, max_iter] = opts.q_schedule[stage];
    NewtonOptions nopts;
    nopts.grad_tol = opts.grad_tol;
    nopts.param_tol = opts.param_tol;
    nopts.max_iter = max_iter;
    nopts.max_halvings = opts.max_halvings;
    nopts.ridge = opts.ridge;
    stage_res = newton_maximize(make_objective(q), x, nopts);
    x = stage_res.x;
    for (IterationRecord rec : stage_res.trace) {
      rec.q = q;
      result.trace.push_back(rec);
    }
    add_stationarity_warnings(data, spec, x, q, &result.warnings);
    if (!stage_res.converged && !stage_res.diagnostic.empty() &&
        stage + 1 < opts.q_schedule.size())
      result.warnings.push_back("fit: stage Q = " + std::to_string(q) + " stalled (" +
                                stage_res.diagnostic + "), continuing with the next stage");
    result.final_q = q;
  }

  // Sign-normalize the factor diagonal; if anything flipped, re-evaluate at
  // the reflected optimum so derivatives and posterior summaries match.
  Eigen::VectorXd lambda = layout.chol(x);
  if (normalize_factor_signs(spec.re_structure, lambda)) {
    x.tail(layout.n_chol) = lambda;
    stage_res.eval = make_objective(result.final_q)(x, 2);
    stage_res.x = x;
  }

  result.estimate = x;
  result.loglik = stage_res.eval.value;
  result.converged = stage_res.converged;
  if (!stage_res.converged && !stage_res.diagnostic.empty())
    result.warnings.push_back("fit: final stage did not converge (" + stage_res.diagnostic + ")");
  result.re_means = last_eval.re_means;

  const Eigen::MatrixXd chol = lambda_to_L(layout.chol(x), spec.re_structure);
  for (const Eigen::VectorXd& z : result.re_means) result.re_u.push_back(chol * z);

  try {
    auto [se, vcov] = standard_errors(stage_res.eval.hess);
    result.se = se;
    result.vcov = vcov;
  } catch (const singular_error& err) {
    result.se = Eigen::VectorXd::Constant(layout.total(), std::numeric_limits<double>::quiet_NaN());
    result.vcov = Eigen::MatrixXd::Constant(layout.total(), layout.total(),
                                            std::numeric_limits<double>::quiet_NaN());
    result.warnings.push_back(std::string("fit: ") + err.what());
  }
  return result;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> standard_errors(const Eigen::MatrixXd& hess) {
  const int n = static_cast<int>(hess.rows());
  const Eigen::MatrixXd info = -hess;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    std::string directions;
    for (int i = 0; i < n; ++i) {
      if (eig.eigenvalues()[i] <= 1e-10 * scale) {
        int lead;
        eig.eigenvectors().col(i).cwiseAbs().maxCoeff(&lead);
        if (!directions.empty()) directions += ", ";
        directions += "parameter " + std::to_string(lead) +
                      " (eigenvalue " + std::to_string(eig.eigenvalues()[i]) + ")";
      }
    }
    throw singular_error("standard_errors: information matrix is singular; null directions: " +
                         (directions.empty() ? std::string("none identified") : directions));
  }
  Eigen::MatrixXd vcov = llt.solve(Eigen::MatrixXd::Identity(n, n));
  vcov = 0.5 * (vcov + vcov.transpose()).eval();  // the solve is symmetric only to rounding
  Eigen::VectorXd se(n);
  for (int i = 0; i < n; ++i) {
    if (vcov(i, i) < 0.0)
      throw singular_error("standard_errors: negative variance on the diagonal");
    se[i] = std::sqrt(vcov(i, i));
  }
  return {se, vcov};
}

ModelTestResult wald_test(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& vcov,
                          const Eigen::MatrixXd& c, const Eigen::VectorXd& c0) {
  if (c.cols() != estimate.size() || c0.size() != c.rows())
    throw contract_error("wald_test: dimension mismatch");
  if (c.rows() == 0) throw contract_error("wald_test: empty restriction matrix");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.transpose());
  if (qr.rank() < c.rows()) throw contract_error("wald_test: restriction rows are dependent");

  const Eigen::VectorXd gap = c * estimate - c0;
  const Eigen::MatrixXd middle = c * vcov * c.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(middle);
  if (llt.info() != Eigen::Success)
    throw singular_error("wald_test: restricted covariance is singular");
  ModelTestResult res;
  res.statistic = gap.dot(llt.solve(gap));
  res.df = static_cast<int>(c.rows());
  res.p_value = chi_squared_upper_tail(res.statistic, res.df);
  return res;
}

namespace {

bool columns_in_span(const Eigen::MatrixXd& inner, const Eigen::MatrixXd& outer) {
  if (inner.rows() != outer.rows()) return false;
  if (inner.cols() == 0) return true;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(outer);
  for (int c = 0; c < inner.cols(); ++c) {
    const Eigen::VectorXd col = inner.col(c);
    const Eigen::VectorXd residual = col - outer * qr.solve(col);
    if (residual.lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + col.lpNorm<Eigen::Infinity>()))
      return false;
  }
  return true;
}

}  // namespace

ModelTestResult lr_test(const FitResult& full, const ModelSpec& full_spec,
                        const FitResult& reduced, const ModelSpec& reduced_spec) {
  if (full_spec.family != reduced_spec.family)
    throw contract_error("lr_test: models use different families");
  if (full_spec.constraints.reg.rows() != reduced_spec.constraints.reg.rows() ||
      full_spec.constraints.arma.rows() != reduced_spec.constraints.arma.rows())
    throw contract_error(
        "lr_test: models must share the stacked coefficient layout; express the reduced "
        "model through constraints on the same design");
  if (!columns_in_span(reduced_spec.constraints.reg, full_spec.constraints.reg) ||
      !columns_in_span(reduced_spec.constraints.arma, full_spec.constraints.arma))
    throw contract_error("lr_test: reduced constraint space is not nested in the full model");

  std::set<std::pair<int, int>> full_free(full_spec.re_structure.free_entries().begin(),
                                          full_spec.re_structure.free_entries().end());
  bool removes_variance = full_spec.re_structure.dim() != reduced_spec.re_structure.dim();
  for (const auto& entry : reduced_spec.re_structure.free_entries()) {
    if (!full_free.count(entry))
      throw contract_error("lr_test: reduced factor structure is not nested in the full model");
  }
  for (int a = 0; a < full_spec.re_structure.dim(); ++a) {
    if (a >= reduced_spec.re_structure.dim() || !reduced_spec.re_structure.is_free(a, a))
      removes_variance = removes_variance || full_spec.re_structure.is_free(a, a);
  }

  const int df = full_spec.layout().total() - reduced_spec.layout().total();
  if (df < 0) throw contract_error("lr_test: reduced model has more parameters than the full one");

  ModelTestResult res;
  res.statistic = 2.0 * (full.loglik - reduced.loglik);
  if (res.statistic < 0.0) {
    if (res.statistic < -1e-6)
      throw contract_error("lr_test: full model fits worse than the reduced one; check convergence");
    res.statistic = 0.0;
  }
  res.df = df;
  res.p_value = df == 0 ? 1.0 : chi_squared_upper_tail(res.statistic, df);
  res.boundary_warning = removes_variance;
  return res;
}

PosteriorRE posterior_mean_re(const PanelData& data, const ModelSpec& spec, int series_index,
                              const Eigen::VectorXd& params, int q_points) {
  if (series_index < 0 || series_index >= data.n_series())
    throw contract_error("posterior_mean_re: series index out of range");
  const SeriesBundle bundle =
      agq_series(data.series[series_index], spec, series_index, params, q_points, 0);
  PosteriorRE out;
  out.z_mean = bundle.re_mean;
  out.u_mean = lambda_to_L(spec.layout().chol(params), spec.re_structure) * bundle.re_mean;
  return out;
}

std::vector<BenchmarkRow> benchmark_q(const PanelData& data, const ModelSpec& spec,
                                      const Eigen::VectorXd& params,
                                      const std::vector<int>& q_list, int workers) {
  if (q_list.empty()) throw contract_error("benchmark_q: empty Q list");
  const PreparedPanel prep = prepare_panel(data, spec);
  const int d = spec.re_structure.dim();
  const int total = spec.layout().total();

  std::vector<BenchmarkRow> rows;
  Eigen::VectorXd prev_updated;
  Eigen::VectorXd prev_se;
  for (int q : q_list) {
    BenchmarkRow row;
    row.q = q;
    row.points = static_cast<long>(std::llround(std::pow(static_cast<double>(q), d)));

    const auto started = clock::now();
    const PanelEval eval = panel_loglik(prep, params, q, 2, workers);
    Eigen::MatrixXd neg_hess = -eval.hess;
    Eigen::LLT<Eigen::MatrixXd> llt(neg_hess);
    double shift = 1e-4;
    while (llt.info() != Eigen::Success) {
      llt.compute(neg_hess + shift * Eigen::MatrixXd::Identity(total, total));
      shift *= 10.0;
      if (shift > 1e12) throw singular_error("benchmark_q: curvature could not be regularized");
    }
    const Eigen::VectorXd updated = params + llt.solve(eval.grad);
    row.seconds = seconds_since(started);
    row.loglik = eval.loglik;

    Eigen::VectorXd se = Eigen::VectorXd::Constant(total, std::numeric_limits<double>::quiet_NaN());
    try {
      se = standard_errors(eval.hess).first;
    } catch (const singular_error&) {
      // leave NaN; the change column will propagate it
    }

    if (rows.empty()) {
      row.max_param_pct_change = std::numeric_limits<double>::quiet_NaN();
      row.max_se_pct_change = std::numeric_limits<double>::quiet_NaN();
    } else {
      double param_pct = 0.0, se_pct = 0.0;
      for (int i = 0; i < total; ++i) {
        param_pct = std::max(param_pct, 100.0 * std::abs(updated[i] - prev_updated[i]) /
                                            std::max(std::abs(prev_updated[i]), 1e-8));
        se_pct = std::max(se_pct,
                          100.0 * std::abs(se[i] - prev_se[i]) / std::max(prev_se[i], 1e-8));
      }
      row.max_param_pct_change = param_pct;
      row.max_se_pct_change = se_pct;
    }
    prev_updated = updated;
    prev_se = se;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace glarmix
