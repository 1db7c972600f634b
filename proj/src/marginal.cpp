#include "glarmix/marginal.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "glarmix/errors.hpp"
#include "glarmix/filter.hpp"
#include "glarmix/mathutil.hpp"

namespace glarmix {

namespace {

// Per-series view of the packed parameter vector.
struct SeriesParams {
  Eigen::VectorXd beta;
  ArmaParams arma;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd chol;  // lambda unpacked
};

SeriesParams extract(const SeriesData& s, const ModelSpec& spec, int j,
                     const Eigen::VectorXd& params) {
  const ParamLayout layout = spec.layout();
  if (params.size() != layout.total())
    throw contract_error("panel parameters have the wrong length");
  if (!params.allFinite()) throw contract_error("panel parameters contain non-finite values");

  SeriesParams sp;
  const int b = static_cast<int>(s.x.cols());
  sp.beta = spec.constraints.reg.middleRows(spec.constraints.reg_offset[j], b) *
            layout.reg(params);
  const ArmaOrder ord = spec.orders[j];
  const Eigen::VectorXd tau =
      spec.constraints.arma.middleRows(spec.constraints.arma_offset[j], ord.p + ord.q) *
      layout.arma(params);
  sp.arma.ar = tau.head(ord.p);
  sp.arma.ma = tau.tail(ord.q);
  sp.lambda = layout.chol(params);
  sp.chol = lambda_to_L(sp.lambda, spec.re_structure);
  return sp;
}

Eigen::LLT<Eigen::MatrixXd> ridged_llt(const Eigen::MatrixXd& neg_hess, int max_retries) {
  Eigen::LLT<Eigen::MatrixXd> llt(neg_hess);
  if (llt.info() == Eigen::Success) return llt;
  double ridge = 1e-6 * (1.0 + neg_hess.diagonal().cwiseAbs().maxCoeff());
  for (int r = 0; r < max_retries; ++r) {
    llt.compute(neg_hess + ridge * Eigen::MatrixXd::Identity(neg_hess.rows(), neg_hess.cols()));
    if (llt.info() == Eigen::Success) return llt;
    ridge *= 1e3;
  }
  throw inner_failure("mode search: negated curvature is not positive definite", -1);
}

}  // namespace

InnerSolution inner_mode(const ExponentFn& f, int dim, const InnerOptions& opts) {
  InnerSolution sol;
  sol.mode = Eigen::VectorXd::Zero(dim);
  if (dim == 0) {
    sol.cov.resize(0, 0);
    sol.cov_chol.resize(0, 0);
    sol.value = f(sol.mode, 0).value;
    return sol;
  }

  FEval cur = f(sol.mode, 2);
  if (!std::isfinite(cur.value))
    throw inner_failure("mode search: exponent not finite at the origin", -1);

  while (true) {
    if (cur.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) break;
    if (sol.iterations >= opts.max_iter)
      throw inner_failure("mode search: no convergence within " + std::to_string(opts.max_iter) +
                              " iterations",
                          -1);

    const Eigen::LLT<Eigen::MatrixXd> llt = ridged_llt(-cur.hess, 2);
    const Eigen::VectorXd direction = llt.solve(cur.grad);

    double scale = 1.0;
    bool moved = false;
    for (int h = 0; h <= opts.max_halvings; ++h, scale *= 0.5) {
      const Eigen::VectorXd cand = sol.mode + scale * direction;
      if (!cand.allFinite()) continue;
      double trial_value;
      try {
        trial_value = f(cand, 0).value;
      } catch (const divergence_error&) {
        continue;  // overshoot blew up the recursion; retreat
      } catch (const degenerate_error&) {
        continue;
      }
      if (std::isfinite(trial_value) && trial_value > cur.value) {
        sol.mode = cand;
        cur = f(cand, 2);
        moved = true;
        break;
      }
    }
    ++sol.iterations;
    if (!moved) {
      // No representable ascent: accept when the quadratic model predicts a
      // gain below double precision at this function scale, else fail.
      const double model_gain = 0.5 * cur.grad.dot(direction);
      if (model_gain <= 1e-13 * (1.0 + std::abs(cur.value))) break;
      throw inner_failure("mode search: step halving found no ascent direction", -1);
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(-cur.hess);
  if (llt.info() != Eigen::Success)
    throw inner_failure("mode search: curvature not positive definite at the mode", -1);
  sol.cov = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  Eigen::LLT<Eigen::MatrixXd> cov_llt(sol.cov);
  if (cov_llt.info() != Eigen::Success)
    throw inner_failure("mode search: curvature inverse lost positive definiteness", -1);
  sol.cov_chol = cov_llt.matrixL();
  sol.value = cur.value;
  return sol;
}

double laplace_loglik(const InnerSolution& sol) {
  double half_log_det = 0.0;
  for (Eigen::Index i = 0; i < sol.cov_chol.rows(); ++i)
    half_log_det += std::log(sol.cov_chol(i, i));
  return half_log_det + sol.value;
}

double agq_log_integral(const ExponentFn& f, const InnerSolution& sol, const GHRule& rule) {
  const int dim = static_cast<int>(sol.mode.size());
  if (dim == 0) return sol.value;
  const AdaptedGrid grid = adapt(tensor_grid(rule, dim), sol.mode, sol.cov_chol);
  Eigen::VectorXd terms(grid.points.rows());
  for (Eigen::Index i = 0; i < grid.points.rows(); ++i)
    terms[i] = f(grid.points.row(i).transpose(), 0).value + std::log(grid.comp_weights[i]);
  return std::log(grid.prefactor) + log_sum_exp(terms);
}

ExponentFn series_exponent(const SeriesData& s, const ModelSpec& spec, int series_index,
                           const Eigen::VectorXd& params) {
  const SeriesParams sp = extract(s, spec, series_index, params);
  const Eigen::MatrixXd re_covs = s.r * sp.chol;
  const Eigen::VectorXd fixed_offset = s.x * sp.beta;
  const int dim = spec.re_structure.dim();
  return [&s, &spec, re_covs, fixed_offset, sp, dim](const Eigen::VectorXd& z,
                                                     int want) -> FEval {
    if (z.size() != dim) throw contract_error("series exponent: wrong coordinate dimension");
    const FilterOutput filt =
        glarma_filter(s.y, s.m, spec.family, re_covs, z, fixed_offset, sp.arma, want);
    FEval out;
    out.value = filt.loglik - 0.5 * z.squaredNorm();
    if (want >= 1) out.grad = filt.grad - z;
    if (want == 2)
      out.hess = filt.hess - Eigen::MatrixXd::Identity(dim, dim);
    return out;
  };
}

SeriesBundle agq_series(const SeriesData& s, const ModelSpec& spec, int series_index,
                        const Eigen::VectorXd& params, int q_points, int want_derivs,
                        const InnerOptions& opts) {
  const SeriesParams sp = extract(s, spec, series_index, params);
  const int dim = spec.re_structure.dim();
  const int n_lambda = spec.re_structure.n_free();
  const long n = s.n();
  const int b = static_cast<int>(s.x.cols());
  const int k_local = b + n_lambda + sp.arma.p() + sp.arma.q();

  SeriesBundle bundle;
  try {
    bundle.inner = inner_mode(series_exponent(s, spec, series_index, params), dim, opts);
  } catch (const inner_failure& err) {
    throw inner_failure(std::string(err.what()) + " [series '" + s.id + "']", series_index);
  }

  const GHRule rule = gauss_hermite(q_points);
  const AdaptedGrid grid = adapt(tensor_grid(rule, dim), bundle.inner.mode, bundle.inner.cov_chol);
  const long n_points = grid.points.rows();

  if (want_derivs == 0) {
    // Value only: evaluate the exponent in its cheap inner parameterization.
    const ExponentFn f = series_exponent(s, spec, series_index, params);
    Eigen::VectorXd terms(n_points);
    for (long i = 0; i < n_points; ++i)
      terms[i] = f(grid.points.row(i).transpose(), 0).value + std::log(grid.comp_weights[i]);
    bundle.loglik = std::log(grid.prefactor) + log_sum_exp(terms);
    bundle.re_mean = Eigen::VectorXd::Zero(dim);
    if (dim > 0) {
      const Eigen::VectorXd u =
          (terms.array() - log_sum_exp(terms)).exp().matrix();
      bundle.re_mean = grid.points.transpose() * u;
    }
    return bundle;
  }

  // With derivatives: one filter pass per grid point in the outer
  // parameterization, where the random-effect contribution is linear in
  // lambda, yields the exponent value and the local-parameter derivatives in
  // the same sweep.
  Eigen::VectorXd log_terms(n_points);
  std::vector<Eigen::VectorXd> grads;
  std::vector<Eigen::MatrixXd> hesses;
  grads.reserve(n_points);
  if (want_derivs == 2) hesses.reserve(n_points);

  Eigen::MatrixXd covs(n, b + n_lambda);
  if (b > 0) covs.leftCols(b) = s.x;
  Eigen::VectorXd coefs(b + n_lambda);
  coefs.head(b) = sp.beta;
  coefs.tail(n_lambda) = sp.lambda;
  const Eigen::VectorXd no_offset;

  const auto& free_entries = spec.re_structure.free_entries();
  for (long i = 0; i < n_points; ++i) {
    const Eigen::VectorXd z = grid.points.row(i).transpose();
    for (long t = 0; t < n; ++t)
      for (int a = 0; a < n_lambda; ++a)
        covs(t, b + a) = s.r(t, free_entries[a].first) * z[free_entries[a].second];
    const FilterOutput filt =
        glarma_filter(s.y, s.m, spec.family, covs, coefs, no_offset, sp.arma, want_derivs);
    log_terms[i] = filt.loglik - 0.5 * z.squaredNorm() + std::log(grid.comp_weights[i]);
    grads.push_back(filt.grad);
    if (want_derivs == 2) hesses.push_back(filt.hess);
  }

  const double lse = log_sum_exp(log_terms);
  bundle.loglik = std::log(grid.prefactor) + lse;
  const Eigen::VectorXd u = (log_terms.array() - lse).exp().matrix();

  bundle.grad = Eigen::VectorXd::Zero(k_local);
  for (long i = 0; i < n_points; ++i) bundle.grad += u[i] * grads[i];
  if (want_derivs == 2) {
    bundle.hess = Eigen::MatrixXd::Zero(k_local, k_local);
    for (long i = 0; i < n_points; ++i) {
      bundle.hess += u[i] * hesses[i];
      bundle.hess.noalias() += u[i] * (grads[i] * grads[i].transpose());
    }
    bundle.hess.noalias() -= bundle.grad * bundle.grad.transpose();
    bundle.hess = 0.5 * (bundle.hess + bundle.hess.transpose()).eval();
  }
  bundle.re_mean = dim > 0 ? Eigen::VectorXd(grid.points.transpose() * u)
                           : Eigen::VectorXd::Zero(0);
  return bundle;
}

PreparedPanel prepare_panel(const PanelData& data, const ModelSpec& spec) {
  validate_panel(data, spec);
  PreparedPanel prep;
  prep.data = &data;
  prep.spec = &spec;
  const ParamLayout layout = spec.layout();
  const int total = layout.total();

  for (int j = 0; j < data.n_series(); ++j) {
    const SeriesData& s = data.series[j];
    const int b = static_cast<int>(s.x.cols());
    const int n_lambda = spec.re_structure.n_free();
    const ArmaOrder ord = spec.orders[j];
    const int k_local = b + n_lambda + ord.p + ord.q;

    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(k_local, total);
    scatter.block(0, 0, b, layout.n_reg) =
        spec.constraints.reg.middleRows(spec.constraints.reg_offset[j], b);
    scatter.block(b, layout.n_reg + layout.n_arma, n_lambda, n_lambda).setIdentity();
    scatter.block(b + n_lambda, layout.n_reg, ord.p + ord.q, layout.n_arma) =
        spec.constraints.arma.middleRows(spec.constraints.arma_offset[j], ord.p + ord.q);
    int relevant = 0;
    for (int c = 0; c < total; ++c)
      if ((scatter.col(c).array() != 0.0).any()) ++relevant;
    prep.scatter.push_back(std::move(scatter));
    prep.relevant.push_back(relevant);
  }
  return prep;
}

namespace {

struct SeriesTerm {
  double loglik = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  Eigen::VectorXd re_mean;
  int inner_iterations = 0;
  double seconds = 0.0;
};

}  // namespace

PanelEval panel_loglik(const PreparedPanel& prep, const Eigen::VectorXd& params, int q_points,
                       int want_derivs, int workers, const InnerOptions& opts) {
  const PanelData& data = *prep.data;
  const ModelSpec& spec = *prep.spec;
  const int n_series = data.n_series();
  const int total = spec.layout().total();
  if (workers < 1) throw contract_error("panel_loglik: worker count must be >= 1");

  std::vector<SeriesTerm> terms(n_series);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  int first_error_series = n_series;
  std::mutex error_mutex;

  auto run = [&]() {
    while (true) {
      const int j = next.fetch_add(1);
      if (j >= n_series) break;
      try {
        const auto started = std::chrono::steady_clock::now();
        const SeriesBundle bundle =
            agq_series(data.series[j], spec, j, params, q_points, want_derivs, opts);
        SeriesTerm& term = terms[j];
        term.loglik = bundle.loglik;
        term.re_mean = bundle.re_mean;
        term.inner_iterations = bundle.inner.iterations;
        if (want_derivs >= 1) term.grad = prep.scatter[j].transpose() * bundle.grad;
        if (want_derivs == 2)
          term.hess = prep.scatter[j].transpose() * bundle.hess * prep.scatter[j];
        term.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                           .count();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (j < first_error_series) {
          first_error_series = j;
          first_error = std::current_exception();
        }
      }
    }
  };

  if (workers == 1 || n_series == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, n_series);
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  PanelEval out;
  if (want_derivs >= 1) out.grad = Eigen::VectorXd::Zero(total);
  if (want_derivs == 2) out.hess = Eigen::MatrixXd::Zero(total, total);
  out.instr.series_seconds.resize(n_series);
  // Fixed-order reduction: identical result for every worker count.
  for (int j = 0; j < n_series; ++j) {
    const SeriesTerm& term = terms[j];
    out.loglik += term.loglik;
    if (want_derivs >= 1) out.grad += term.grad;
    if (want_derivs == 2) out.hess += term.hess;
    out.re_means.push_back(term.re_mean);
    out.instr.series_seconds[j] = term.seconds;
    out.instr.inner_iterations_total += term.inner_iterations;
    out.instr.inner_iterations_max = std::max(out.instr.inner_iterations_max,
                                              term.inner_iterations);
    const long s_j = prep.relevant[j];
    out.instr.integral_count +=
        want_derivs == 2 ? (s_j + 1) * (s_j + 1) : (want_derivs == 1 ? s_j + 1 : 1);
  }
  return out;
}

PanelEval panel_loglik(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& params,
                       int q_points, int want_derivs, int workers, const InnerOptions& opts) {
  return panel_loglik(prepare_panel(data, spec), params, q_points, want_derivs, workers, opts);
}

}  // namespace glarmix
