#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "glarmix/model.hpp"
#include "glarmix/quadrature.hpp"

namespace glarmix {

// Value/derivatives of a smooth exponent F(z). want: 0 value, 1 +grad, 2 +hess.
struct FEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};
using ExponentFn = std::function<FEval(const Eigen::VectorXd& z, int want)>;

struct InnerOptions {
  double grad_tol = 1e-8;  // sup-norm on the exponent gradient
  int max_iter = 50;
  int max_halvings = 10;
};

// Mode and curvature of an exponent: cov = (-F'')^{-1} at the mode,
// cov_chol its lower Cholesky factor.
struct InnerSolution {
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd cov_chol;
  double value = 0.0;  // F at the mode
  int iterations = 0;  // Newton steps taken
};

// Ridge-guarded Newton ascent from z = 0 with step halving.
InnerSolution inner_mode(const ExponentFn& f, int dim, const InnerOptions& opts = {});

// log integral estimate (2pi)^{-d/2} * integral exp(F): Laplace form
// 0.5 log det cov + F(mode).
double laplace_loglik(const InnerSolution& sol);

// Same integral through the adapted quadrature grid; exact for quadratic F,
// equal to laplace_loglik when the rule has a single node.
double agq_log_integral(const ExponentFn& f, const InnerSolution& sol, const GHRule& rule);

// Per-series likelihood contribution with derivatives in the local parameter
// order (beta_j, lambda, ar_j, ma_j).
struct SeriesBundle {
  double loglik = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  Eigen::VectorXd re_mean;  // posterior mean of the standardized random effect
  InnerSolution inner;
};

// The series' exponent F(z) = conditional loglik + Gaussian prior kernel,
// evaluated through the recursion filter at parameters drawn from `params`.
ExponentFn series_exponent(const SeriesData& s, const ModelSpec& spec, int series_index,
                           const Eigen::VectorXd& params);

SeriesBundle agq_series(const SeriesData& s, const ModelSpec& spec, int series_index,
                        const Eigen::VectorXd& params, int q_points, int want_derivs,
                        const InnerOptions& opts = {});

struct Instrumentation {
  long integral_count = 0;  // conceptual likelihood integrals: (S_j+1)^2 per series at want 2
  long inner_iterations_total = 0;
  int inner_iterations_max = 0;
  std::vector<double> series_seconds;
};

struct PanelEval {
  double loglik = 0.0;
  Eigen::VectorXd grad;  // over the packed parameter vector
  Eigen::MatrixXd hess;
  std::vector<Eigen::VectorXd> re_means;  // standardized posterior means per series
  Instrumentation instr;
};

// Cached scatter maps from local series derivatives to the packed layout.
struct PreparedPanel {
  const PanelData* data = nullptr;
  const ModelSpec* spec = nullptr;
  std::vector<Eigen::MatrixXd> scatter;  // k_j x total, d theta_loc / d params
  std::vector<int> relevant;             // S_j: packed entries the series touches
};

PreparedPanel prepare_panel(const PanelData& data, const ModelSpec& spec);

// Sum of per-series contributions; series are processed independently (up to
// `workers` threads) and reduced in panel order, so the result is bit-identical
// for any worker count.
PanelEval panel_loglik(const PreparedPanel& prep, const Eigen::VectorXd& params, int q_points,
                       int want_derivs, int workers = 1, const InnerOptions& opts = {});

PanelEval panel_loglik(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& params,
                       int q_points, int want_derivs, int workers = 1,
                       const InnerOptions& opts = {});

}  // namespace glarmix
