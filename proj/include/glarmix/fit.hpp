#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "glarmix/marginal.hpp"
#include "glarmix/model.hpp"

namespace glarmix {

struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};
// want 0 requests the value only; want 2 the full triple.
using Objective = std::function<ObjectiveEval(const Eigen::VectorXd& x, int want)>;

struct NewtonOptions {
  double grad_tol = 1e-6;   // scaled: |grad|_inf <= grad_tol * (1 + |value|)
  double param_tol = 1e-8;  // relative step size at which the iterate is considered fixed
  int max_iter = 50;
  int max_halvings = 10;
  double ridge = 1e-4;      // initial Levenberg shift when the negated curvature is not PD
};

struct IterationRecord {
  int q = 0;  // quadrature points in force (0 for plain objectives)
  int iteration = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double seconds = 0.0;
};

struct NewtonResult {
  Eigen::VectorXd x;
  ObjectiveEval eval;  // at x
  bool converged = false;
  int steps = 0;
  std::vector<IterationRecord> trace;
  std::string diagnostic;  // set when the search stalled
};

// Ridge-stabilized Newton ascent with step halving; maximizes f.
NewtonResult newton_maximize(const Objective& f, const Eigen::VectorXd& x0,
                             const NewtonOptions& opts);

struct FitOptions {
  // (quadrature points, iteration cap) stages, nondecreasing in Q; convergence
  // is only declared at the last stage.
  std::vector<std::pair<int, int>> q_schedule = {{3, 20}, {5, 50}};
  double grad_tol = 1e-6;
  double param_tol = 1e-8;
  int max_halvings = 10;
  double ridge = 1e-4;
  int workers = 1;
  InnerOptions inner;
};

struct FitResult {
  Eigen::VectorXd estimate;  // packed layout, factor diagonal normalized nonnegative
  Eigen::VectorXd se;        // NaN when the information matrix is singular
  Eigen::MatrixXd vcov;
  double loglik = 0.0;
  bool converged = false;
  int final_q = 0;
  std::vector<IterationRecord> trace;
  std::vector<std::string> warnings;
  std::vector<Eigen::VectorXd> re_means;  // standardized posterior means per series
  std::vector<Eigen::VectorXd> re_u;      // on the random-effect scale (L * mean)
  Instrumentation instr;                  // accumulated over all evaluations
};

// Moment-based starting values: independent per-series fits, least-squares
// projection onto the constrained space, factor diagonal from between-series
// spread (floored at 0.1).
Eigen::VectorXd initialize(const PanelData& data, const ModelSpec& spec,
                           std::vector<std::string>* warnings = nullptr);

FitResult fit(const PanelData& data, const ModelSpec& spec, const FitOptions& opts = {},
              const Eigen::VectorXd* start = nullptr);

// vcov = (-hess)^{-1} and its diagonal square roots. Throws singular_error
// naming the null directions when the information matrix is not invertible.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> standard_errors(const Eigen::MatrixXd& hess);

struct ModelTestResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool boundary_warning = false;
};

// Wald test of C * estimate = c0 using the fitted covariance.
ModelTestResult wald_test(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& vcov,
                          const Eigen::MatrixXd& c, const Eigen::VectorXd& c0);

// Likelihood ratio test of a nested pair fit at the same quadrature accuracy.
// Nesting is validated through the constraint maps; the boundary flag is set
// when the reduced model removes random-effect variances.
ModelTestResult lr_test(const FitResult& full, const ModelSpec& full_spec,
                        const FitResult& reduced, const ModelSpec& reduced_spec);

struct PosteriorRE {
  Eigen::VectorXd z_mean;  // standardized coordinates
  Eigen::VectorXd u_mean;  // random-effect scale
};
PosteriorRE posterior_mean_re(const PanelData& data, const ModelSpec& spec, int series_index,
                              const Eigen::VectorXd& params, int q_points);

struct BenchmarkRow {
  int q = 0;
  long points = 0;        // q^d tensor grid size
  double seconds = 0.0;   // one full-derivative evaluation plus the step solve
  double loglik = 0.0;
  double max_param_pct_change = 0.0;  // vs the previous row's updated parameters
  double max_se_pct_change = 0.0;     // vs the previous row's standard errors
};

// One Newton iteration per requested Q at a fixed (near-optimal) parameter
// value; the first row's change columns are NaN.
std::vector<BenchmarkRow> benchmark_q(const PanelData& data, const ModelSpec& spec,
                                      const Eigen::VectorXd& params,
                                      const std::vector<int>& q_list, int workers = 1);

}  // namespace glarmix
