#pragma once

#include <Eigen/Dense>

#include "glarmix/family.hpp"

namespace glarmix {

// Serial-dependence coefficients of the observation-driven recursion
//   feedback_t = sum_l ar[l] * (feedback_{t-l} + resid_{t-l})
//              + sum_l ma[l] * resid_{t-l},
// with feedback and residuals zero before the first observation.
struct ArmaParams {
  Eigen::VectorXd ar;  // phi_1..phi_p
  Eigen::VectorXd ma;  // theta_1..theta_q
  int p() const { return static_cast<int>(ar.size()); }
  int q() const { return static_cast<int>(ma.size()); }
};

// True when the AR polynomial 1 - sum phi_l z^l has all roots outside the
// unit circle. Violations are not a filter error (the recursion may still be
// finite on a finite sample); the optimizer surfaces them as warnings.
bool ar_stationary(const Eigen::VectorXd& ar);

struct FilterOutput {
  Eigen::VectorXd linpred;   // w_t
  Eigen::VectorXd feedback;  // alpha_t
  Eigen::VectorXd resid;     // pearson residual e_t
  double loglik = 0.0;       // sum_t log f(y_t | w_t), carrier terms included
  Eigen::VectorXd grad;      // d loglik / d params, want_derivs >= 1
  Eigen::MatrixXd hess;      // second derivative matrix, want_derivs == 2
};

// One pass of the recursion over a single series, with exact derivative
// recursions through the residual feedback (no numeric differentiation).
// Parameter order: coefs (one per covariate column), then ar, then ma.
//   covariates: n x b, coefs: b, offset: n (may be zero-length for none)
// want_derivs: 0 value only, 1 adds grad, 2 adds hess.
FilterOutput glarma_filter(const Eigen::VectorXd& y, const Eigen::VectorXd& m, Family family,
                           const Eigen::MatrixXd& covariates, const Eigen::VectorXd& coefs,
                           const Eigen::VectorXd& offset, const ArmaParams& arma,
                           int want_derivs);

}  // namespace glarmix
