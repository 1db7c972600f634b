#pragma once

#include <Eigen/Dense>

namespace glarmix {

// Low-order polynomial basis for distributed-lag coefficient curves.
//   h1(v) = v
//   h2(v) = v(1-v)
//   h3(v) = (1-2v) h2(v)
//   h4(v) = (1 - 14/3 v + 14/3 v^2) h2(v)
// h2,h3,h4 are pairwise orthogonal on [0,1] and vanish at both endpoints;
// h1 is not orthogonal to the others but pins the endpoint h1(1) = 1.
double basis_poly(int k, double v);

// H[l-1, k-1] = h_k(l / (n_lags + 1)) for l = 1..n_lags, k = 1..n_terms.
Eigen::MatrixXd basis_matrix(int n_terms, int n_lags);

// Collapsed lag regressors: out(t, k) = sum_l H(l, k) * input[t - l], with the
// pre-sample input treated as zero. input is aligned to t = 1..n.
Eigen::MatrixXd lag_covariates(const Eigen::VectorXd& input, const Eigen::MatrixXd& basis);

// Lag coefficient curve implied by basis-term coefficients: omega = H * coefs.
Eigen::VectorXd implied_lag_coefs(const Eigen::VectorXd& coefs, const Eigen::MatrixXd& basis);

}  // namespace glarmix
