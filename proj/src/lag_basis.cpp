#include "glarmix/lag_basis.hpp"

#include "glarmix/errors.hpp"

namespace glarmix {

double basis_poly(int k, double v) {
  const double h2 = v * (1.0 - v);
  switch (k) {
    case 1: return v;
    case 2: return h2;
    case 3: return (1.0 - 2.0 * v) * h2;
    case 4: return (1.0 - 14.0 / 3.0 * v + 14.0 / 3.0 * v * v) * h2;
    default: throw contract_error("basis_poly: term index must be in 1..4");
  }
}

Eigen::MatrixXd basis_matrix(int n_terms, int n_lags) {
  if (n_terms < 1 || n_terms > 4) throw contract_error("basis_matrix: need 1..4 terms");
  if (n_lags < 1) throw contract_error("basis_matrix: need at least one lag");
  Eigen::MatrixXd h(n_lags, n_terms);
  for (int l = 1; l <= n_lags; ++l) {
    const double v = static_cast<double>(l) / (n_lags + 1);
    for (int k = 1; k <= n_terms; ++k) h(l - 1, k - 1) = basis_poly(k, v);
  }
  return h;
}

Eigen::MatrixXd lag_covariates(const Eigen::VectorXd& input, const Eigen::MatrixXd& basis) {
  const auto n = input.size();
  const auto n_lags = basis.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, basis.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index l = 1; l <= n_lags && l <= t; ++l)
      out.row(t) += input[t - l] * basis.row(l - 1);
  }
  return out;
}

Eigen::VectorXd implied_lag_coefs(const Eigen::VectorXd& coefs, const Eigen::MatrixXd& basis) {
  if (coefs.size() != basis.cols())
    throw contract_error("implied_lag_coefs: coefficient count does not match basis terms");
  return basis * coefs;
}

}  // namespace glarmix
