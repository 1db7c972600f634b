#include "glarmix/quadrature.hpp"

#include <cmath>

#include "glarmix/errors.hpp"

namespace glarmix {

namespace {
const double kSqrtPi = std::sqrt(M_PI);
const double kSqrt2 = std::sqrt(2.0);
}  // namespace

GHRule gauss_hermite(int q) {
  if (q < 1 || q > 50) throw contract_error("gauss_hermite: q must be in 1..50");

  if (q == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, kSqrtPi)};

  // Jacobi matrix of the monic Hermite recurrence: zero diagonal,
  // off-diagonal sqrt(k/2). Eigenvalues are the nodes; the squared first
  // eigenvector components times mu0 = sqrt(pi) are the weights.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(q, q);
  for (int k = 1; k < q; ++k) {
    const double off = std::sqrt(0.5 * k);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gauss_hermite: eigensolver failed");

  GHRule rule;
  rule.nodes = eig.eigenvalues();  // ascending
  rule.weights.resize(q);
  for (int i = 0; i < q; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = kSqrtPi * v0 * v0;
  }

  // Enforce exact +/- symmetry; the eigensolver is only symmetric to rounding.
  for (int i = 0; i < q / 2; ++i) {
    const int k = q - 1 - i;
    const double x = 0.5 * (rule.nodes[k] - rule.nodes[i]);
    rule.nodes[i] = -x;
    rule.nodes[k] = x;
    const double w = 0.5 * (rule.weights[i] + rule.weights[k]);
    rule.weights[i] = w;
    rule.weights[k] = w;
  }
  if (q % 2 == 1) rule.nodes[q / 2] = 0.0;
  return rule;
}

TensorGrid tensor_grid(const GHRule& rule, int d) {
  if (d < 0) throw contract_error("tensor_grid: dimension must be >= 0");
  const int q = static_cast<int>(rule.nodes.size());
  if (q < 1) throw contract_error("tensor_grid: empty rule");

  double total_d = std::pow(static_cast<double>(q), d);
  if (total_d > 1e6) throw contract_error("tensor_grid: q^d exceeds the 1e6 point guard");
  const long total = static_cast<long>(std::llround(total_d));

  TensorGrid grid;
  grid.points.resize(total, d);
  grid.comp_weights.resize(total);
  // Odometer enumeration, first dimension fastest.
  std::vector<int> idx(d, 0);
  for (long row = 0; row < total; ++row) {
    double log_w = 0.0;
    double norm2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double x = rule.nodes[idx[k]];
      grid.points(row, k) = x;
      norm2 += x * x;
      log_w += std::log(rule.weights[idx[k]]);
    }
    grid.comp_weights[row] = std::exp(norm2 + log_w);
    for (int k = 0; k < d; ++k) {
      if (++idx[k] < q) break;
      idx[k] = 0;
    }
  }
  return grid;
}

AdaptedGrid adapt(const TensorGrid& grid, const Eigen::VectorXd& mode,
                  const Eigen::MatrixXd& chol_scale) {
  const int d = static_cast<int>(grid.points.cols());
  if (mode.size() != d || chol_scale.rows() != d || chol_scale.cols() != d)
    throw contract_error("adapt: mode/scale dimensions do not match the grid");
  double log_det = 0.0;
  for (int k = 0; k < d; ++k) {
    if (!(chol_scale(k, k) > 0.0))
      throw contract_error("adapt: Cholesky scale must have positive diagonal");
    log_det += std::log(chol_scale(k, k));
  }

  AdaptedGrid out;
  out.points = grid.points * (kSqrt2 * chol_scale).transpose();
  out.points.rowwise() += mode.transpose();
  out.comp_weights = grid.comp_weights;
  out.prefactor = std::exp(log_det - 0.5 * d * std::log(M_PI));
  return out;
}

}  // namespace glarmix
