#pragma once

#include <Eigen/Dense>

namespace glarmix {

// One-dimensional Gauss-Hermite rule for the exp(-x^2) kernel:
// sum_i weights[i] f(nodes[i]) ~ integral f(x) exp(-x^2) dx.
struct GHRule {
  Eigen::VectorXd nodes;    // ascending, symmetric about 0
  Eigen::VectorXd weights;  // positive, sum = sqrt(pi)
};

// Nodes/weights from the eigendecomposition of the Jacobi matrix of the
// Hermite recurrence (Golub-Welsch). 1 <= q <= 50.
GHRule gauss_hermite(int q);

// Full tensor product over d dimensions. comp_weights carry the kernel
// compensation exp(|x|^2) * prod w_i, so that
// sum_I comp_weights[I] g(points[I]) ~ integral g(x) dx for g ~ exp(-|x|^2)-like.
struct TensorGrid {
  Eigen::MatrixXd points;        // (q^d) x d, raw node coordinates
  Eigen::VectorXd comp_weights;  // kernel-compensated weights
};

// Guard: q^d must not exceed 1e6.
TensorGrid tensor_grid(const GHRule& rule, int d);

// Grid recentred at a mode and rescaled by sqrt(2) * chol_scale, where
// chol_scale is the (lower) Cholesky factor of the curvature inverse at the
// mode. prefactor = det(chol_scale) / pi^(d/2) combines the Gaussian prior
// normalization with the substitution Jacobian.
struct AdaptedGrid {
  Eigen::MatrixXd points;        // (q^d) x d, shifted/scaled evaluation points
  Eigen::VectorXd comp_weights;  // same compensated weights as the raw grid
  double prefactor;
};

AdaptedGrid adapt(const TensorGrid& grid, const Eigen::VectorXd& mode,
                  const Eigen::MatrixXd& chol_scale);

}  // namespace glarmix
