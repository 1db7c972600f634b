#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace glarmix {

// Sparsity pattern of the lower-triangular covariance factor L. Diagonal
// entries are always free; strictly-lower entries may be zeroed structurally.
// Free entries are ordered column-major (standard half-vectorization with the
// structural zeros removed); the packed value vector is called lambda.
class LStructure {
 public:
  LStructure() = default;

  static LStructure full(int d);
  // zeros: strictly-lower (row, col) pairs, 0-based, to pin at zero.
  static LStructure with_zeros(int d, const std::vector<std::pair<int, int>>& zeros);

  int dim() const { return d_; }
  int n_free() const { return static_cast<int>(free_.size()); }
  const std::vector<std::pair<int, int>>& free_entries() const { return free_; }
  bool is_free(int row, int col) const;
  // Position of (row, col) in the packed vector, -1 if structurally zero.
  int free_index(int row, int col) const;

 private:
  int d_ = 0;
  std::vector<std::pair<int, int>> free_;  // column-major
};

// Unpack lambda into the d x d lower-triangular factor.
Eigen::MatrixXd lambda_to_L(const Eigen::VectorXd& lambda, const LStructure& s);

// Implied covariance L L'.
Eigen::MatrixXd sigma_from_lambda(const Eigen::VectorXd& lambda, const LStructure& s);

// Row of the design expansion that makes the random-effect contribution
// linear in lambda: entry for free position (a, b) is r[a] * z[b], so that
// row . lambda == (r' L) z for every lambda.
Eigen::VectorXd lambda_covariate_row(const Eigen::VectorXd& z, const Eigen::VectorXd& r,
                                     const LStructure& s);

}  // namespace glarmix
