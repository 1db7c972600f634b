#include "glarmix/ranef.hpp"

#include <algorithm>

#include "glarmix/errors.hpp"

namespace glarmix {

LStructure LStructure::full(int d) { return with_zeros(d, {}); }

LStructure LStructure::with_zeros(int d, const std::vector<std::pair<int, int>>& zeros) {
  if (d < 0) throw contract_error("LStructure: dimension must be >= 0");
  for (const auto& [r, c] : zeros) {
    if (r <= c || r >= d || c < 0)
      throw contract_error("LStructure: structural zeros must be strictly-lower entries");
  }
  LStructure s;
  s.d_ = d;
  for (int col = 0; col < d; ++col) {
    for (int row = col; row < d; ++row) {
      const bool zeroed =
          std::find(zeros.begin(), zeros.end(), std::make_pair(row, col)) != zeros.end();
      if (!zeroed) s.free_.emplace_back(row, col);
    }
  }
  return s;
}

bool LStructure::is_free(int row, int col) const { return free_index(row, col) >= 0; }

int LStructure::free_index(int row, int col) const {
  for (int i = 0; i < n_free(); ++i)
    if (free_[i].first == row && free_[i].second == col) return i;
  return -1;
}

namespace {
void check_lambda(const Eigen::VectorXd& lambda, const LStructure& s, const char* who) {
  if (lambda.size() != s.n_free())
    throw contract_error(std::string(who) + ": lambda length does not match the free-entry count");
}
}  // namespace

Eigen::MatrixXd lambda_to_L(const Eigen::VectorXd& lambda, const LStructure& s) {
  check_lambda(lambda, s, "lambda_to_L");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(s.dim(), s.dim());
  const auto& entries = s.free_entries();
  for (int i = 0; i < s.n_free(); ++i) L(entries[i].first, entries[i].second) = lambda[i];
  return L;
}

Eigen::MatrixXd sigma_from_lambda(const Eigen::VectorXd& lambda, const LStructure& s) {
  const Eigen::MatrixXd L = lambda_to_L(lambda, s);
  return L * L.transpose();
}

Eigen::VectorXd lambda_covariate_row(const Eigen::VectorXd& z, const Eigen::VectorXd& r,
                                     const LStructure& s) {
  if (z.size() != s.dim() || r.size() != s.dim())
    throw contract_error("lambda_covariate_row: z and r must have the structure dimension");
  Eigen::VectorXd row(s.n_free());
  const auto& entries = s.free_entries();
  for (int i = 0; i < s.n_free(); ++i) row[i] = r[entries[i].first] * z[entries[i].second];
  return row;
}

}  // namespace glarmix
