#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "glarmix/family.hpp"
#include "glarmix/ranef.hpp"

namespace glarmix {

// One series of a panel. X holds the fixed-effect regressors, R the
// random-effect regressors (columns may repeat columns of X).
struct SeriesData {
  std::string id;
  Eigen::VectorXd y;
  Eigen::VectorXd m;  // trial counts; all ones for binary/poisson
  Eigen::MatrixXd x;  // n x b_j
  Eigen::MatrixXd r;  // n x d
  long n() const { return y.size(); }
};

struct PanelData {
  std::vector<SeriesData> series;
  int n_series() const { return static_cast<int>(series.size()); }
};

struct ArmaOrder {
  int p = 0;
  int q = 0;
};

// Linear reparameterizations theta = A psi, kept separate for regression and
// serial-dependence blocks so no constraint can mix the two. Rows of `reg`
// stack the per-series regression coefficients (b_j rows for series j, in
// panel order); rows of `arma` stack (ar_1..ar_p, ma_1..ma_q) per series.
struct ConstraintMap {
  Eigen::MatrixXd reg;
  Eigen::MatrixXd arma;
  std::vector<int> reg_offset;   // row offset of each series in `reg`
  std::vector<int> arma_offset;  // row offset of each series in `arma`

  static Eigen::MatrixXd identity(int rows) { return Eigen::MatrixXd::Identity(rows, rows); }
};

// Packed parameter vector layout: [regression block | serial block | lambda].
struct ParamLayout {
  int n_reg = 0;
  int n_arma = 0;
  int n_chol = 0;
  int total() const { return n_reg + n_arma + n_chol; }

  Eigen::VectorXd reg(const Eigen::VectorXd& params) const { return params.head(n_reg); }
  Eigen::VectorXd arma(const Eigen::VectorXd& params) const {
    return params.segment(n_reg, n_arma);
  }
  Eigen::VectorXd chol(const Eigen::VectorXd& params) const { return params.tail(n_chol); }
};

struct ModelSpec {
  Family family = Family::binary;
  std::vector<ArmaOrder> orders;  // one per series
  ConstraintMap constraints;
  LStructure re_structure;
  // For each random-effect column: index of the matching fixed column in X,
  // or -1 when the column has no fixed counterpart. Used by initialization.
  std::vector<int> re_fixed_link;

  ParamLayout layout() const {
    return {static_cast<int>(constraints.reg.cols()), static_cast<int>(constraints.arma.cols()),
            re_structure.n_free()};
  }
};

// Cross-checks data against spec (dimensions, support, offsets) and errors
// with the series id on the first violation.
void validate_panel(const PanelData& data, const ModelSpec& spec);

// Convenience builders for the common constraint shapes.
Eigen::MatrixXd shared_map(int n_series, int block);        // every series same coefs
Eigen::MatrixXd per_series_map(int n_series, int block);    // identity
// groups[g] lists series indices sharing one coefficient block.
Eigen::MatrixXd grouped_map(const std::vector<std::vector<int>>& groups, int n_series, int block);

}  // namespace glarmix
