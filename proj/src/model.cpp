#include "glarmix/model.hpp"

#include "glarmix/errors.hpp"

namespace glarmix {

void validate_panel(const PanelData& data, const ModelSpec& spec) {
  const int n_series = data.n_series();
  if (n_series == 0) throw contract_error("validate_panel: empty panel");
  if (static_cast<int>(spec.orders.size()) != n_series)
    throw contract_error("validate_panel: one ArmaOrder required per series");
  if (static_cast<int>(spec.constraints.reg_offset.size()) != n_series ||
      static_cast<int>(spec.constraints.arma_offset.size()) != n_series)
    throw contract_error("validate_panel: constraint row offsets missing for some series");

  const int d = spec.re_structure.dim();
  if (static_cast<int>(spec.re_fixed_link.size()) != d)
    throw contract_error("validate_panel: re_fixed_link must have one entry per random column");

  int reg_rows = 0, arma_rows = 0;
  for (int j = 0; j < n_series; ++j) {
    const SeriesData& s = data.series[j];
    const long n = s.n();
    if (n == 0) throw contract_error("validate_panel: series '" + s.id + "' is empty");
    if (s.m.size() != n || s.x.rows() != n || (d > 0 && s.r.rows() != n))
      throw contract_error("validate_panel: column lengths differ within series '" + s.id + "'");
    if (s.r.cols() != d)
      throw contract_error("validate_panel: series '" + s.id +
                           "' random columns do not match the structure dimension");
    for (long t = 0; t < n; ++t) {
      if (!in_support(s.y[t], s.m[t], spec.family))
        throw contract_error("validate_panel: response out of family support in series '" + s.id +
                             "' at t = " + std::to_string(t + 1));
    }
    if (spec.constraints.reg_offset[j] != reg_rows || spec.constraints.arma_offset[j] != arma_rows)
      throw contract_error("validate_panel: constraint offsets disagree with the panel layout");
    reg_rows += static_cast<int>(s.x.cols());
    arma_rows += spec.orders[j].p + spec.orders[j].q;
    for (int c : spec.re_fixed_link)
      if (c < -1 || c >= s.x.cols())
        throw contract_error("validate_panel: re_fixed_link index out of range for series '" +
                             s.id + "'");
  }
  if (spec.constraints.reg.rows() != reg_rows)
    throw contract_error("validate_panel: regression constraint rows do not match stacked coefs");
  if (spec.constraints.arma.rows() != arma_rows)
    throw contract_error("validate_panel: serial constraint rows do not match stacked coefs");
}

Eigen::MatrixXd shared_map(int n_series, int block) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_series * block, block);
  for (int j = 0; j < n_series; ++j)
    a.block(j * block, 0, block, block).setIdentity();
  return a;
}

Eigen::MatrixXd per_series_map(int n_series, int block) {
  return Eigen::MatrixXd::Identity(n_series * block, n_series * block);
}

Eigen::MatrixXd grouped_map(const std::vector<std::vector<int>>& groups, int n_series, int block) {
  std::vector<int> group_of(n_series, -1);
  for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
    for (int j : groups[g]) {
      if (j < 0 || j >= n_series) throw contract_error("grouped_map: series index out of range");
      if (group_of[j] != -1) throw contract_error("grouped_map: series appears in two groups");
      group_of[j] = g;
    }
  }
  for (int j = 0; j < n_series; ++j)
    if (group_of[j] == -1) throw contract_error("grouped_map: series missing from all groups");

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_series * block, groups.size() * block);
  for (int j = 0; j < n_series; ++j)
    a.block(j * block, group_of[j] * block, block, block).setIdentity();
  return a;
}

}  // namespace glarmix
