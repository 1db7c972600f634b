#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "glarmix/csv.hpp"
#include "glarmix/fit.hpp"
#include "glarmix/model.hpp"
#include "glarmix/simulate.hpp"

#include "json.hpp"

namespace glarmix {

// Parsed form of the JSON model description. The schema is versioned and
// strict: unrecognized keys anywhere are errors, so typos fail loudly
// instead of silently falling back to defaults.

struct SharingSpec {
  enum class Kind { per_series, shared, groups };
  Kind kind = Kind::per_series;
  std::vector<std::vector<std::string>> groups;  // series ids per group
};

struct FixedEffectConfig {
  std::string covariate;
  SharingSpec sharing;
};

struct SerialGroupConfig {
  bool all_series = false;
  std::vector<std::string> series;
  int p = 0;
  int q = 0;
};

struct RandomEffectsConfig {
  std::vector<std::string> covariates;
  std::vector<std::pair<int, int>> zero_entries;  // 1-based strictly-lower (row, col)
};

struct LagBasisConfig {
  std::string input;   // driving covariate column
  int terms = 0;       // number of basis functions, 1..4
  int lags = 0;        // support length in time steps
};

struct SimCovariateConfig {
  std::string name;
  std::string kind;  // "constant" | "white_noise"
  double value = 1.0;
  double sd = 1.0;
};

struct SimulateConfig {
  int n_series = 0;
  std::vector<int> lengths;  // recycled if a single entry
  int trials = 1;
  std::vector<SimCovariateConfig> covariates;
  std::vector<double> true_fixed;
  std::vector<double> true_serial;
  std::vector<double> true_factor;
};

struct ModelConfig {
  Family family = Family::binary;
  std::string series_col = "series";
  std::string time_col = "t";
  std::string response_col = "y";
  std::string trials_col;  // optional
  std::vector<FixedEffectConfig> fixed_effects;
  std::vector<SerialGroupConfig> serial;
  RandomEffectsConfig random_effects;
  std::optional<LagBasisConfig> lag_basis;
  std::vector<std::pair<int, int>> q_schedule;  // empty: fit defaults
  NewtonOptions optimizer;
  uint64_t seed = 1;
  std::optional<SimulateConfig> simulate;
};

ModelConfig parse_config(const nlohmann::json& j);
ModelConfig load_config(const std::string& path);

// A model assembled from config plus data: panel, spec, and the packed
// parameter naming used by every CSV the tools emit.
struct BuiltModel {
  PanelData data;
  ModelSpec spec;
  std::vector<std::string> param_names;
  std::vector<std::string> param_components;  // "fixed" | "serial" | "random"
  std::vector<std::string> fixed_names;       // X column labels
  std::vector<std::string> re_names;          // R column labels
  std::optional<LagBasisConfig> lag_basis;
  Eigen::MatrixXd basis;  // lags x terms, empty without lag_basis
  std::vector<int> basis_x_cols;  // X column index of each basis term
};

BuiltModel build_from_table(const ModelConfig& config, const CsvTable& table);

struct BuiltSimulation {
  BuiltModel model;
  SimResult sim;
  std::vector<std::string> covariate_names;  // generated data columns, config order
};

BuiltSimulation build_simulation(const ModelConfig& config, uint64_t seed);

// Parameter vector read back from a two-column (parameter, value) table;
// names must match the model's packed naming exactly and exactly once.
Eigen::VectorXd read_params(const BuiltModel& model, const CsvTable& table);

}  // namespace glarmix
