#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "glarmix/model.hpp"

namespace glarmix {

// Covariate column generator for simulated panels.
struct SimCovariate {
  enum class Kind { constant, white_noise, supplied };
  std::string name;
  Kind kind = Kind::constant;
  double value = 1.0;  // constant level
  double sd = 1.0;     // white-noise scale
  std::vector<Eigen::VectorXd> supplied;  // one column per series when Kind::supplied
  bool in_x = true;    // appears among the fixed-effect regressors
  bool in_r = false;   // appears among the random-effect regressors
};

struct SimSpec {
  std::vector<long> n_per_series;  // series count = size
  double trials = 1.0;             // binomial m, constant over the panel
  std::vector<SimCovariate> covariates;
  ModelSpec model;                 // family, orders, constraints, RE structure
  Eigen::VectorXd true_params;    // packed layout of `model`
  std::uint64_t seed = 1;
  std::vector<std::string> ids;   // optional; defaults to s1..sJ
};

struct SeriesLatents {
  Eigen::VectorXd z;  // standardized random effect draw
  Eigen::VectorXd u;  // L z
  Eigen::VectorXd w;  // linear predictor path
  Eigen::VectorXd e;  // residual path
};

struct SimResult {
  PanelData data;
  std::vector<SeriesLatents> latents;
};

// Forward simulation of the observation-driven recursion. Each series draws
// from its own counter-derived stream in a fixed order (random effect, then
// covariate noise, then responses), so equal seeds give bit-identical panels
// regardless of scheduling.
SimResult simulate_panel(const SimSpec& spec);

}  // namespace glarmix
