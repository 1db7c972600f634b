#include "glarmix/model_config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "glarmix/errors.hpp"
#include "glarmix/lag_basis.hpp"

namespace glarmix {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw contract_error(where + ": unknown key '" + it.key() + "'");
  }
}

const json& require(const json& j, const std::string& where, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw contract_error(where + ": missing required key '" + key + "'");
  return *it;
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw contract_error(where + ": expected a string");
  return v.get<std::string>();
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw contract_error(where + ": expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw contract_error(where + ": expected an integer");
  return v.get<int>();
}

SharingSpec parse_sharing(const json& v, const std::string& where) {
  SharingSpec s;
  if (v.is_string()) {
    const std::string word = v.get<std::string>();
    if (word == "shared")
      s.kind = SharingSpec::Kind::shared;
    else if (word == "by_series")
      s.kind = SharingSpec::Kind::per_series;
    else
      throw contract_error(where + ": sharing must be 'shared', 'by_series', or {\"groups\": ...}");
    return s;
  }
  if (!v.is_object()) throw contract_error(where + ": bad sharing value");
  check_keys(v, where, {"groups"});
  const json& groups = require(v, where, "groups");
  if (!groups.is_array() || groups.empty())
    throw contract_error(where + ": groups must be a non-empty array");
  s.kind = SharingSpec::Kind::groups;
  for (const json& g : groups) {
    if (!g.is_array() || g.empty())
      throw contract_error(where + ": each group must be a non-empty array of series ids");
    std::vector<std::string> ids;
    for (const json& id : g) ids.push_back(as_string(id, where + ".groups"));
    s.groups.push_back(std::move(ids));
  }
  return s;
}

std::vector<std::pair<int, int>> parse_zero_entries(const json& v, const std::string& where,
                                                    int max_dim) {
  std::vector<std::pair<int, int>> out;
  if (!v.is_array()) throw contract_error(where + ": expected an array of [row, col] pairs");
  for (const json& pair : v) {
    if (!pair.is_array() || pair.size() != 2)
      throw contract_error(where + ": each entry must be a [row, col] pair");
    int r = as_int(pair[0], where);
    int c = as_int(pair[1], where);
    if (r <= c || c < 1 || r > max_dim)
      throw contract_error(where + ": [" + std::to_string(r) + "," + std::to_string(c) +
                           "] is not a strictly-lower entry of a " + std::to_string(max_dim) +
                           "-dimensional factor (1-based)");
    out.emplace_back(r - 1, c - 1);  // stored 0-based
  }
  return out;
}

SimulateConfig parse_simulate(const json& v) {
  const std::string where = "simulate";
  if (!v.is_object()) throw contract_error(where + ": expected an object");
  check_keys(v, where, {"n_series", "length", "trials", "covariates", "true"});
  SimulateConfig sim;
  sim.n_series = as_int(require(v, where, "n_series"), where + ".n_series");
  if (sim.n_series < 1) throw contract_error(where + ".n_series must be positive");
  const json& len = require(v, where, "length");
  if (len.is_number_integer()) {
    sim.lengths.push_back(len.get<int>());
  } else if (len.is_array()) {
    for (const json& n : len) sim.lengths.push_back(as_int(n, where + ".length"));
  } else {
    throw contract_error(where + ".length: expected an integer or array");
  }
  for (int n : sim.lengths)
    if (n < 1) throw contract_error(where + ".length entries must be positive");
  if (sim.lengths.size() != 1 && static_cast<int>(sim.lengths.size()) != sim.n_series)
    throw contract_error(where + ".length must have one entry or one per series");
  if (v.contains("trials")) {
    sim.trials = as_int(v["trials"], where + ".trials");
    if (sim.trials < 1) throw contract_error(where + ".trials must be positive");
  }
  const json& covs = require(v, where, "covariates");
  if (!covs.is_array() || covs.empty())
    throw contract_error(where + ".covariates must be a non-empty array");
  for (const json& c : covs) {
    const std::string cwhere = where + ".covariates";
    if (!c.is_object()) throw contract_error(cwhere + ": expected objects");
    check_keys(c, cwhere, {"name", "kind", "value", "sd"});
    SimCovariateConfig cfg;
    cfg.name = as_string(require(c, cwhere, "name"), cwhere + ".name");
    cfg.kind = as_string(require(c, cwhere, "kind"), cwhere + ".kind");
    if (cfg.kind != "constant" && cfg.kind != "white_noise")
      throw contract_error(cwhere + "." + cfg.name + ": kind must be 'constant' or 'white_noise'");
    if (c.contains("value")) cfg.value = as_number(c["value"], cwhere + ".value");
    if (c.contains("sd")) {
      cfg.sd = as_number(c["sd"], cwhere + ".sd");
      if (cfg.sd <= 0) throw contract_error(cwhere + ".sd must be positive");
    }
    sim.covariates.push_back(std::move(cfg));
  }
  const json& truth = require(v, where, "true");
  if (!truth.is_object()) throw contract_error(where + ".true: expected an object");
  check_keys(truth, where + ".true", {"fixed", "serial", "factor"});
  auto read_vec = [&](const char* key, std::vector<double>& out) {
    if (!truth.contains(key)) return;
    const json& arr = truth[key];
    if (!arr.is_array()) throw contract_error(where + ".true." + key + ": expected an array");
    for (const json& x : arr) out.push_back(as_number(x, where + ".true"));
  };
  read_vec("fixed", sim.true_fixed);
  read_vec("serial", sim.true_serial);
  read_vec("factor", sim.true_factor);
  return sim;
}

// Resolves group sharing into 0-based series indices, enforcing that every
// listed id exists and no series appears twice.
std::vector<std::vector<int>> resolve_groups(const std::vector<std::vector<std::string>>& groups,
                                             const std::map<std::string, int>& series_index,
                                             const std::string& where, bool require_all) {
  std::vector<std::vector<int>> out;
  std::set<int> seen;
  for (const auto& g : groups) {
    std::vector<int> idx;
    for (const std::string& id : g) {
      auto it = series_index.find(id);
      if (it == series_index.end())
        throw contract_error(where + ": unknown series id '" + id + "'");
      if (!seen.insert(it->second).second)
        throw contract_error(where + ": series '" + id + "' listed more than once");
      idx.push_back(it->second);
    }
    out.push_back(std::move(idx));
  }
  if (require_all && seen.size() != series_index.size())
    throw contract_error(where + ": groups must cover every series exactly once");
  return out;
}

struct SpecBuild {
  ModelSpec spec;
  std::vector<std::string> param_names;
  std::vector<std::string> param_components;
};

// Constraint maps, orders, RE structure, and packed parameter names given the
// panel's series ids. Fixed and RE column lists are config order.
SpecBuild build_spec(const ModelConfig& config, const std::vector<std::string>& series_ids,
                     const std::vector<std::string>& fixed_names,
                     const std::vector<std::string>& re_names) {
  SpecBuild out;
  const int n_series = static_cast<int>(series_ids.size());
  const int b = static_cast<int>(fixed_names.size());
  std::map<std::string, int> series_index;
  for (int j = 0; j < n_series; ++j) {
    if (!series_index.emplace(series_ids[j], j).second)
      throw contract_error("duplicate series id '" + series_ids[j] + "'");
  }

  // Regression block: one column set per covariate, covariate-major.
  std::vector<std::pair<int, int>> reg_entries;  // (row, column), all ones
  int reg_cols = 0;
  for (int c = 0; c < b; ++c) {
    const FixedEffectConfig& fe = config.fixed_effects[c];
    const std::string& name = fixed_names[c];
    switch (fe.sharing.kind) {
      case SharingSpec::Kind::shared:
        for (int j = 0; j < n_series; ++j) reg_entries.emplace_back(j * b + c, reg_cols);
        out.param_names.push_back(name);
        ++reg_cols;
        break;
      case SharingSpec::Kind::per_series:
        for (int j = 0; j < n_series; ++j) {
          reg_entries.emplace_back(j * b + c, reg_cols + j);
          out.param_names.push_back(name + "[" + series_ids[j] + "]");
        }
        reg_cols += n_series;
        break;
      case SharingSpec::Kind::groups: {
        auto groups = resolve_groups(fe.sharing.groups, series_index,
                                     "fixed_effects." + name + ".groups", true);
        for (size_t k = 0; k < groups.size(); ++k) {
          for (int j : groups[k]) reg_entries.emplace_back(j * b + c, reg_cols);
          out.param_names.push_back(name + "[g" + std::to_string(k + 1) + "]");
          ++reg_cols;
        }
        break;
      }
    }
  }
  Eigen::MatrixXd reg = Eigen::MatrixXd::Zero(static_cast<long>(n_series) * b, reg_cols);
  for (const auto& [row, col] : reg_entries) reg(row, col) = 1.0;
  out.param_components.assign(out.param_names.size(), "fixed");

  // Serial block: group-major columns phi then theta; series outside every
  // group carry no serial terms.
  std::vector<ArmaOrder> orders(n_series);
  std::vector<int> group_of(n_series, -1);
  std::vector<int> group_col(config.serial.size(), 0);
  int arma_cols = 0;
  {
    std::set<int> seen;
    for (size_t g = 0; g < config.serial.size(); ++g) {
      const SerialGroupConfig& sg = config.serial[g];
      std::vector<int> members;
      if (sg.all_series) {
        if (config.serial.size() != 1)
          throw contract_error("serial: 'all' cannot be combined with other groups");
        for (int j = 0; j < n_series; ++j) members.push_back(j);
      } else {
        for (const std::string& id : sg.series) {
          auto it = series_index.find(id);
          if (it == series_index.end())
            throw contract_error("serial: unknown series id '" + id + "'");
          members.push_back(it->second);
        }
      }
      for (int j : members) {
        if (!seen.insert(j).second)
          throw contract_error("serial: series '" + series_ids[j] + "' listed more than once");
        group_of[j] = static_cast<int>(g);
        orders[j] = {sg.p, sg.q};
      }
      group_col[g] = arma_cols;
      const bool suffix = config.serial.size() > 1;
      auto tag = [&](const std::string& stem, int lag) {
        std::string s = stem + std::to_string(lag);
        if (suffix) s += "[g" + std::to_string(g + 1) + "]";
        return s;
      };
      for (int l = 1; l <= sg.p; ++l) out.param_names.push_back(tag("phi", l));
      for (int l = 1; l <= sg.q; ++l) out.param_names.push_back(tag("theta", l));
      arma_cols += sg.p + sg.q;
    }
  }
  for (size_t i = out.param_components.size(); i < out.param_names.size(); ++i)
    out.param_components.push_back("serial");
  std::vector<int> arma_offset(n_series, 0);
  int arma_rows = 0;
  for (int j = 0; j < n_series; ++j) {
    arma_offset[j] = arma_rows;
    arma_rows += orders[j].p + orders[j].q;
  }
  Eigen::MatrixXd arma = Eigen::MatrixXd::Zero(arma_rows, arma_cols);
  for (int j = 0; j < n_series; ++j) {
    if (group_of[j] < 0) continue;
    const int base = group_col[group_of[j]];
    for (int k = 0; k < orders[j].p + orders[j].q; ++k) arma(arma_offset[j] + k, base + k) = 1.0;
  }

  // Random-effect factor.
  const int d = static_cast<int>(re_names.size());
  LStructure structure = LStructure::with_zeros(d, config.random_effects.zero_entries);
  for (const auto& [row, col] : structure.free_entries()) {
    out.param_names.push_back("L[" + std::to_string(row + 1) + ";" + std::to_string(col + 1) + "]");
    out.param_components.push_back("random");
  }

  std::vector<int> reg_offset(n_series);
  for (int j = 0; j < n_series; ++j) reg_offset[j] = j * b;

  out.spec.family = config.family;
  out.spec.orders = std::move(orders);
  out.spec.constraints = {std::move(reg), std::move(arma), std::move(reg_offset),
                          std::move(arma_offset)};
  out.spec.re_structure = structure;
  out.spec.re_fixed_link.assign(d, -1);
  for (int a = 0; a < d; ++a) {
    auto it = std::find(fixed_names.begin(), fixed_names.end(), re_names[a]);
    if (it != fixed_names.end())
      out.spec.re_fixed_link[a] = static_cast<int>(it - fixed_names.begin());
  }
  return out;
}

void check_unique_names(const std::vector<std::string>& names, const std::string& where) {
  std::set<std::string> seen;
  for (const std::string& n : names)
    if (!seen.insert(n).second) throw contract_error(where + ": duplicate covariate '" + n + "'");
}

}  // namespace

ModelConfig parse_config(const json& j) {
  if (!j.is_object()) throw contract_error("config: expected a JSON object");
  check_keys(j, "config",
             {"version", "family", "columns", "fixed_effects", "serial", "random_effects",
              "lag_basis", "quadrature", "optimizer", "seed", "simulate"});
  int version = as_int(require(j, "config", "version"), "config.version");
  if (version != 1)
    throw contract_error("config.version: unsupported version " + std::to_string(version));

  ModelConfig config;
  config.family = family_from_string(as_string(require(j, "config", "family"), "config.family"));

  if (j.contains("columns")) {
    const json& cols = j["columns"];
    if (!cols.is_object()) throw contract_error("config.columns: expected an object");
    check_keys(cols, "config.columns", {"series", "time", "response", "trials"});
    if (cols.contains("series")) config.series_col = as_string(cols["series"], "columns.series");
    if (cols.contains("time")) config.time_col = as_string(cols["time"], "columns.time");
    if (cols.contains("response"))
      config.response_col = as_string(cols["response"], "columns.response");
    if (cols.contains("trials")) config.trials_col = as_string(cols["trials"], "columns.trials");
  }

  const json& fes = require(j, "config", "fixed_effects");
  if (!fes.is_array() || fes.empty())
    throw contract_error("config.fixed_effects must be a non-empty array");
  for (const json& fe : fes) {
    if (!fe.is_object()) throw contract_error("config.fixed_effects: expected objects");
    check_keys(fe, "config.fixed_effects", {"covariate", "sharing"});
    FixedEffectConfig cfg;
    cfg.covariate =
        as_string(require(fe, "fixed_effects", "covariate"), "fixed_effects.covariate");
    if (fe.contains("sharing"))
      cfg.sharing = parse_sharing(fe["sharing"], "fixed_effects." + cfg.covariate);
    config.fixed_effects.push_back(std::move(cfg));
  }

  if (j.contains("serial")) {
    const json& serial = j["serial"];
    if (!serial.is_array()) throw contract_error("config.serial: expected an array");
    for (const json& sg : serial) {
      if (!sg.is_object()) throw contract_error("config.serial: expected objects");
      check_keys(sg, "config.serial", {"series", "p", "q"});
      SerialGroupConfig cfg;
      const json& series = require(sg, "config.serial", "series");
      if (series.is_string()) {
        if (series.get<std::string>() != "all")
          throw contract_error("config.serial.series: string form must be 'all'");
        cfg.all_series = true;
      } else if (series.is_array() && !series.empty()) {
        for (const json& id : series) cfg.series.push_back(as_string(id, "serial.series"));
      } else {
        throw contract_error("config.serial.series: expected 'all' or a non-empty id array");
      }
      if (sg.contains("p")) cfg.p = as_int(sg["p"], "serial.p");
      if (sg.contains("q")) cfg.q = as_int(sg["q"], "serial.q");
      if (cfg.p < 0 || cfg.q < 0) throw contract_error("config.serial: p and q must be >= 0");
      config.serial.push_back(std::move(cfg));
    }
  }

  if (j.contains("random_effects")) {
    const json& re = j["random_effects"];
    if (!re.is_object()) throw contract_error("config.random_effects: expected an object");
    check_keys(re, "config.random_effects", {"covariates", "zero_entries"});
    const json& covs = require(re, "random_effects", "covariates");
    if (!covs.is_array()) throw contract_error("random_effects.covariates: expected an array");
    for (const json& c : covs)
      config.random_effects.covariates.push_back(as_string(c, "random_effects.covariates"));
    if (re.contains("zero_entries"))
      config.random_effects.zero_entries =
          parse_zero_entries(re["zero_entries"], "random_effects.zero_entries",
                             static_cast<int>(config.random_effects.covariates.size()));
  }

  if (j.contains("lag_basis")) {
    const json& lb = j["lag_basis"];
    if (!lb.is_object()) throw contract_error("config.lag_basis: expected an object");
    check_keys(lb, "config.lag_basis", {"input", "terms", "lags"});
    LagBasisConfig cfg;
    cfg.input = as_string(require(lb, "lag_basis", "input"), "lag_basis.input");
    cfg.terms = as_int(require(lb, "lag_basis", "terms"), "lag_basis.terms");
    cfg.lags = as_int(require(lb, "lag_basis", "lags"), "lag_basis.lags");
    if (cfg.terms < 1 || cfg.terms > 4)
      throw contract_error("lag_basis.terms must be between 1 and 4");
    if (cfg.lags < 1) throw contract_error("lag_basis.lags must be positive");
    config.lag_basis = cfg;
  }

  if (j.contains("quadrature")) {
    const json& sched = j["quadrature"];
    if (!sched.is_array() || sched.empty())
      throw contract_error("config.quadrature: expected a non-empty array of [points, max_iter]");
    for (const json& stage : sched) {
      if (!stage.is_array() || stage.size() != 2)
        throw contract_error("config.quadrature: each stage is a [points, max_iter] pair");
      int pts = as_int(stage[0], "quadrature.points");
      int iters = as_int(stage[1], "quadrature.max_iter");
      if (pts < 1 || iters < 1) throw contract_error("config.quadrature: entries must be positive");
      config.q_schedule.emplace_back(pts, iters);
    }
  }

  if (j.contains("optimizer")) {
    const json& opt = j["optimizer"];
    if (!opt.is_object()) throw contract_error("config.optimizer: expected an object");
    check_keys(opt, "config.optimizer", {"grad_tol", "param_tol", "max_halvings", "ridge"});
    if (opt.contains("grad_tol"))
      config.optimizer.grad_tol = as_number(opt["grad_tol"], "optimizer.grad_tol");
    if (opt.contains("param_tol"))
      config.optimizer.param_tol = as_number(opt["param_tol"], "optimizer.param_tol");
    if (opt.contains("max_halvings"))
      config.optimizer.max_halvings = as_int(opt["max_halvings"], "optimizer.max_halvings");
    if (opt.contains("ridge")) config.optimizer.ridge = as_number(opt["ridge"], "optimizer.ridge");
    if (config.optimizer.grad_tol <= 0 || config.optimizer.param_tol <= 0 ||
        config.optimizer.ridge <= 0 || config.optimizer.max_halvings < 1)
      throw contract_error("config.optimizer: tolerances must be positive");
  }

  if (j.contains("seed")) {
    const json& seed = j["seed"];
    if (!seed.is_number_unsigned() && !seed.is_number_integer())
      throw contract_error("config.seed: expected a non-negative integer");
    long long s = seed.get<long long>();
    if (s < 0) throw contract_error("config.seed: expected a non-negative integer");
    config.seed = static_cast<uint64_t>(s);
  }

  if (j.contains("simulate")) config.simulate = parse_simulate(j["simulate"]);

  std::vector<std::string> fixed_names;
  for (const auto& fe : config.fixed_effects) fixed_names.push_back(fe.covariate);
  check_unique_names(fixed_names, "config.fixed_effects");
  check_unique_names(config.random_effects.covariates, "config.random_effects");
  return config;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw contract_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw contract_error(path + ": " + e.what());
  }
  return parse_config(j);
}

BuiltModel build_from_table(const ModelConfig& config, const CsvTable& table) {
  auto need_col = [&](const std::string& name) {
    int c = table.col(name);
    if (c < 0) throw contract_error("data: missing column '" + name + "'");
    return c;
  };
  const int c_series = need_col(config.series_col);
  const int c_time = need_col(config.time_col);
  const int c_resp = need_col(config.response_col);
  int c_trials = -1;
  if (!config.trials_col.empty()) c_trials = need_col(config.trials_col);
  if (config.family == Family::binomial && c_trials < 0)
    throw contract_error("data: binomial family requires a trials column (config columns.trials)");

  // Series blocks in order of first appearance; times must run 1..n in order.
  std::vector<std::string> ids;
  std::map<std::string, int> index;
  std::vector<std::vector<size_t>> rows_of;
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& id = table.rows[r][c_series];
    auto [it, inserted] = index.emplace(id, static_cast<int>(ids.size()));
    if (inserted) {
      ids.push_back(id);
      rows_of.emplace_back();
    }
    rows_of[it->second].push_back(r);
  }
  if (ids.empty()) throw contract_error("data: no rows");
  for (size_t j = 0; j < ids.size(); ++j) {
    for (size_t k = 0; k < rows_of[j].size(); ++k) {
      const size_t r = rows_of[j][k];
      const std::string ctx =
          "data line " + std::to_string(CsvTable::line_of_row(r)) + " (" + config.time_col + ")";
      double t = parse_number(table.rows[r][c_time], ctx);
      if (t != static_cast<double>(k + 1))
        throw contract_error("data line " + std::to_string(CsvTable::line_of_row(r)) +
                             ": series '" + ids[j] + "' must have " + config.time_col + " = 1..n " +
                             "in order (expected " + std::to_string(k + 1) + ")");
    }
  }

  // Covariate sources: a data column, the synthesized intercept, or a
  // generated lag-basis term.
  std::vector<std::string> fixed_names;
  for (const auto& fe : config.fixed_effects) fixed_names.push_back(fe.covariate);
  const std::vector<std::string>& re_names = config.random_effects.covariates;

  Eigen::MatrixXd basis;
  std::vector<std::string> basis_names;
  int c_basis_input = -1;
  if (config.lag_basis) {
    c_basis_input = need_col(config.lag_basis->input);
    basis = basis_matrix(config.lag_basis->terms, config.lag_basis->lags);
    for (int k = 1; k <= config.lag_basis->terms; ++k) {
      std::string name = config.lag_basis->input + "_b" + std::to_string(k);
      if (table.col(name) >= 0)
        throw contract_error("lag_basis: generated name '" + name + "' collides with a data column");
      basis_names.push_back(std::move(name));
    }
  }
  auto basis_term = [&](const std::string& name) {
    for (size_t k = 0; k < basis_names.size(); ++k)
      if (basis_names[k] == name) return static_cast<int>(k);
    return -1;
  };
  auto check_source = [&](const std::string& name, const std::string& where) {
    if (name == "intercept" && table.col(name) < 0) return;
    if (basis_term(name) >= 0) return;
    if (table.col(name) < 0)
      throw contract_error(where + ": covariate '" + name + "' is not a data column" +
                           (config.lag_basis ? ", 'intercept', or a lag-basis term" : " or 'intercept'"));
  };
  for (const auto& n : fixed_names) check_source(n, "fixed_effects");
  for (const auto& n : re_names) check_source(n, "random_effects");

  BuiltModel model;
  model.lag_basis = config.lag_basis;
  model.basis = basis;
  for (const auto& bn : basis_names) {
    auto it = std::find(fixed_names.begin(), fixed_names.end(), bn);
    model.basis_x_cols.push_back(it == fixed_names.end() ? -1
                                                         : static_cast<int>(it - fixed_names.begin()));
  }

  // Assemble per-series data.
  for (size_t j = 0; j < ids.size(); ++j) {
    const auto& rows = rows_of[j];
    const long n = static_cast<long>(rows.size());
    SeriesData s;
    s.id = ids[j];
    s.y.resize(n);
    s.m.resize(n);
    for (long t = 0; t < n; ++t) {
      const size_t r = rows[t];
      const std::string line = std::to_string(CsvTable::line_of_row(r));
      s.y[t] = parse_number(table.rows[r][c_resp], "data line " + line + " (" +
                                                       config.response_col + ")");
      s.m[t] = c_trials < 0 ? 1.0
                            : parse_number(table.rows[r][c_trials],
                                           "data line " + line + " (" + config.trials_col + ")");
    }
    Eigen::MatrixXd basis_cols;
    if (config.lag_basis) {
      Eigen::VectorXd input(n);
      for (long t = 0; t < n; ++t)
        input[t] = parse_number(table.rows[rows[t]][c_basis_input],
                                "data line " + std::to_string(CsvTable::line_of_row(rows[t])) +
                                    " (" + config.lag_basis->input + ")");
      basis_cols = lag_covariates(input, basis);
    }
    auto fill = [&](const std::vector<std::string>& names, Eigen::MatrixXd& dest) {
      dest.resize(n, static_cast<long>(names.size()));
      for (size_t c = 0; c < names.size(); ++c) {
        int bt = basis_term(names[c]);
        int dc = table.col(names[c]);
        if (bt >= 0) {
          dest.col(static_cast<long>(c)) = basis_cols.col(bt);
        } else if (dc >= 0) {
          for (long t = 0; t < n; ++t)
            dest(t, static_cast<long>(c)) =
                parse_number(table.rows[rows[t]][dc],
                             "data line " + std::to_string(CsvTable::line_of_row(rows[t])) + " (" +
                                 names[c] + ")");
        } else {
          dest.col(static_cast<long>(c)).setOnes();  // intercept
        }
      }
    };
    fill(fixed_names, s.x);
    fill(re_names, s.r);
    model.data.series.push_back(std::move(s));
  }

  SpecBuild built = build_spec(config, ids, fixed_names, re_names);
  model.spec = std::move(built.spec);
  model.param_names = std::move(built.param_names);
  model.param_components = std::move(built.param_components);
  model.fixed_names = fixed_names;
  model.re_names = re_names;
  validate_panel(model.data, model.spec);
  return model;
}

BuiltSimulation build_simulation(const ModelConfig& config, uint64_t seed) {
  if (!config.simulate) throw contract_error("config: no 'simulate' section");
  if (config.lag_basis)
    throw contract_error("config: lag_basis is not available when simulating");
  const SimulateConfig& sim = *config.simulate;

  std::vector<std::string> fixed_names;
  for (const auto& fe : config.fixed_effects) fixed_names.push_back(fe.covariate);
  const std::vector<std::string>& re_names = config.random_effects.covariates;

  std::vector<std::string> cov_names;
  for (const auto& c : sim.covariates) cov_names.push_back(c.name);
  check_unique_names(cov_names, "simulate.covariates");
  auto cov_pos = [&](const std::string& n) {
    auto it = std::find(cov_names.begin(), cov_names.end(), n);
    if (it == cov_names.end())
      throw contract_error("simulate: covariate '" + n + "' is not declared");
    return static_cast<int>(it - cov_names.begin());
  };
  // The simulator assembles X and R in covariate declaration order, so the
  // model lists must respect that order.
  auto check_order = [&](const std::vector<std::string>& names, const std::string& where) {
    int prev = -1;
    for (const auto& n : names) {
      int pos = cov_pos(n);
      if (pos <= prev)
        throw contract_error(where + ": list '" + n +
                             "' out of order; follow simulate.covariates declaration order");
      prev = pos;
    }
  };
  check_order(fixed_names, "fixed_effects");
  check_order(re_names, "random_effects");
  for (const auto& n : cov_names) {
    if (std::find(fixed_names.begin(), fixed_names.end(), n) == fixed_names.end() &&
        std::find(re_names.begin(), re_names.end(), n) == re_names.end())
      throw contract_error("simulate: covariate '" + n + "' is used by neither fixed_effects nor random_effects");
  }

  std::vector<std::string> ids;
  for (int j = 1; j <= sim.n_series; ++j) ids.push_back("s" + std::to_string(j));

  SpecBuild built = build_spec(config, ids, fixed_names, re_names);
  const ParamLayout layout = built.spec.layout();
  auto check_len = [&](const std::vector<double>& v, int expect, const char* what) {
    if (static_cast<int>(v.size()) != expect)
      throw contract_error("simulate.true." + std::string(what) + ": expected " +
                           std::to_string(expect) + " values, got " + std::to_string(v.size()));
  };
  check_len(sim.true_fixed, layout.n_reg, "fixed");
  check_len(sim.true_serial, layout.n_arma, "serial");
  check_len(sim.true_factor, layout.n_chol, "factor");
  Eigen::VectorXd truth(layout.total());
  for (int i = 0; i < layout.n_reg; ++i) truth[i] = sim.true_fixed[i];
  for (int i = 0; i < layout.n_arma; ++i) truth[layout.n_reg + i] = sim.true_serial[i];
  for (int i = 0; i < layout.n_chol; ++i) truth[layout.n_reg + layout.n_arma + i] = sim.true_factor[i];

  SimSpec spec;
  for (int j = 0; j < sim.n_series; ++j)
    spec.n_per_series.push_back(sim.lengths.size() == 1 ? sim.lengths[0]
                                                        : sim.lengths[static_cast<size_t>(j)]);
  spec.trials = config.family == Family::binomial ? static_cast<double>(sim.trials) : 1.0;
  for (const auto& c : sim.covariates) {
    SimCovariate sc;
    sc.name = c.name;
    sc.kind = c.kind == "constant" ? SimCovariate::Kind::constant : SimCovariate::Kind::white_noise;
    sc.value = c.value;
    sc.sd = c.sd;
    sc.in_x = std::find(fixed_names.begin(), fixed_names.end(), c.name) != fixed_names.end();
    sc.in_r = std::find(re_names.begin(), re_names.end(), c.name) != re_names.end();
    spec.covariates.push_back(std::move(sc));
  }
  spec.model = built.spec;
  spec.true_params = truth;
  spec.seed = seed;
  spec.ids = ids;

  BuiltSimulation out;
  out.sim = simulate_panel(spec);
  out.model.data = out.sim.data;
  out.model.spec = std::move(built.spec);
  out.model.param_names = std::move(built.param_names);
  out.model.param_components = std::move(built.param_components);
  out.model.fixed_names = fixed_names;
  out.model.re_names = re_names;
  out.covariate_names = cov_names;
  validate_panel(out.model.data, out.model.spec);
  return out;
}

Eigen::VectorXd read_params(const BuiltModel& model, const CsvTable& table) {
  int c_name = table.col("parameter");
  int c_value = table.col("value");
  if (c_name < 0 || c_value < 0)
    throw contract_error("parameter file needs 'parameter' and 'value' columns");
  std::map<std::string, int> index;
  for (size_t i = 0; i < model.param_names.size(); ++i)
    index[model.param_names[i]] = static_cast<int>(i);
  Eigen::VectorXd params(model.param_names.size());
  std::vector<bool> seen(model.param_names.size(), false);
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& name = table.rows[r][c_name];
    auto it = index.find(name);
    if (it == index.end())
      throw contract_error("parameter file: unknown parameter '" + name + "'");
    if (seen[it->second])
      throw contract_error("parameter file: parameter '" + name + "' appears twice");
    seen[it->second] = true;
    params[it->second] = parse_number(table.rows[r][c_value], "parameter '" + name + "'");
  }
  for (size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw contract_error("parameter file: missing parameter '" + model.param_names[i] + "'");
  return params;
}

}  // namespace glarmix
