#include "glarmix/simulate.hpp"

#include <cmath>

#include "glarmix/errors.hpp"
#include "glarmix/rng.hpp"

namespace glarmix {

SimResult simulate_panel(const SimSpec& spec) {
  const int n_series = static_cast<int>(spec.n_per_series.size());
  if (n_series == 0) throw contract_error("simulate_panel: no series requested");
  if (static_cast<int>(spec.model.orders.size()) != n_series)
    throw contract_error("simulate_panel: one ArmaOrder required per series");
  if (!spec.ids.empty() && static_cast<int>(spec.ids.size()) != n_series)
    throw contract_error("simulate_panel: id list length does not match series count");

  const ParamLayout layout = spec.model.layout();
  if (spec.true_params.size() != layout.total())
    throw contract_error("simulate_panel: true parameter vector has the wrong length");

  const int d = spec.model.re_structure.dim();
  const Eigen::MatrixXd chol = lambda_to_L(layout.chol(spec.true_params), spec.model.re_structure);

  int n_x = 0, n_r = 0;
  for (const auto& cov : spec.covariates) {
    if (cov.in_x) ++n_x;
    if (cov.in_r) ++n_r;
  }
  if (n_r != d)
    throw contract_error("simulate_panel: random-effect covariate count must equal the structure dimension");

  const Eigen::VectorXd beta_stack = spec.model.constraints.reg * layout.reg(spec.true_params);
  const Eigen::VectorXd arma_stack = spec.model.constraints.arma * layout.arma(spec.true_params);

  SimResult out;
  out.data.series.resize(n_series);
  out.latents.resize(n_series);

  for (int j = 0; j < n_series; ++j) {
    const long n = spec.n_per_series[j];
    if (n < 1) throw contract_error("simulate_panel: series length must be >= 1");
    std::mt19937_64 rng = series_stream(spec.seed, static_cast<std::uint64_t>(j));

    SeriesLatents& lat = out.latents[j];
    lat.z.resize(d);
    for (int a = 0; a < d; ++a) lat.z[a] = draw_normal(rng);
    lat.u = chol * lat.z;

    // Covariate columns, in declaration order; noise consumed in t order.
    Eigen::MatrixXd cols(n, spec.covariates.size());
    for (int c = 0; c < static_cast<int>(spec.covariates.size()); ++c) {
      const SimCovariate& cov = spec.covariates[c];
      switch (cov.kind) {
        case SimCovariate::Kind::constant:
          cols.col(c).setConstant(cov.value);
          break;
        case SimCovariate::Kind::white_noise:
          for (long t = 0; t < n; ++t) cols(t, c) = cov.sd * draw_normal(rng);
          break;
        case SimCovariate::Kind::supplied:
          if (static_cast<int>(cov.supplied.size()) != n_series ||
              cov.supplied[j].size() != n)
            throw contract_error("simulate_panel: supplied covariate '" + cov.name +
                                 "' has wrong dimensions");
          cols.col(c) = cov.supplied[j];
          break;
      }
    }

    SeriesData& s = out.data.series[j];
    s.id = spec.ids.empty() ? "s" + std::to_string(j + 1) : spec.ids[j];
    s.x.resize(n, n_x);
    s.r.resize(n, d);
    {
      int ix = 0, ir = 0;
      for (int c = 0; c < static_cast<int>(spec.covariates.size()); ++c) {
        if (spec.covariates[c].in_x) s.x.col(ix++) = cols.col(c);
        if (spec.covariates[c].in_r) s.r.col(ir++) = cols.col(c);
      }
    }
    s.y.resize(n);
    s.m = Eigen::VectorXd::Constant(n, spec.model.family == Family::poisson ? 1.0 : spec.trials);

    const int b = n_x;
    const Eigen::VectorXd beta = beta_stack.segment(spec.model.constraints.reg_offset[j], b);
    const ArmaOrder ord = spec.model.orders[j];
    const Eigen::VectorXd tau =
        arma_stack.segment(spec.model.constraints.arma_offset[j], ord.p + ord.q);
    const Eigen::VectorXd ar = tau.head(ord.p);
    const Eigen::VectorXd ma = tau.tail(ord.q);

    lat.w.resize(n);
    lat.e.resize(n);
    Eigen::VectorXd feedback(n);
    for (long t = 0; t < n; ++t) {
      double fb = 0.0;
      for (int l = 1; l <= ord.p && l <= t; ++l)
        fb += ar[l - 1] * (feedback[t - l] + lat.e[t - l]);
      for (int l = 1; l <= ord.q && l <= t; ++l) fb += ma[l - 1] * lat.e[t - l];
      feedback[t] = fb;
      double w = fb + s.r.row(t).dot(lat.u);
      if (b > 0) w += s.x.row(t).dot(beta);
      if (!std::isfinite(w))
        throw divergence_error("simulate_panel: recursion diverged in series '" + s.id +
                                   "' at t = " + std::to_string(t + 1),
                               t + 1);
      lat.w[t] = w;
      try {
        s.y[t] = sample_response(w, s.m[t], spec.model.family, rng);
      } catch (const divergence_error& e) {
        throw divergence_error(std::string(e.what()) + " [series '" + s.id + "', t = " +
                                   std::to_string(t + 1) + "]",
                               t + 1);
      }
      lat.e[t] = pearson_residual(s.y[t], w, s.m[t], spec.model.family).value;
    }
  }
  return out;
}

}  // namespace glarmix
