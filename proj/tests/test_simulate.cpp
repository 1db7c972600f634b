#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "glarmix/errors.hpp"
#include "glarmix/filter.hpp"
#include "glarmix/model.hpp"
#include "glarmix/ranef.hpp"
#include "glarmix/simulate.hpp"

using namespace glarmix;

namespace {

ModelSpec flat_spec(Family family, int n_series, int b, int p, int q, int d) {
  ModelSpec spec;
  spec.family = family;
  spec.orders.assign(n_series, {p, q});
  spec.constraints.reg = Eigen::MatrixXd::Zero(n_series * b, b);
  spec.constraints.arma = Eigen::MatrixXd::Zero(n_series * (p + q), p + q);
  for (int j = 0; j < n_series; ++j) {
    spec.constraints.reg.block(j * b, 0, b, b) = Eigen::MatrixXd::Identity(b, b);
    spec.constraints.arma.block(j * (p + q), 0, p + q, p + q) =
        Eigen::MatrixXd::Identity(p + q, p + q);
    spec.constraints.reg_offset.push_back(j * b);
    spec.constraints.arma_offset.push_back(j * (p + q));
  }
  spec.re_structure = LStructure::full(d);
  spec.re_fixed_link.assign(d, -1);
  return spec;
}

SimCovariate intercept_cov(bool in_r) {
  SimCovariate c;
  c.name = "intercept";
  c.kind = SimCovariate::Kind::constant;
  c.value = 1.0;
  c.in_x = true;
  c.in_r = in_r;
  return c;
}

}  // namespace

TEST_CASE("a flat binary model draws fair coins") {
  SimSpec spec;
  spec.n_per_series.assign(10, 500);
  spec.covariates = {intercept_cov(false)};
  spec.model = flat_spec(Family::binary, 10, 1, 0, 0, 0);
  spec.true_params = Eigen::VectorXd::Zero(1);  // logit 0 -> p = 1/2
  spec.seed = 2024;
  auto res = simulate_panel(spec);

  REQUIRE(res.data.n_series() == 10);
  double total = 0.0;
  long count = 0;
  for (const auto& s : res.data.series) {
    REQUIRE(s.n() == 500);
    for (long t = 0; t < s.n(); ++t) {
      CHECK((s.y[t] == 0.0 || s.y[t] == 1.0));
      total += s.y[t];
    }
    count += s.n();
  }
  double mean = total / count;
  CHECK(std::abs(mean - 0.5) < 4 * std::sqrt(0.25 / count));
  // default ids
  CHECK(res.data.series[0].id == "s1");
  CHECK(res.data.series[9].id == "s10");
}

TEST_CASE("equal seeds give bit-identical panels, different seeds do not") {
  SimSpec spec;
  spec.n_per_series.assign(4, 60);
  spec.covariates = {intercept_cov(true)};
  SimCovariate noise;
  noise.name = "x1";
  noise.kind = SimCovariate::Kind::white_noise;
  noise.sd = 0.7;
  noise.in_x = true;
  spec.covariates.push_back(noise);
  spec.model = flat_spec(Family::poisson, 4, 2, 1, 0, 1);
  spec.true_params.resize(4);
  spec.true_params << 0.4, 0.3, 0.2, 0.5;  // b0, b1, phi, sigma
  spec.seed = 99;

  auto a = simulate_panel(spec);
  auto b = simulate_panel(spec);
  for (int j = 0; j < 4; ++j) {
    CHECK((a.data.series[j].y.array() == b.data.series[j].y.array()).all());
    CHECK((a.data.series[j].x.array() == b.data.series[j].x.array()).all());
    CHECK((a.latents[j].w.array() == b.latents[j].w.array()).all());
    CHECK(a.latents[j].z[0] == b.latents[j].z[0]);
  }

  spec.seed = 100;
  auto c = simulate_panel(spec);
  bool same = true;
  for (int j = 0; j < 4; ++j)
    same = same && (a.data.series[j].y.array() == c.data.series[j].y.array()).all();
  CHECK_FALSE(same);
}

TEST_CASE("the recursion filter reproduces the simulated paths exactly") {
  SimSpec spec;
  spec.n_per_series.assign(5, 80);
  spec.covariates = {intercept_cov(true)};
  SimCovariate noise;
  noise.name = "x1";
  noise.kind = SimCovariate::Kind::white_noise;
  noise.sd = 0.6;
  noise.in_x = true;
  spec.covariates.push_back(noise);
  spec.model = flat_spec(Family::binomial, 5, 2, 1, 1, 1);
  spec.trials = 6.0;
  spec.true_params.resize(5);
  spec.true_params << -0.2, 0.4, 0.35, 0.2, 0.8;  // b0, b1, phi, theta, sigma
  spec.seed = 7;
  auto res = simulate_panel(spec);

  Eigen::VectorXd beta(2);
  beta << -0.2, 0.4;
  ArmaParams arma;
  arma.ar.resize(1);
  arma.ar << 0.35;
  arma.ma.resize(1);
  arma.ma << 0.2;
  for (int j = 0; j < 5; ++j) {
    const SeriesData& s = res.data.series[j];
    CHECK((s.m.array() == 6.0).all());
    CHECK((s.y.array() <= s.m.array()).all());
    Eigen::VectorXd offset = s.r * res.latents[j].u;
    auto out = glarma_filter(s.y, s.m, Family::binomial, s.x, beta, offset, arma, 0);
    CHECK((out.linpred - res.latents[j].w).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((out.resid - res.latents[j].e).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("random effects have the covariance the factor dictates") {
  const int n_series = 2000;
  SimSpec spec;
  spec.n_per_series.assign(n_series, 2);  // lengths don't matter for this check
  spec.covariates = {intercept_cov(true)};
  SimCovariate slope;
  slope.name = "x1";
  slope.kind = SimCovariate::Kind::white_noise;
  slope.sd = 1.0;
  slope.in_x = true;
  slope.in_r = true;
  spec.covariates.push_back(slope);
  spec.model = flat_spec(Family::binary, n_series, 2, 0, 0, 2);
  spec.true_params.resize(5);
  // L = [1, 0; 0.5, 0.8] packed column-major
  spec.true_params << 0.0, 0.0, 1.0, 0.5, 0.8;
  spec.seed = 31;
  auto res = simulate_panel(spec);

  Eigen::MatrixXd l(2, 2);
  l << 1.0, 0.0, 0.5, 0.8;
  Eigen::MatrixXd sigma = l * l.transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  for (const auto& lat : res.latents) mean += lat.u;
  mean /= n_series;
  for (const auto& lat : res.latents) {
    Eigen::VectorXd d = lat.u - mean;
    cov += d * d.transpose();
  }
  cov /= n_series - 1;
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      double se = std::sqrt((sigma(i, i) * sigma(k, k) + sigma(i, k) * sigma(i, k)) / n_series);
      CHECK(std::abs(cov(i, k) - sigma(i, k)) < 5 * se);
    }
  }
  // u = L z holds per draw
  for (int j = 0; j < 10; ++j)
    CHECK((res.latents[j].u - l * res.latents[j].z).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("positive feedback leaves its mark on the latent path") {
  SimSpec spec;
  const int n = 300;
  spec.n_per_series.assign(20, n);
  spec.covariates = {intercept_cov(false)};
  spec.model = flat_spec(Family::poisson, 20, 1, 1, 0, 0);
  spec.true_params.resize(2);
  spec.true_params << 1.0, 0.7;  // intercept, phi
  spec.seed = 55;
  auto res = simulate_panel(spec);

  for (int j = 0; j < 20; ++j) {
    // autocorrelation of the feedback component alpha_t = w_t - intercept
    Eigen::VectorXd alpha = res.latents[j].w.array() - 1.0;
    double num = 0.0, den = 0.0, mu = alpha.mean();
    for (int t = 1; t < n; ++t) num += (alpha[t] - mu) * (alpha[t - 1] - mu);
    for (int t = 0; t < n; ++t) den += (alpha[t] - mu) * (alpha[t] - mu);
    CHECK(num / den > 0.0);
  }
}

TEST_CASE("per-series lengths are honoured") {
  SimSpec spec;
  spec.n_per_series = {5, 9, 3};
  spec.covariates = {intercept_cov(false)};
  spec.model = flat_spec(Family::binary, 3, 1, 0, 0, 0);
  spec.true_params = Eigen::VectorXd::Zero(1);
  spec.ids = {"a", "b", "c"};
  auto res = simulate_panel(spec);
  CHECK(res.data.series[0].n() == 5);
  CHECK(res.data.series[1].n() == 9);
  CHECK(res.data.series[2].n() == 3);
  CHECK(res.data.series[1].id == "b");
}

TEST_CASE("an explosive poisson recursion fails loudly instead of hanging") {
  SimSpec spec;
  spec.n_per_series.assign(1, 400);
  spec.covariates = {intercept_cov(false)};
  spec.model = flat_spec(Family::poisson, 1, 1, 1, 0, 0);
  spec.true_params.resize(2);
  // alternating explosive feedback guarantees arbitrarily large positive means
  spec.true_params << 5.0, -2.5;
  spec.seed = 3;
  CHECK_THROWS_AS(simulate_panel(spec), divergence_error);
}

TEST_CASE("spec shape errors are caught up front") {
  SimSpec spec;
  spec.n_per_series.assign(2, 10);
  spec.covariates = {intercept_cov(false)};
  spec.model = flat_spec(Family::binary, 2, 1, 0, 0, 0);
  spec.true_params = Eigen::VectorXd::Zero(3);  // wrong length
  CHECK_THROWS_AS(simulate_panel(spec), contract_error);

  spec.true_params = Eigen::VectorXd::Zero(1);
  spec.ids = {"only-one"};
  CHECK_THROWS_AS(simulate_panel(spec), contract_error);
}
