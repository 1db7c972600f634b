#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "glarmix/errors.hpp"
#include "glarmix/marginal.hpp"
#include "glarmix/model.hpp"
#include "glarmix/quadrature.hpp"
#include "glarmix/rng.hpp"

using namespace glarmix;

namespace {

// Fixture: one binary series with intercept + slope, one AR lag, and a scalar
// random intercept. Packed parameters are (b0, b1, phi, sigma).
struct Scalar1 {
  PanelData data;
  ModelSpec spec;
};

Scalar1 make_scalar1(int n, uint64_t seed, int n_series = 1) {
  Scalar1 f;
  auto rng = series_stream(seed, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < n_series; ++j) {
    SeriesData s;
    s.id = "s" + std::to_string(j + 1);
    s.y.resize(n);
    s.m = Eigen::VectorXd::Ones(n);
    s.x.resize(n, 2);
    s.r = Eigen::MatrixXd::Ones(n, 1);
    for (int t = 0; t < n; ++t) {
      s.x(t, 0) = 1.0;
      s.x(t, 1) = 0.8 * gauss(rng);
      s.y[t] = (rng() >> 13) % 2 ? 1.0 : 0.0;
    }
    f.data.series.push_back(std::move(s));
  }
  f.spec.family = Family::binary;
  f.spec.orders.assign(n_series, {1, 0});
  const int b = 2;
  f.spec.constraints.reg = Eigen::MatrixXd::Zero(n_series * b, b);
  f.spec.constraints.arma = Eigen::MatrixXd::Zero(n_series, 1);
  for (int j = 0; j < n_series; ++j) {
    f.spec.constraints.reg.block(j * b, 0, b, b) = Eigen::MatrixXd::Identity(b, b);
    f.spec.constraints.arma(j, 0) = 1.0;
    f.spec.constraints.reg_offset.push_back(j * b);
    f.spec.constraints.arma_offset.push_back(j);
  }
  f.spec.re_structure = LStructure::full(1);
  f.spec.re_fixed_link = {0};
  return f;
}

// Independent reimplementation of the conditional log likelihood for the
// fixture above, written directly from the recursion definition. Uses the
// stable softplus forms and the same +-700 linear-predictor cap as the
// likelihood, so far-tail evaluations stay finite.
double cond_loglik(const SeriesData& s, double b0, double b1, double phi, double u) {
  auto softplus = [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); };
  double alpha = 0.0, prev_e = 0.0, prev_alpha = 0.0, ll = 0.0;
  for (long t = 0; t < s.n(); ++t) {
    alpha = t == 0 ? 0.0 : phi * (prev_alpha + prev_e);
    double w = b0 + b1 * s.x(t, 1) + s.r(t, 0) * u + alpha;
    w = std::min(700.0, std::max(-700.0, w));
    double sp_neg = softplus(-w);  // -log p
    double sp_pos = softplus(w);   // -log (1-p)
    ll += s.y[t] == 1.0 ? -sp_neg : -sp_pos;
    double p = std::exp(-sp_neg);
    double pq = std::exp(-(sp_neg + sp_pos));
    prev_e = (s.y[t] - p) / std::sqrt(pq);
    prev_alpha = alpha;
  }
  return ll;
}

struct SimpsonResult {
  double logint;
  double post_mean;
};

// Composite Simpson for log integral phi(z) exp(cond(sigma z)) dz and the
// posterior mean of z, on [-zmax, zmax].
SimpsonResult simpson_scalar1(const SeriesData& s, double b0, double b1, double phi, double sigma,
                              double zmax, int panels) {
  const double h = 2 * zmax / panels;
  double num0 = 0.0, num1 = 0.0;
  // accumulate in shifted form to dodge underflow: track max exponent first
  std::vector<double> logf(panels + 1);
  double peak = -1e300;
  for (int i = 0; i <= panels; ++i) {
    double z = -zmax + i * h;
    logf[i] = cond_loglik(s, b0, b1, phi, sigma * z) - 0.5 * z * z -
              0.5 * std::log(2 * 3.14159265358979323846);
    peak = std::max(peak, logf[i]);
  }
  for (int i = 0; i <= panels; ++i) {
    double z = -zmax + i * h;
    double wgt = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    double f = std::exp(logf[i] - peak);
    num0 += wgt * f;
    num1 += wgt * f * z;
  }
  num0 *= h / 3.0;
  num1 *= h / 3.0;
  return {peak + std::log(num0), num1 / num0};
}

Eigen::VectorXd pack4(double b0, double b1, double phi, double sigma) {
  Eigen::VectorXd p(4);
  p << b0, b1, phi, sigma;
  return p;
}

}  // namespace

TEST_CASE("inner optimizer solves a quadratic exponent in one step") {
  Eigen::VectorXd a(2);
  a << 0.6, -1.1;
  Eigen::MatrixXd p(2, 2);
  p << 2.0, 0.3, 0.3, 1.5;
  ExponentFn f = [&](const Eigen::VectorXd& z, int want) {
    FEval ev;
    Eigen::VectorXd dz = z - a;
    ev.value = 3.2 - 0.5 * dz.dot(p * dz);
    if (want >= 1) ev.grad = -p * dz;
    if (want >= 2) ev.hess = -p;
    return ev;
  };
  auto sol = inner_mode(f, 2);
  CHECK((sol.mode - a).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(sol.iterations == 1);
  CHECK((sol.cov - p.inverse()).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(laplace_loglik(sol) ==
        doctest::Approx(3.2 - 0.5 * std::log(p.determinant())).epsilon(1e-12));
}

TEST_CASE("inner optimizer handles a non-concave start and rejects a saddle") {
  // concave quartic, mode away from the origin
  ExponentFn good = [](const Eigen::VectorXd& z, int want) {
    FEval ev;
    double d = z[0] - 1.0;
    ev.value = -std::pow(d, 4) - d * d;
    if (want >= 1) {
      ev.grad.resize(1);
      ev.grad[0] = -4 * d * d * d - 2 * d;
    }
    if (want >= 2) {
      ev.hess.resize(1, 1);
      ev.hess(0, 0) = -12 * d * d - 2;
    }
    return ev;
  };
  auto sol = inner_mode(good, 1);
  CHECK(sol.mode[0] == doctest::Approx(1.0).epsilon(1e-7));

  // gradient vanishes at the start but curvature is positive there
  ExponentFn saddle = [](const Eigen::VectorXd& z, int want) {
    FEval ev;
    ev.value = z[0] * z[0] - 0.25 * std::pow(z[0], 4);
    if (want >= 1) {
      ev.grad.resize(1);
      ev.grad[0] = 2 * z[0] - std::pow(z[0], 3);
    }
    if (want >= 2) {
      ev.hess.resize(1, 1);
      ev.hess(0, 0) = 2 - 3 * z[0] * z[0];
    }
    return ev;
  };
  CHECK_THROWS_AS(inner_mode(saddle, 1), inner_failure);
}

TEST_CASE("single-node quadrature reproduces the curvature-corrected mode value") {
  auto fx = make_scalar1(40, 5);
  Eigen::VectorXd params = pack4(0.3, -0.5, 0.25, 0.9);
  ExponentFn f = series_exponent(fx.data.series[0], fx.spec, 0, params);
  auto sol = inner_mode(f, 1);
  double lap = laplace_loglik(sol);
  double agq1 = agq_log_integral(f, sol, gauss_hermite(1));
  CHECK(agq1 == doctest::Approx(lap).epsilon(1e-14));

  auto bundle = agq_series(fx.data.series[0], fx.spec, 0, params, 1, 0);
  CHECK(bundle.loglik == doctest::Approx(lap).epsilon(1e-13));
}

TEST_CASE("quadrature is exact for gaussian exponents at every grid size") {
  // F(z) = c - (z-a)' P (z-a)/2; log (2pi)^{-d/2} int exp F = c - log det P / 2
  for (int d : {1, 2, 3}) {
    std::mt19937_64 rng(17 + d);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd a(d);
    for (int i = 0; i < d; ++i) a[i] = gauss(rng);
    Eigen::MatrixXd root = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      for (int k = 0; k <= i; ++k) root(i, k) = 0.4 * gauss(rng);
      root(i, i) = 1.0 + 0.3 * std::abs(root(i, i));
    }
    Eigen::MatrixXd p = root * root.transpose();
    const double c = 0.7;
    ExponentFn f = [&](const Eigen::VectorXd& z, int want) {
      FEval ev;
      Eigen::VectorXd dz = z - a;
      ev.value = c - 0.5 * dz.dot(p * dz);
      if (want >= 1) ev.grad = -p * dz;
      if (want >= 2) ev.hess = -p;
      return ev;
    };
    auto sol = inner_mode(f, d);
    const double exact = c - 0.5 * std::log(p.determinant());
    for (int q = 1; q <= 7; ++q) {
      CHECK(agq_log_integral(f, sol, gauss_hermite(q)) ==
            doctest::Approx(exact).epsilon(1e-12));
    }
  }
}

TEST_CASE("marginal likelihood and posterior mean match a brute-force integral") {
  auto fx = make_scalar1(30, 11);
  const double b0 = 0.4, b1 = -0.6, phi = 0.3, sigma = 1.1;
  auto oracle = simpson_scalar1(fx.data.series[0], b0, b1, phi, sigma, 9.0, 40000);

  auto bundle = agq_series(fx.data.series[0], fx.spec, 0, pack4(b0, b1, phi, sigma), 20, 0);
  CHECK(bundle.loglik == doctest::Approx(oracle.logint).epsilon(1e-9));
  CHECK(bundle.re_mean[0] == doctest::Approx(oracle.post_mean).epsilon(1e-6));

  // a lower grid size is already close; a single node is not
  auto q5 = agq_series(fx.data.series[0], fx.spec, 0, pack4(b0, b1, phi, sigma), 5, 0);
  CHECK(std::abs(q5.loglik - oracle.logint) < 1e-4);
}

TEST_CASE("posterior mean of a symmetric gaussian exponent is exact") {
  Eigen::VectorXd a(1);
  a << 0.85;
  ExponentFn f = [&](const Eigen::VectorXd& z, int want) {
    FEval ev;
    double dz = z[0] - a[0];
    ev.value = -0.5 * 3.0 * dz * dz;
    if (want >= 1) {
      ev.grad.resize(1);
      ev.grad[0] = -3.0 * dz;
    }
    if (want >= 2) {
      ev.hess.resize(1, 1);
      ev.hess(0, 0) = -3.0;
    }
    return ev;
  };
  auto sol = inner_mode(f, 1);
  // the normalized point masses must average the grid back to the mode
  for (int q : {1, 2, 3, 7}) {
    double got = agq_log_integral(f, sol, gauss_hermite(q));
    CHECK(std::isfinite(got));
  }
}

TEST_CASE("analytic parameter derivatives agree with finite differences") {
  auto fx = make_scalar1(60, 23);
  Eigen::VectorXd params = pack4(0.2, -0.4, 0.2, 0.8);
  const int q = 8;
  PanelEval ev = panel_loglik(fx.data, fx.spec, params, q, 2);

  const double h = 1e-5;
  Eigen::VectorXd fd_grad(4);
  Eigen::MatrixXd fd_hess(4, 4);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd up = params, dn = params;
    up[i] += h;
    dn[i] -= h;
    PanelEval fu = panel_loglik(fx.data, fx.spec, up, q, 1);
    PanelEval fdn = panel_loglik(fx.data, fx.spec, dn, q, 1);
    fd_grad[i] = (fu.loglik - fdn.loglik) / (2 * h);
    fd_hess.col(i) = (fu.grad - fdn.grad) / (2 * h);
  }
  double gs = 1.0 + ev.grad.lpNorm<Eigen::Infinity>();
  double hs = 1.0 + ev.hess.lpNorm<Eigen::Infinity>();
  CHECK((ev.grad - fd_grad).lpNorm<Eigen::Infinity>() / gs < 1e-4);
  CHECK((ev.hess - 0.5 * (fd_hess + fd_hess.transpose())).lpNorm<Eigen::Infinity>() / hs < 1e-3);
}

TEST_CASE("a zero factor reduces the model to its fixed-effect core") {
  auto fx = make_scalar1(50, 31, 2);
  Eigen::VectorXd params = pack4(0.3, 0.5, 0.15, 0.0);  // sigma pinned at zero

  double direct = 0.0;
  for (const auto& s : fx.data.series) direct += cond_loglik(s, 0.3, 0.5, 0.15, 0.0);

  for (int q : {1, 4}) {
    PanelEval ev = panel_loglik(fx.data, fx.spec, params, q, 0);
    CHECK(ev.loglik == doctest::Approx(direct).epsilon(1e-12));
    for (const auto& zm : ev.re_means) CHECK(std::abs(zm[0]) < 1e-12);
  }
}

TEST_CASE("evaluation is bit-identical across worker counts") {
  auto fx = make_scalar1(40, 47, 6);
  Eigen::VectorXd params = pack4(0.1, -0.3, 0.2, 0.7);
  PanelEval base = panel_loglik(fx.data, fx.spec, params, 5, 2, 1);
  for (int workers : {2, 3, 8}) {
    PanelEval ev = panel_loglik(fx.data, fx.spec, params, 5, 2, workers);
    CHECK(ev.loglik == base.loglik);
    CHECK((ev.grad.array() == base.grad.array()).all());
    CHECK((ev.hess.array() == base.hess.array()).all());
  }
}

TEST_CASE("series order only permutes the reduction") {
  auto fx = make_scalar1(35, 53, 4);
  Eigen::VectorXd params = pack4(0.2, 0.1, 0.1, 0.6);
  PanelEval base = panel_loglik(fx.data, fx.spec, params, 4, 0);

  Scalar1 permuted = fx;
  std::swap(permuted.data.series[0], permuted.data.series[3]);
  std::swap(permuted.data.series[1], permuted.data.series[2]);
  PanelEval ev = panel_loglik(permuted.data, permuted.spec, params, 4, 0);
  CHECK(ev.loglik == doctest::Approx(base.loglik).epsilon(1e-13));
}

TEST_CASE("likelihood integral accounting follows the derivative order") {
  auto fx = make_scalar1(30, 61, 3);
  Eigen::VectorXd params = pack4(0.2, -0.2, 0.1, 0.5);
  // every series touches all four packed parameters
  PanelEval e0 = panel_loglik(fx.data, fx.spec, params, 3, 0);
  PanelEval e1 = panel_loglik(fx.data, fx.spec, params, 3, 1);
  PanelEval e2 = panel_loglik(fx.data, fx.spec, params, 3, 2);
  CHECK(e0.instr.integral_count == 3);
  CHECK(e1.instr.integral_count == 3 * (4 + 1));
  CHECK(e2.instr.integral_count == 3 * (4 + 1) * (4 + 1));
  CHECK(e2.instr.inner_iterations_total >= 3);
  CHECK(e2.instr.inner_iterations_max <= 25);
  CHECK(e2.instr.series_seconds.size() == 3);
}

TEST_CASE("per-series fixed effects scatter into disjoint packed blocks") {
  // two series with their own intercepts: packed = (b0[s1], b0[s2], sigma)
  Scalar1 fx;
  auto rng = series_stream(71, 1);
  for (int j = 0; j < 2; ++j) {
    SeriesData s;
    s.id = "s" + std::to_string(j + 1);
    const int n = 25;
    s.y.resize(n);
    s.m = Eigen::VectorXd::Ones(n);
    s.x = Eigen::MatrixXd::Ones(n, 1);
    s.r = Eigen::MatrixXd::Ones(n, 1);
    for (int t = 0; t < n; ++t) s.y[t] = (rng() >> 17) % 2 ? 1.0 : 0.0;
    fx.data.series.push_back(std::move(s));
  }
  fx.spec.family = Family::binary;
  fx.spec.orders.assign(2, {0, 0});
  fx.spec.constraints.reg = Eigen::MatrixXd::Identity(2, 2);
  fx.spec.constraints.arma = Eigen::MatrixXd::Zero(0, 0);
  fx.spec.constraints.reg_offset = {0, 1};
  fx.spec.constraints.arma_offset = {0, 0};
  fx.spec.re_structure = LStructure::full(1);
  fx.spec.re_fixed_link = {0};

  Eigen::VectorXd params(3);
  params << 0.4, -0.7, 0.6;
  PanelEval ev = panel_loglik(fx.data, fx.spec, params, 5, 2);
  // each series depends on its own intercept plus sigma: S_j = 2
  CHECK(ev.instr.integral_count == 2 * (2 + 1) * (2 + 1));

  // cross blocks between the two intercepts must vanish
  CHECK(ev.hess(0, 1) == 0.0);
  CHECK(ev.hess(1, 0) == 0.0);

  // and the packed gradient splits into the two independent problems
  PanelData solo1, solo2;
  solo1.series.push_back(fx.data.series[0]);
  solo2.series.push_back(fx.data.series[1]);
  ModelSpec sspec = fx.spec;
  sspec.orders = {{0, 0}};
  sspec.constraints.reg = Eigen::MatrixXd::Identity(1, 1);
  sspec.constraints.arma = Eigen::MatrixXd::Zero(0, 0);
  sspec.constraints.reg_offset = {0};
  sspec.constraints.arma_offset = {0};
  Eigen::VectorXd p1(2), p2(2);
  p1 << 0.4, 0.6;
  p2 << -0.7, 0.6;
  PanelEval ev1 = panel_loglik(solo1, sspec, p1, 5, 2);
  PanelEval ev2 = panel_loglik(solo2, sspec, p2, 5, 2);
  CHECK(ev.loglik == doctest::Approx(ev1.loglik + ev2.loglik).epsilon(1e-13));
  CHECK(ev.grad[0] == doctest::Approx(ev1.grad[0]).epsilon(1e-12));
  CHECK(ev.grad[1] == doctest::Approx(ev2.grad[0]).epsilon(1e-12));
  CHECK(ev.grad[2] == doctest::Approx(ev1.grad[1] + ev2.grad[1]).epsilon(1e-12));
}

TEST_CASE("inner failures carry the series index") {
  auto fx = make_scalar1(20, 83, 3);
  // an absurd factor scale makes the exponent numerically hopeless
  Eigen::VectorXd params = pack4(0.0, 0.0, 0.0, 1e155);
  try {
    panel_loglik(fx.data, fx.spec, params, 3, 0);
    // some data sets may still survive; nothing to assert in that case
  } catch (const inner_failure& e) {
    CHECK(e.series_index >= 0);
    CHECK(e.series_index < 3);
  } catch (const divergence_error&) {
    // also acceptable: the recursion overflowed before the inner solve gave up
  } catch (const degenerate_error&) {
  }
}
