#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "glarmix/errors.hpp"
#include "glarmix/family.hpp"
#include "glarmix/rng.hpp"

using namespace glarmix;

namespace {

double fd_central(double (*f)(double, Family, int), double w, Family fam, int order, double h) {
  return (f(w + h, fam, order) - f(w - h, fam, order)) / (2 * h);
}

}  // namespace

TEST_CASE("cumulant values and derivative chain") {
  for (Family fam : {Family::binary, Family::binomial}) {
    CHECK(cumulant(0.0, fam, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(cumulant(0.0, fam, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cumulant(0.0, fam, 2) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(cumulant(0.0, fam, 3) == doctest::Approx(0.0).epsilon(1e-15));
  }
  CHECK(cumulant(1.3, Family::poisson, 0) == doctest::Approx(std::exp(1.3)).epsilon(1e-15));
  for (int order : {1, 2, 3})
    CHECK(cumulant(1.3, Family::poisson, order) == doctest::Approx(std::exp(1.3)).epsilon(1e-15));

  // numerical derivative of order k matches order k+1
  const double h = 1e-5;
  for (Family fam : {Family::binary, Family::poisson}) {
    for (double w : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
      for (int order : {0, 1, 2}) {
        double fd = fd_central(&cumulant, w, fam, order, h);
        CHECK(cumulant(w, fam, order + 1) == doctest::Approx(fd).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("cumulant stays finite at extreme linear predictors") {
  for (Family fam : {Family::binary, Family::poisson}) {
    for (double w : {-1e4, -800.0, 800.0, 1e4}) {
      for (int order : {0, 1, 2, 3}) CHECK(std::isfinite(cumulant(w, fam, order)));
    }
  }
  CHECK(cumulant(1e4, Family::binary, 1) == doctest::Approx(1.0));
  CHECK(cumulant(-1e4, Family::binary, 1) == doctest::Approx(0.0));
}

TEST_CASE("log density matches closed forms") {
  CHECK(log_density(2.0, 0.3, 5.0, Family::binomial) ==
        doctest::Approx(-1.3691911293485899).epsilon(1e-14));
  CHECK(log_density(3.0, 1.1, 1.0, Family::poisson) ==
        doctest::Approx(-1.4959254931744885).epsilon(1e-14));
  // binary reduces to the Bernoulli likelihood
  double w = -0.8;
  double p = 1.0 / (1.0 + std::exp(-w));
  CHECK(log_density(1.0, w, 1.0, Family::binary) == doctest::Approx(std::log(p)).epsilon(1e-14));
  CHECK(log_density(0.0, w, 1.0, Family::binary) ==
        doctest::Approx(std::log1p(-p)).epsilon(1e-14));
}

TEST_CASE("densities sum to one over the support") {
  double total = 0.0;
  for (int y = 0; y <= 7; ++y) total += std::exp(log_density(y, 0.9, 7.0, Family::binomial));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  total = 0.0;
  for (int y = 0; y <= 200; ++y) total += std::exp(log_density(y, 1.2, 1.0, Family::poisson));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("conditional moments agree with density sums") {
  const double w = 0.35, m = 6.0;
  auto mom = conditional_moments(w, m, Family::binomial);
  double mean = 0.0, var = 0.0;
  for (int y = 0; y <= 6; ++y) mean += y * std::exp(log_density(y, w, m, Family::binomial));
  for (int y = 0; y <= 6; ++y)
    var += (y - mean) * (y - mean) * std::exp(log_density(y, w, m, Family::binomial));
  CHECK(mom.mu == doctest::Approx(mean).epsilon(1e-12));
  CHECK(mom.sigma2 == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("standardized residual has mean zero and unit variance") {
  const double w = -0.4, m = 6.0;
  double mean = 0.0, var = 0.0;
  for (int y = 0; y <= 6; ++y) {
    double p = std::exp(log_density(y, w, m, Family::binomial));
    double e = pearson_residual(y, w, m, Family::binomial).value;
    mean += p * e;
    var += p * e * e;
  }
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));

  mean = var = 0.0;
  for (int y = 0; y <= 300; ++y) {
    double p = std::exp(log_density(y, 1.5, 1.0, Family::poisson));
    double e = pearson_residual(y, 1.5, 1.0, Family::poisson).value;
    mean += p * e;
    var += p * e * e;
  }
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("residual derivatives match finite differences") {
  const double h = 1e-5;
  for (Family fam : {Family::binary, Family::binomial, Family::poisson}) {
    const double m = fam == Family::binomial ? 4.0 : 1.0;
    const double ymax = fam == Family::poisson ? 6.0 : m;
    for (double y = 0.0; y <= ymax; y += 1.0) {
      for (double w : {-1.7, -0.2, 0.0, 0.9, 2.1}) {
        auto at = [&](double ww) { return pearson_residual(y, ww, m, fam); };
        auto pr = at(w);
        double fd1 = (at(w + h).value - at(w - h).value) / (2 * h);
        double fd2 = (at(w + h).value - 2 * pr.value + at(w - h).value) / (h * h);
        CHECK(pr.d_dw == doctest::Approx(fd1).epsilon(1e-6));
        CHECK(pr.d2_dw2 == doctest::Approx(fd2).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("response sampling is deterministic and unbiased") {
  auto rng1 = series_stream(42, 3);
  auto rng2 = series_stream(42, 3);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_response(0.3, 5.0, Family::binomial, rng1) ==
          sample_response(0.3, 5.0, Family::binomial, rng2));
  }

  // binomial mean; 4 standard errors of slack
  const double w = 0.3, m = 5.0;
  const double p = 1.0 / (1.0 + std::exp(-w));
  const int n = 100000;
  double sum = 0.0;
  auto rng = series_stream(7, 0);
  for (int i = 0; i < n; ++i) sum += sample_response(w, m, Family::binomial, rng);
  double se = std::sqrt(m * p * (1 - p) / n);
  CHECK(std::abs(sum / n - m * p) < 4 * se);

  // poisson with a mean large enough to cross the splitting threshold
  const double wp = std::log(45.0);
  sum = 0.0;
  double sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double y = sample_response(wp, 1.0, Family::poisson, rng);
    sum += y;
    sumsq += y * y;
  }
  double mean = sum / n;
  CHECK(std::abs(mean - 45.0) < 4 * std::sqrt(45.0 / n));
  double var = sumsq / n - mean * mean;
  CHECK(var == doctest::Approx(45.0).epsilon(0.05));
}

TEST_CASE("support checks") {
  CHECK(in_support(0.0, 1.0, Family::binary));
  CHECK(in_support(1.0, 1.0, Family::binary));
  CHECK_FALSE(in_support(2.0, 1.0, Family::binary));
  CHECK_FALSE(in_support(0.5, 1.0, Family::binary));
  CHECK(in_support(3.0, 5.0, Family::binomial));
  CHECK_FALSE(in_support(6.0, 5.0, Family::binomial));
  CHECK_FALSE(in_support(-1.0, 5.0, Family::binomial));
  CHECK(in_support(17.0, 1.0, Family::poisson));
  CHECK_FALSE(in_support(-2.0, 1.0, Family::poisson));
  CHECK_FALSE(in_support(2.5, 1.0, Family::poisson));
}

TEST_CASE("family names round-trip") {
  for (Family fam : {Family::binary, Family::binomial, Family::poisson})
    CHECK(family_from_string(family_name(fam)) == fam);
  CHECK_THROWS_AS(family_from_string("gaussian"), contract_error);
}
