#include "glarmix/family.hpp"

#include <algorithm>
#include <cmath>

#include "glarmix/errors.hpp"
#include "glarmix/rng.hpp"

namespace glarmix {

namespace {

constexpr double kLinkCap = 700.0;  // exp() overflows just past 709; clamp before it

double clamp_w(double w) {
  if (!std::isfinite(w)) throw contract_error("family: non-finite linear predictor");
  return std::clamp(w, -kLinkCap, kLinkCap);
}

// Logistic mean and its complement, each computed on the side that avoids
// catastrophic cancellation.
double logistic(double w) {
  return w >= 0.0 ? 1.0 / (1.0 + std::exp(-w)) : std::exp(w) / (1.0 + std::exp(w));
}

double logistic_complement(double w) { return logistic(-w); }

double log1p_exp(double w) {
  return w > 0.0 ? w + std::log1p(std::exp(-w)) : std::log1p(std::exp(w));
}

double require_count(double y, const char* what) {
  if (!std::isfinite(y) || y < 0.0 || std::abs(y - std::round(y)) > 1e-8)
    throw contract_error(std::string(what) + ": value must be a nonnegative integer");
  return std::round(y);
}

void check_m(double m, Family f) {
  if (f == Family::poisson) return;
  if (!std::isfinite(m) || m < 1.0 || std::abs(m - std::round(m)) > 1e-8)
    throw contract_error("family: trial count m must be an integer >= 1");
  if (f == Family::binary && std::round(m) != 1.0)
    throw contract_error("family: binary responses require m = 1");
}

long knuth_poisson(double mu, std::mt19937_64& rng) {
  const double limit = std::exp(-mu);
  long k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= draw_uniform(rng);
  } while (p > limit);
  return k - 1;
}

}  // namespace

Family family_from_string(const std::string& name) {
  if (name == "binary") return Family::binary;
  if (name == "binomial") return Family::binomial;
  if (name == "poisson") return Family::poisson;
  throw contract_error("unknown family '" + name + "' (expected binary, binomial or poisson)");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::binary: return "binary";
    case Family::binomial: return "binomial";
    case Family::poisson: return "poisson";
  }
  throw contract_error("family_name: bad enum value");
}

double cumulant(double w, Family f, int order) {
  if (order < 0 || order > 3) throw contract_error("cumulant: order must be in 0..3");
  w = clamp_w(w);
  if (f == Family::poisson) return std::exp(w);  // all derivatives coincide
  const double p = logistic(w);
  const double q = logistic_complement(w);
  switch (order) {
    case 0: return log1p_exp(w);
    case 1: return p;
    case 2: return p * q;
    default: return p * q * (1.0 - 2.0 * p);
  }
}

ConditionalMoments conditional_moments(double w, double m, Family f) {
  check_m(m, f);
  return {m * cumulant(w, f, 1), m * cumulant(w, f, 2)};
}

double log_density(double y, double w, double m, Family f) {
  check_m(m, f);
  w = clamp_w(w);
  y = require_count(y, "log_density");
  switch (f) {
    case Family::poisson:
      return y * w - std::exp(w) - std::lgamma(y + 1.0);
    case Family::binary:
    case Family::binomial: {
      const double mm = std::round(m);
      if (y > mm) throw contract_error("log_density: y exceeds trial count m");
      const double log_choose = std::lgamma(mm + 1.0) - std::lgamma(y + 1.0) - std::lgamma(mm - y + 1.0);
      return y * w - mm * log1p_exp(w) + log_choose;
    }
  }
  throw contract_error("log_density: bad family");
}

PearsonResidual pearson_residual(double y, double w, double m, Family f) {
  check_m(m, f);
  w = clamp_w(w);
  y = require_count(y, "pearson_residual");
  if (f != Family::poisson && y > std::round(m))
    throw contract_error("pearson_residual: y exceeds trial count m");

  const ConditionalMoments mom = conditional_moments(w, m, f);
  const double sigma2 = mom.sigma2;
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw degenerate_error("pearson_residual: conditional variance underflowed to zero at w = " +
                               std::to_string(w),
                           -1);
  const double sigma = std::sqrt(sigma2);
  const double e = (y - mom.mu) / sigma;

  // g = m*b''', and h is the value of m*b'''' obtained from the moments rather
  // than a fourth entry in the cumulant contract (poisson: mu; binomial:
  // sigma2*(1-6p+6p^2) with p = mu/m).
  double g, h;
  if (f == Family::poisson) {
    g = mom.mu;
    h = mom.mu;
  } else {
    const double p = mom.mu / std::round(m);
    g = sigma2 * (1.0 - 2.0 * p);
    h = sigma2 * (1.0 - 6.0 * p + 6.0 * p * p);
  }
  const double de = -sigma - e * g / (2.0 * sigma2);
  const double d2e = e * (3.0 * g * g - 2.0 * h * sigma2) / (4.0 * sigma2 * sigma2);
  return {e, de, d2e};
}

double sample_response(double w, double m, Family f, std::mt19937_64& rng) {
  check_m(m, f);
  w = clamp_w(w);
  switch (f) {
    case Family::binary:
    case Family::binomial: {
      const double p = logistic(w);
      const long trials = static_cast<long>(std::round(m));
      long hits = 0;
      for (long i = 0; i < trials; ++i)
        if (draw_uniform(rng) < p) ++hits;
      return static_cast<double>(hits);
    }
    case Family::poisson: {
      // Poisson(a+b) = Poisson(a) + Poisson(b): split large means so the
      // inversion loop stays short and exp(-mu) never underflows.
      double mu = std::exp(w);
      if (!(mu <= 1e9))
        throw divergence_error("sample_response: poisson mean exceeds 1e9", -1);
      long total = 0;
      while (mu > 30.0) {
        total += knuth_poisson(30.0, rng);
        mu -= 30.0;
      }
      total += knuth_poisson(mu, rng);
      return static_cast<double>(total);
    }
  }
  throw contract_error("sample_response: bad family");
}

bool in_support(double y, double m, Family f) {
  if (!std::isfinite(y) || y < 0.0 || std::abs(y - std::round(y)) > 1e-8) return false;
  if (f != Family::poisson && std::round(y) > std::round(m)) return false;
  return true;
}

}  // namespace glarmix
