#pragma once

#include <random>
#include <string>

namespace glarmix {

enum class Family { binary, binomial, poisson };

Family family_from_string(const std::string& name);
std::string family_name(Family f);

// Cumulant function of the canonical exponential family and its first three
// derivatives: order 0 -> b(w), 1 -> db/dw, 2 -> d2b/dw2, 3 -> d3b/dw3.
// Stable for |w| up to 700; w is clamped to that range before exponentiation.
double cumulant(double w, Family f, int order);

struct ConditionalMoments {
  double mu;      // m * b'(w)
  double sigma2;  // m * b''(w)
};
ConditionalMoments conditional_moments(double w, double m, Family f);

// log f(y | w) = y*w - m*b(w) + c(y); the carrier term c(y) is exact
// (log-factorials / log binomial coefficients via lgamma).
double log_density(double y, double w, double m, Family f);

struct PearsonResidual {
  double value;   // e = (y - mu) / sigma
  double d_dw;    // de/dw
  double d2_dw2;  // d2e/dw2; needed by second-derivative recursions downstream
};
PearsonResidual pearson_residual(double y, double w, double m, Family f);

// One draw from f(y | w). Binomial responses are sampled as m Bernoulli trials,
// Poisson by summed inversion, so the draw count per call is deterministic in
// distributional terms and the result depends only on the engine state.
double sample_response(double w, double m, Family f, std::mt19937_64& rng);

// Support check shared with data ingestion: y integral, 0 <= y (<= m).
bool in_support(double y, double m, Family f);

}  // namespace glarmix
