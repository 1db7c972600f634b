#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace glarmix {

// log(sum(exp(v))) with max subtraction; -inf for an empty vector.
double log_sum_exp(const Eigen::VectorXd& v);

// Upper tail P(X > x) of a chi-squared with df degrees of freedom.
// Regularized incomplete gamma Q(df/2, x/2) via series / continued fraction.
double chi_squared_upper_tail(double x, int df);

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }
inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace glarmix
