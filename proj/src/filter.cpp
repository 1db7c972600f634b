#include "glarmix/filter.hpp"

#include <cmath>
#include <vector>

#include "glarmix/errors.hpp"

namespace glarmix {

bool ar_stationary(const Eigen::VectorXd& ar) {
  const int p = static_cast<int>(ar.size());
  if (p == 0) return true;
  if (!ar.allFinite()) return false;
  // Companion-matrix eigenvalues of the recursion x_t = sum phi_l x_{t-l};
  // stationarity <=> spectral radius < 1.
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(p, p);
  comp.row(0) = ar.transpose();
  for (int i = 1; i < p; ++i) comp(i, i - 1) = 1.0;
  return comp.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - 1e-12;
}

namespace {

// Lagged derivative state for one past time point.
struct LagSlot {
  Eigen::VectorXd d_feedback;   // d alpha_s / d params
  Eigen::VectorXd d_resid;      // d e_s / d params
  Eigen::MatrixXd d2_feedback;  // second derivatives, want == 2 only
  Eigen::MatrixXd d2_resid;
};

}  // namespace

FilterOutput glarma_filter(const Eigen::VectorXd& y, const Eigen::VectorXd& m, Family family,
                           const Eigen::MatrixXd& covariates, const Eigen::VectorXd& coefs,
                           const Eigen::VectorXd& offset, const ArmaParams& arma,
                           int want_derivs) {
  const long n = y.size();
  const int b = static_cast<int>(covariates.cols());
  const int p = arma.p();
  const int q = arma.q();
  const int k = b + p + q;

  if (m.size() != n) throw contract_error("glarma_filter: y and m lengths differ");
  if (covariates.rows() != n && !(b == 0 && covariates.rows() == 0))
    throw contract_error("glarma_filter: covariate rows do not match series length");
  if (coefs.size() != b)
    throw contract_error("glarma_filter: coefficient count does not match covariate columns");
  if (offset.size() != 0 && offset.size() != n)
    throw contract_error("glarma_filter: offset length must be 0 or n");
  if (want_derivs < 0 || want_derivs > 2)
    throw contract_error("glarma_filter: want_derivs must be 0, 1 or 2");
  if (!coefs.allFinite() || !arma.ar.allFinite() || !arma.ma.allFinite())
    throw contract_error("glarma_filter: non-finite parameter values");

  const bool has_offset = offset.size() == n;
  const int depth = std::max(p, q);

  FilterOutput out;
  out.linpred.resize(n);
  out.feedback.resize(n);
  out.resid.resize(n);
  if (want_derivs >= 1) out.grad = Eigen::VectorXd::Zero(k);
  if (want_derivs == 2) out.hess = Eigen::MatrixXd::Zero(k, k);

  // Ring buffer over the last `depth` time points; slot(s) = s mod depth.
  std::vector<LagSlot> ring(static_cast<size_t>(std::max(depth, 1)));
  if (want_derivs >= 1 && depth > 0) {
    for (auto& slot : ring) {
      slot.d_feedback = Eigen::VectorXd::Zero(k);
      slot.d_resid = Eigen::VectorXd::Zero(k);
      if (want_derivs == 2) {
        slot.d2_feedback = Eigen::MatrixXd::Zero(k, k);
        slot.d2_resid = Eigen::MatrixXd::Zero(k, k);
      }
    }
  }

  Eigen::VectorXd d_w(k), d_feedback(k);
  Eigen::MatrixXd d2_w(k, k), d2_feedback(k, k);

  for (long t = 0; t < n; ++t) {
    // Feedback value; pre-sample terms are zero so lags reach back at most t.
    double feedback = 0.0;
    for (int l = 1; l <= p && l <= t; ++l) {
      const long s = t - l;
      feedback += arma.ar[l - 1] * (out.feedback[s] + out.resid[s]);
    }
    for (int l = 1; l <= q && l <= t; ++l) feedback += arma.ma[l - 1] * out.resid[t - l];

    double w = feedback;
    if (b > 0) w += covariates.row(t).dot(coefs);
    if (has_offset) w += offset[t];
    if (!std::isfinite(w))
      throw divergence_error("glarma_filter: recursion diverged to non-finite state at t = " +
                                 std::to_string(t + 1),
                             t + 1);
    out.feedback[t] = feedback;
    out.linpred[t] = w;

    PearsonResidual pr;
    try {
      pr = pearson_residual(y[t], w, m[t], family);
    } catch (const degenerate_error& err) {
      throw degenerate_error(std::string(err.what()) + " (t = " + std::to_string(t + 1) + ")",
                             t + 1);
    }
    out.resid[t] = pr.value;
    out.loglik += log_density(y[t], w, m[t], family);

    if (want_derivs == 0) continue;

    const ConditionalMoments mom = conditional_moments(w, m[t], family);
    const double score = y[t] - mom.mu;

    d_feedback.setZero();
    if (want_derivs == 2) d2_feedback.setZero();
    for (int l = 1; l <= p && l <= t; ++l) {
      const LagSlot& lag = ring[(t - l) % depth];
      const double resid_l = out.resid[t - l];
      const double feedback_l = out.feedback[t - l];
      const int slot = b + l - 1;
      d_feedback += arma.ar[l - 1] * (lag.d_feedback + lag.d_resid);
      d_feedback[slot] += feedback_l + resid_l;
      if (want_derivs == 2) {
        d2_feedback += arma.ar[l - 1] * (lag.d2_feedback + lag.d2_resid);
        d2_feedback.row(slot) += (lag.d_feedback + lag.d_resid).transpose();
        d2_feedback.col(slot) += lag.d_feedback + lag.d_resid;
      }
    }
    for (int l = 1; l <= q && l <= t; ++l) {
      const LagSlot& lag = ring[(t - l) % depth];
      const int slot = b + p + l - 1;
      d_feedback += arma.ma[l - 1] * lag.d_resid;
      d_feedback[slot] += out.resid[t - l];
      if (want_derivs == 2) {
        d2_feedback += arma.ma[l - 1] * lag.d2_resid;
        d2_feedback.row(slot) += lag.d_resid.transpose();
        d2_feedback.col(slot) += lag.d_resid;
      }
    }

    d_w = d_feedback;
    if (b > 0) d_w.head(b) += covariates.row(t).transpose();

    out.grad += score * d_w;
    if (want_derivs == 2) {
      d2_w = d2_feedback;  // covariate part of w is linear, no second derivative
      out.hess += score * d2_w;
      out.hess.noalias() -= mom.sigma2 * (d_w * d_w.transpose());
    }

    if (depth > 0) {
      LagSlot& slot = ring[t % depth];
      slot.d_feedback = d_feedback;
      slot.d_resid = pr.d_dw * d_w;
      if (want_derivs == 2) {
        slot.d2_feedback = d2_feedback;
        slot.d2_resid = pr.d2_dw2 * (d_w * d_w.transpose()) + pr.d_dw * d2_w;
      }
    }
  }

  if (want_derivs == 2) out.hess = 0.5 * (out.hess + out.hess.transpose()).eval();
  return out;
}

}  // namespace glarmix
