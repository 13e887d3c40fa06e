#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "aucl/math.hpp"
#include "aucl/types.hpp"

namespace aucl {

/// Linearized range model: predicted range and the rows of the measurement
/// Jacobian with respect to the observer and the target states. For a
/// beacon target H_j is empty.
struct RangeJacobians {
  RowVec H_i;
  RowVec H_j;
  double z_hat = 0.0;
};

inline constexpr double kDefaultMinDistance = 1e-6;
inline constexpr double kMinInnovationVar = 1e-12;

namespace detail {

inline std::optional<RangeJacobians> linearize_range(
    const Vec& x_i, Eigen::Index nx_i, const Eigen::Vector2d& p_j,
    Eigen::Index nx_j, double d_min) {
  const Eigen::Vector2d p_i = x_i.head<2>();
  const Eigen::Vector2d diff = p_i - p_j;
  const double d = diff.norm();
  if (!(d >= d_min)) return std::nullopt;
  RangeJacobians jac;
  jac.z_hat = d;
  jac.H_i = RowVec::Zero(nx_i);
  jac.H_i.head<2>() = diff.transpose() / d;
  if (nx_j > 0) {
    jac.H_j = RowVec::Zero(nx_j);
    jac.H_j.head<2>() = -diff.transpose() / d;
  }
  return jac;
}

/// Innovation-variance contribution of the target side, 1/(1-omega) scaled.
/// Exact at omega = 1: the term vanishes for an uncertain target and
/// reduces to plain beta/(1-omega) never being needed when beta == 0.
inline double target_var_term(double beta, double omega) {
  if (beta <= 0.0) return 0.0;
  return beta / (1.0 - omega);  // +inf at omega == 1, handled by callers
}

inline double loggable_det(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  const auto& L = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const double piv = L(k, k);
    if (!(piv > 0.0)) return std::numeric_limits<double>::infinity();
    logdet += 2.0 * std::log(piv);
  }
  return logdet;
}

}  // namespace detail

/// Linearizes the inter-agent range model about the two estimates.
/// Fails (nullopt) when the estimated distance is below d_min.
inline std::optional<RangeJacobians> range_linearize(
    const Belief& bel_i, const Belief& bel_j,
    double d_min = kDefaultMinDistance) {
  return detail::linearize_range(bel_i.x_hat, bel_i.dim(), bel_j.position(),
                                 bel_j.dim(), d_min);
}

/// Beacon overload: the target position is exactly known, H_j is empty.
inline std::optional<RangeJacobians> range_linearize(
    const Belief& bel_i, const Eigen::Vector2d& beacon_pos,
    double d_min = kDefaultMinDistance) {
  return detail::linearize_range(bel_i.x_hat, bel_i.dim(), beacon_pos, 0,
                                 d_min);
}

struct OmegaOptions {
  double lo = 1e-3;
  double hi = 1.0 - 1e-3;
  int grid_points = 64;
  double tolerance = 1e-5;
};

/// Minimizes the scalar objective over the clipped interval [lo, hi].
/// Ties resolve to the smallest omega. Throws NumericalError when the
/// objective is non-finite everywhere.
inline double optimize_omega(const std::function<double(double)>& objective,
                             const OmegaOptions& opt = {}) {
  ScalarMinOptions mopt;
  mopt.grid_points = opt.grid_points;
  mopt.tolerance = opt.tolerance;
  auto w = minimize_scalar(objective, opt.lo, opt.hi, mopt);
  if (!w) throw NumericalError("optimize_omega: objective nowhere finite");
  return *w;
}

/// Conservative posterior covariance bound of the loosely coupled LoS
/// update, as a function of the split parameter omega in (0, 1].
inline Covariance los_bound_covariance(const Covariance& P_i,
                                       const Covariance& P_j,
                                       const RangeJacobians& J, double R,
                                       double omega) {
  if (!(R > 0.0)) throw std::invalid_argument("los_bound_covariance: R <= 0");
  if (!(omega > 0.0 && omega <= 1.0)) {
    throw std::invalid_argument("los_bound_covariance: omega outside (0,1]");
  }
  const Eigen::Index n = P_i.dim();
  const double beta_early =
      J.H_j.size() > 0 ? double(J.H_j * P_j.matrix() * J.H_j.transpose()) : 0.0;
  // At omega = 1 with an uncertain target the information term vanishes and
  // the bound is exactly the prior.
  if (omega == 1.0 && beta_early > 0.0) return P_i;
  Eigen::LLT<Mat> llt(P_i.matrix());
  Mat P_inv = llt.solve(Mat::Identity(n, n));
  if (llt.info() != Eigen::Success || !P_inv.allFinite()) {
    throw NumericalError("los_bound_covariance: singular prior covariance");
  }
  // (1-w) / (beta + (1-w) R); equals 1/R identically when beta == 0.
  const double coeff = beta_early > 0.0
                           ? (1.0 - omega) / (beta_early + (1.0 - omega) * R)
                           : 1.0 / R;
  Mat info = omega * P_inv + coeff * J.H_i.transpose() * J.H_i;
  Eigen::LLT<Mat> llt_info(info);
  Mat bound = llt_info.solve(Mat::Identity(n, n));
  if (llt_info.info() != Eigen::Success || !bound.allFinite()) {
    throw NumericalError("los_bound_covariance: bound not invertible");
  }
  return Covariance(bound);
}

namespace detail {

/// Scalar pieces shared by the LoS gain, bound and innovation variance.
struct LosTerms {
  double alpha = 0.0;  // H_i P_i H_i^T
  double beta = 0.0;   // H_j P_j H_j^T
  Vec P_Hit;           // P_i H_i^T
};

inline LosTerms los_terms(const Covariance& P_i, const Covariance& P_j,
                          const RangeJacobians& J) {
  LosTerms t;
  t.P_Hit = P_i.matrix() * J.H_i.transpose();
  t.alpha = J.H_i * t.P_Hit;
  t.beta =
      J.H_j.size() > 0 ? double(J.H_j * P_j.matrix() * J.H_j.transpose()) : 0.0;
  return t;
}

}  // namespace detail

/// Loosely coupled LoS relative-range update with precomputed Jacobians.
inline UpdateOutcome los_correct_linearized(const Belief& bel_i,
                                            const Covariance& P_j,
                                            const RangeJacobians& J, double z,
                                            double R,
                                            const OmegaOptions& opt = {}) {
  if (!(R > 0.0)) throw std::invalid_argument("los_correct: R <= 0");
  const Eigen::Index n = bel_i.dim();
  const detail::LosTerms t = detail::los_terms(bel_i.P, P_j, J);

  Mat bound(n, n);
  auto objective = [&](double w) -> double {
    const double S = t.alpha / w + detail::target_var_term(t.beta, w) + R;
    if (!(S > kMinInnovationVar)) {
      return std::numeric_limits<double>::infinity();
    }
    bound.noalias() = bel_i.P.matrix() / w;
    bound.noalias() -= (t.P_Hit / w) * (t.P_Hit.transpose() / w) / S;
    return detail::loggable_det(bound);
  };

  double w_star = optimize_omega(objective, opt);
  // Evaluating at omega = 1 recovers the prior whenever the target carries
  // uncertainty, and the plain first-order update when it does not; take it
  // whenever it beats the interior optimum.
  if (objective(1.0) < objective(w_star)) w_star = 1.0;

  const double S = t.alpha / w_star + detail::target_var_term(t.beta, w_star) + R;
  const double S_like = std::isfinite(S)
                            ? S
                            : t.alpha / opt.hi +
                                  detail::target_var_term(t.beta, opt.hi) + R;
  const double innovation = z - J.z_hat;

  UpdateOutcome out;
  out.omega_star = w_star;
  out.innovation = innovation;
  out.innovation_var = S_like;
  out.likelihood = normal_pdf(innovation, S_like);
  out.gain = (t.P_Hit / w_star) / S;  // zero when S is infinite
  out.belief = Belief(bel_i.x_hat + out.gain * innovation,
                      los_bound_covariance(bel_i.P, P_j, J, R, w_star),
                      bel_i.stamp);
  return out;
}

/// Loosely coupled LoS relative-range update (Fig. 3 model-1 branch).
/// Degenerate geometry passes the belief through with a skip flag.
inline UpdateOutcome los_correct(const Belief& bel_i, const Belief& bel_j,
                                 double z, double R,
                                 const OmegaOptions& opt = {}) {
  auto J = range_linearize(bel_i, bel_j);
  if (!J) {
    UpdateOutcome out;
    out.belief = bel_i;
    out.gain = Vec::Zero(bel_i.dim());
    out.skipped = true;
    out.skip_reason = SkipReason::kDegenerateGeometry;
    return out;
  }
  return los_correct_linearized(bel_i, bel_j.P, *J, z, R, opt);
}

}  // namespace aucl
