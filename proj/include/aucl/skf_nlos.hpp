#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>

#include "aucl/dmv_los.hpp"
#include "aucl/types.hpp"

namespace aucl {

/// Propagates every state-bias cross-covariance column through the motion
/// Jacobian: C^{il-}(t+1) = F C^{il+}(t).
inline BiasBook predict_bias(const BiasBook& book, const Mat& F) {
  if (F.rows() != F.cols() || !F.allFinite()) {
    throw std::invalid_argument("predict_bias: F must be square and finite");
  }
  BiasBook out;
  out.owner = book.owner;
  for (const auto& [id, c] : book.C) {
    if (c.size() != F.cols()) {
      throw std::invalid_argument("predict_bias: dimension mismatch");
    }
    out.C.emplace(id, F * c);
  }
  return out;
}

struct NlosUpdate {
  UpdateOutcome outcome;
  BiasBook book;  ///< observer's updated cross-covariance set
};

namespace detail {

inline UpdateOutcome skipped_outcome(const Belief& bel, SkipReason reason) {
  UpdateOutcome out;
  out.belief = bel;
  out.gain = Vec::Zero(bel.dim());
  out.skipped = true;
  out.skip_reason = reason;
  return out;
}

}  // namespace detail

/// Schmidt-Kalman NLoS relative-range update with precomputed Jacobians.
/// The bias estimate is never corrected; its uncertainty B and the
/// cross-covariance columns shape the gain instead.
inline NlosUpdate nlos_correct_linearized(const Belief& bel_i,
                                          const Belief& bel_j,
                                          const BiasModel& bias_i,
                                          const BiasBook& book_i,
                                          const BiasBook& book_j,
                                          const RangeJacobians& J, double z,
                                          double R,
                                          const OmegaOptions& opt = {}) {
  if (!(R > 0.0)) throw std::invalid_argument("nlos_correct: R <= 0");
  if (!(bias_i.Phi > 0.0)) throw std::invalid_argument("nlos_correct: Phi <= 0");
  const Eigen::Index n = bel_i.dim();
  const int self = book_i.owner;

  const Vec C_ii = book_i.entry_or_zero(self, n);
  const Vec C_ji = book_j.entry_or_zero(self, bel_j.dim());
  const Vec P_Hit = bel_i.P.matrix() * J.H_i.transpose();
  const double alpha = J.H_i * P_Hit;
  const double beta = J.H_j * bel_j.P.matrix() * J.H_j.transpose();
  const double gamma = J.H_i * C_ii;
  const double delta = J.H_j * C_ji;
  const double B = bias_i.B;

  auto S_of = [&](double w) {
    return alpha / w + detail::target_var_term(beta, w) + 2.0 * gamma +
           2.0 * delta + B + R;
  };

  Mat bound(n, n);
  Vec g(n);
  auto objective = [&](double w) -> double {
    const double S = S_of(w);
    if (!(S > kMinInnovationVar)) {
      return std::numeric_limits<double>::infinity();
    }
    g.noalias() = P_Hit / w;
    g += C_ii;
    bound.noalias() = bel_i.P.matrix() / w;
    bound.noalias() -= g * g.transpose() / S;
    return detail::loggable_det(bound);
  };

  double w_star;
  try {
    w_star = optimize_omega(objective, opt);
  } catch (const NumericalError&) {
    NlosUpdate res;
    res.outcome = detail::skipped_outcome(bel_i, SkipReason::kNumerical);
    res.book = book_i;
    return res;
  }
  if (objective(1.0) < objective(w_star)) w_star = 1.0;

  const double S = S_of(w_star);
  const double S_like = std::isfinite(S) ? S : S_of(opt.hi);
  if (!(S_like > kMinInnovationVar)) {
    NlosUpdate res;
    res.outcome = detail::skipped_outcome(bel_i, SkipReason::kNumerical);
    res.book = book_i;
    return res;
  }

  const double z_hat = J.z_hat + bias_i.b_hat;
  const double innovation = z - z_hat;
  Vec gain = (P_Hit / w_star + C_ii) / S;  // zero when S is infinite

  UpdateOutcome out;
  out.omega_star = w_star;
  out.innovation = innovation;
  out.innovation_var = S_like;
  out.likelihood = normal_pdf(innovation, S_like);
  out.gain = gain;

  Mat P_post = bel_i.P.matrix() / w_star;
  if (std::isfinite(S)) {
    const Vec g_star = P_Hit / w_star + C_ii;
    P_post.noalias() -= g_star * g_star.transpose() / S;
  }
  out.belief =
      Belief(bel_i.x_hat + gain * innovation, Covariance(P_post), bel_i.stamp);

  // Cross-covariance updates; the own column additionally absorbs the
  // bias second moment through the gain.
  const Mat I_KH = Mat::Identity(n, n) - gain * J.H_i;
  BiasBook book_post;
  book_post.owner = self;
  for (const auto& [id, c] : book_i.C) {
    const Vec C_jl = book_j.entry_or_zero(id, bel_j.dim());
    const double hj_cjl = J.H_j * C_jl;
    Vec c_post = I_KH * c - gain * hj_cjl;
    if (id == self) c_post -= gain * B;
    book_post.C.emplace(id, std::move(c_post));
  }

  NlosUpdate res;
  res.outcome = std::move(out);
  res.book = std::move(book_post);
  return res;
}

/// Schmidt-Kalman NLoS relative-range update (Fig. 3 model-2 branch).
inline NlosUpdate nlos_correct(const Belief& bel_i, const Belief& bel_j,
                               const BiasModel& bias_i, const BiasBook& book_i,
                               const BiasBook& book_j, double z, double R,
                               const OmegaOptions& opt = {}) {
  auto J = range_linearize(bel_i, bel_j);
  if (!J) {
    NlosUpdate res;
    res.outcome =
        detail::skipped_outcome(bel_i, SkipReason::kDegenerateGeometry);
    res.book = book_i;
    return res;
  }
  return nlos_correct_linearized(bel_i, bel_j, bias_i, book_i, book_j, *J, z,
                                 R, opt);
}

struct CompactNlosUpdate {
  UpdateOutcome outcome;
  Vec C_ii;
};

/// Communication-reduced NLoS update: the whole (state, bias) block of the
/// observer is scaled by 1/omega, the target transmits only its belief and
/// only the own cross-covariance column is maintained.
inline CompactNlosUpdate nlos_correct_compact_linearized(
    const Belief& bel_i, const Belief& bel_j, const BiasModel& bias_i,
    const Vec& C_ii, const RangeJacobians& J, double z, double R,
    const OmegaOptions& opt = {}) {
  if (!(R > 0.0)) throw std::invalid_argument("nlos_correct_compact: R <= 0");
  const Eigen::Index n = bel_i.dim();

  const Vec P_Hit = bel_i.P.matrix() * J.H_i.transpose();
  const double alpha = J.H_i * P_Hit;
  const double beta = J.H_j * bel_j.P.matrix() * J.H_j.transpose();
  const double gamma = J.H_i * C_ii;
  const double B = bias_i.B;

  auto S_of = [&](double w) {
    return (alpha + 2.0 * gamma + B) / w + detail::target_var_term(beta, w) + R;
  };

  Mat bound(n, n);
  Vec g(n);
  auto objective = [&](double w) -> double {
    const double S = S_of(w);
    if (!(S > kMinInnovationVar)) {
      return std::numeric_limits<double>::infinity();
    }
    g.noalias() = (P_Hit + C_ii) / w;
    bound.noalias() = bel_i.P.matrix() / w;
    bound.noalias() -= g * g.transpose() / S;
    return detail::loggable_det(bound);
  };

  double w_star;
  try {
    w_star = optimize_omega(objective, opt);
  } catch (const NumericalError&) {
    CompactNlosUpdate res;
    res.outcome = detail::skipped_outcome(bel_i, SkipReason::kNumerical);
    res.C_ii = C_ii;
    return res;
  }
  if (objective(1.0) < objective(w_star)) w_star = 1.0;

  const double S = S_of(w_star);
  const double S_like = std::isfinite(S) ? S : S_of(opt.hi);
  if (!(S_like > kMinInnovationVar)) {
    CompactNlosUpdate res;
    res.outcome = detail::skipped_outcome(bel_i, SkipReason::kNumerical);
    res.C_ii = C_ii;
    return res;
  }

  const double z_hat = J.z_hat + bias_i.b_hat;
  const double innovation = z - z_hat;
  const Vec g_star = (P_Hit + C_ii) / w_star;
  const Vec gain = g_star / S;

  UpdateOutcome out;
  out.omega_star = w_star;
  out.innovation = innovation;
  out.innovation_var = S_like;
  out.likelihood = normal_pdf(innovation, S_like);
  out.gain = gain;

  Mat P_post = bel_i.P.matrix() / w_star;
  if (std::isfinite(S)) P_post.noalias() -= g_star * g_star.transpose() / S;
  out.belief =
      Belief(bel_i.x_hat + gain * innovation, Covariance(P_post), bel_i.stamp);

  const Mat I_KH = Mat::Identity(n, n) - gain * J.H_i;
  Vec C_post = (I_KH * C_ii - gain * B) / w_star;

  CompactNlosUpdate res;
  res.outcome = std::move(out);
  res.C_ii = std::move(C_post);
  return res;
}

inline CompactNlosUpdate nlos_correct_compact(const Belief& bel_i,
                                              const Belief& bel_j,
                                              const BiasModel& bias_i,
                                              const Vec& C_ii, double z,
                                              double R,
                                              const OmegaOptions& opt = {}) {
  auto J = range_linearize(bel_i, bel_j);
  if (!J) {
    CompactNlosUpdate res;
    res.outcome =
        detail::skipped_outcome(bel_i, SkipReason::kDegenerateGeometry);
    res.C_ii = C_ii;
    return res;
  }
  return nlos_correct_compact_linearized(bel_i, bel_j, bias_i, C_ii, *J, z, R,
                                         opt);
}

/// First-order (Joseph form) LoS update against a beacon with exactly known
/// position.
inline UpdateOutcome beacon_los_correct(const Belief& bel_i,
                                        const Eigen::Vector2d& beacon_pos,
                                        double z, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("beacon_los_correct: R <= 0");
  auto J = range_linearize(bel_i, beacon_pos);
  if (!J) {
    return detail::skipped_outcome(bel_i, SkipReason::kDegenerateGeometry);
  }
  const Eigen::Index n = bel_i.dim();
  const Vec P_Hit = bel_i.P.matrix() * J->H_i.transpose();
  const double S = J->H_i * P_Hit + R;
  const Vec gain = P_Hit / S;
  const double innovation = z - J->z_hat;

  const Mat I_KH = Mat::Identity(n, n) - gain * J->H_i;
  Mat P_post = I_KH * bel_i.P.matrix() * I_KH.transpose();
  P_post.noalias() += gain * R * gain.transpose();

  UpdateOutcome out;
  out.omega_star = 1.0;
  out.innovation = innovation;
  out.innovation_var = S;
  out.likelihood = normal_pdf(innovation, S);
  out.gain = gain;
  out.belief =
      Belief(bel_i.x_hat + gain * innovation, Covariance(P_post), bel_i.stamp);
  return out;
}

struct BeaconNlosUpdate {
  UpdateOutcome outcome;
  Vec C_ii;
};

/// Schmidt NLoS update against a beacon. Only the observer's own
/// cross-covariance column needs maintenance.
inline BeaconNlosUpdate beacon_nlos_correct(const Belief& bel_i,
                                            const BiasModel& bias_i,
                                            const Vec& C_ii,
                                            const Eigen::Vector2d& beacon_pos,
                                            double z, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("beacon_nlos_correct: R <= 0");
  auto J = range_linearize(bel_i, beacon_pos);
  if (!J) {
    BeaconNlosUpdate res;
    res.outcome =
        detail::skipped_outcome(bel_i, SkipReason::kDegenerateGeometry);
    res.C_ii = C_ii;
    return res;
  }
  const Eigen::Index n = bel_i.dim();
  const Vec P_Hit = bel_i.P.matrix() * J->H_i.transpose();
  const double alpha = J->H_i * P_Hit;
  const double gamma = J->H_i * C_ii;
  const double B = bias_i.B;
  const double S = alpha + 2.0 * gamma + B + R;
  if (!(S > kMinInnovationVar)) {
    BeaconNlosUpdate res;
    res.outcome = detail::skipped_outcome(bel_i, SkipReason::kNumerical);
    res.C_ii = C_ii;
    return res;
  }
  const Vec g = P_Hit + C_ii;
  const Vec gain = g / S;
  const double innovation = z - (J->z_hat + bias_i.b_hat);

  Mat P_post = bel_i.P.matrix();
  P_post.noalias() -= g * g.transpose() / S;

  UpdateOutcome out;
  out.omega_star = 1.0;
  out.innovation = innovation;
  out.innovation_var = S;
  out.likelihood = normal_pdf(innovation, S);
  out.gain = gain;
  out.belief =
      Belief(bel_i.x_hat + gain * innovation, Covariance(P_post), bel_i.stamp);

  const Mat I_KH = Mat::Identity(n, n) - gain * J->H_i;
  BeaconNlosUpdate res;
  res.outcome = std::move(out);
  res.C_ii = I_KH * C_ii - gain * B;
  return res;
}

}  // namespace aucl
