// Independent reference implementations used only by the test suites.
// Everything here is written straight from the update equations with plain
// Eigen inverses and dense grids, deliberately not sharing code with the
// library paths it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Loosely coupled LoS update, literal formulas.

inline double los_S(const Mat& P_i, const Mat& P_j, const RowVec& H_i,
                    const RowVec& H_j, double R, double w) {
  const double a = (H_i * P_i * H_i.transpose())(0, 0);
  const double b = (H_j * P_j * H_j.transpose())(0, 0);
  return a / w + b / (1.0 - w) + R;
}

inline Vec los_gain(const Mat& P_i, const Mat& P_j, const RowVec& H_i,
                    const RowVec& H_j, double R, double w) {
  const double S = los_S(P_i, P_j, H_i, H_j, R, w);
  return (P_i / w) * H_i.transpose() / S;
}

/// Posterior covariance bound, inverse form.
inline Mat los_bound(const Mat& P_i, const Mat& P_j, const RowVec& H_i,
                     const RowVec& H_j, double R, double w) {
  const double b = (H_j * P_j * H_j.transpose())(0, 0);
  const Mat info = w * P_i.inverse() +
                   (1.0 - w) * H_i.transpose() *
                       (1.0 / (b + (1.0 - w) * R)) * H_i;
  return info.inverse();
}

inline double los_logdet(const Mat& P_i, const Mat& P_j, const RowVec& H_i,
                         const RowVec& H_j, double R, double w) {
  const Mat bound = los_bound(P_i, P_j, H_i, H_j, R, w);
  const double det = bound.determinant();
  if (!(det > 0.0) || !bound.allFinite()) return kInf;
  return std::log(det);
}

/// Dense grid argmin of the bound log-determinant over [0, 1] inclusive.
/// Non-finite evaluations are skipped; ties keep the smallest omega.
inline double los_omega_grid(const Mat& P_i, const Mat& P_j, const RowVec& H_i,
                             const RowVec& H_j, double R,
                             double step = 1e-5) {
  double best_w = 1.0;
  double best = kInf;
  const auto n_steps = static_cast<std::int64_t>(std::llround(1.0 / step));
  for (std::int64_t k = 0; k <= n_steps; ++k) {
    const double w = static_cast<double>(k) * step;
    if (w <= 0.0) continue;
    const double v = los_logdet(P_i, P_j, H_i, H_j, R, w);
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  return best_w;
}

struct LosResult {
  double omega = 1.0;
  Vec x;
  Mat P;
  Vec gain;
};

/// Full LoS update with grid-searched omega (or a caller-supplied omega).
inline LosResult los_update(const Vec& x_i, const Mat& P_i, const Vec& x_j,
                            const Mat& P_j, const RowVec& H_i,
                            const RowVec& H_j, double z_hat, double z, double R,
                            double forced_omega = -1.0) {
  LosResult out;
  out.omega = forced_omega > 0.0 ? forced_omega
                                 : los_omega_grid(P_i, P_j, H_i, H_j, R);
  if (out.omega == 1.0) {
    const double b = (H_j * P_j * H_j.transpose())(0, 0);
    if (b > 0.0) {  // limit of the bound: no information flows
      out.x = x_i;
      out.P = P_i;
      out.gain = Vec::Zero(x_i.size());
      return out;
    }
  }
  out.gain = los_gain(P_i, P_j, H_i, H_j, R, out.omega);
  out.x = x_i + out.gain * (z - z_hat);
  out.P = los_bound(P_i, P_j, H_i, H_j, R, out.omega);
  return out;
}

// ---------------------------------------------------------------------------
// Schmidt-Kalman NLoS update, literal formulas.

struct NlosParams {
  Mat P_i, P_j;
  RowVec H_i, H_j;
  Vec C_ii, C_ji;
  double B = 0.0;
  double R = 0.0;
};

inline double nlos_S(const NlosParams& p, double w) {
  const double a = (p.H_i * p.P_i * p.H_i.transpose())(0, 0);
  const double b = (p.H_j * p.P_j * p.H_j.transpose())(0, 0);
  return a / w + b / (1.0 - w) + (p.H_i * p.C_ii)(0, 0) +
         (p.H_j * p.C_ji)(0, 0) + (p.C_ii.transpose() * p.H_i.transpose())(0, 0) +
         (p.C_ji.transpose() * p.H_j.transpose())(0, 0) + p.B + p.R;
}

inline Vec nlos_gain(const NlosParams& p, double w) {
  return ((p.P_i / w) * p.H_i.transpose() + p.C_ii) / nlos_S(p, w);
}

inline Mat nlos_bound(const NlosParams& p, double w) {
  const Vec g = (p.P_i / w) * p.H_i.transpose() + p.C_ii;
  return p.P_i / w - g * (1.0 / nlos_S(p, w)) * g.transpose();
}

inline double nlos_logdet(const NlosParams& p, double w) {
  const double S = nlos_S(p, w);
  if (!(S > 1e-12)) return kInf;
  const Mat bound = nlos_bound(p, w);
  if (!bound.allFinite()) return kInf;
  Eigen::SelfAdjointEigenSolver<Mat> eig((bound + bound.transpose()) / 2.0);
  if (eig.eigenvalues().minCoeff() <= 0.0) return kInf;
  return eig.eigenvalues().array().log().sum();
}

/// omega = 1 limit: the target block drops out entirely when the target is
/// uncertain, otherwise the plain Schmidt update remains.
inline double nlos_logdet_at_one(const NlosParams& p) {
  const double b = (p.H_j * p.P_j * p.H_j.transpose())(0, 0);
  if (b > 0.0) {
    const double det = p.P_i.determinant();
    return det > 0.0 ? std::log(det) : kInf;
  }
  return nlos_logdet(p, 1.0);
}

inline double nlos_omega_grid(const NlosParams& p, double step = 1e-5) {
  double best_w = 1.0;
  double best = kInf;
  const auto n_steps = static_cast<std::int64_t>(std::llround(1.0 / step));
  for (std::int64_t k = 0; k <= n_steps; ++k) {
    const double w = static_cast<double>(k) * step;
    if (w <= 0.0) continue;
    const double v = (w == 1.0) ? nlos_logdet_at_one(p) : nlos_logdet(p, w);
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  return best_w;
}

struct NlosResult {
  double omega = 1.0;
  Vec x;
  Mat P;
  Vec gain;
  Vec C_ii_post;
};

inline NlosResult nlos_update(const Vec& x_i, const NlosParams& p,
                              double z_hat, double z,
                              double forced_omega = -1.0) {
  NlosResult out;
  out.omega = forced_omega > 0.0 ? forced_omega : nlos_omega_grid(p);
  const double b = (p.H_j * p.P_j * p.H_j.transpose())(0, 0);
  if (out.omega == 1.0 && b > 0.0) {
    out.x = x_i;
    out.P = p.P_i;
    out.gain = Vec::Zero(x_i.size());
    out.C_ii_post = p.C_ii;
    return out;
  }
  out.gain = nlos_gain(p, out.omega);
  out.x = x_i + out.gain * (z - z_hat);
  out.P = nlos_bound(p, out.omega);
  const Mat I = Mat::Identity(x_i.size(), x_i.size());
  out.C_ii_post = (I - out.gain * p.H_i) * p.C_ii -
                  out.gain * (p.H_j * p.C_ji)(0, 0) - out.gain * p.B;
  return out;
}

// ---------------------------------------------------------------------------
// Compact (communication-reduced) NLoS update, derived from the block bound
// that scales the observer's joint (state, bias) block by 1/omega.

struct CompactParams {
  Mat P_i, P_j;
  RowVec H_i, H_j;
  Vec C_ii;
  double B = 0.0;
  double R = 0.0;
};

inline double compact_S(const CompactParams& p, double w) {
  const double a = (p.H_i * p.P_i * p.H_i.transpose())(0, 0);
  const double b = (p.H_j * p.P_j * p.H_j.transpose())(0, 0);
  const double g = (p.H_i * p.C_ii)(0, 0);
  return (a + 2.0 * g + p.B) / w + b / (1.0 - w) + p.R;
}

inline Vec compact_gain(const CompactParams& p, double w) {
  return ((p.P_i * p.H_i.transpose() + p.C_ii) / w) / compact_S(p, w);
}

inline Mat compact_bound(const CompactParams& p, double w) {
  const Vec g = (p.P_i * p.H_i.transpose() + p.C_ii) / w;
  return p.P_i / w - g * (1.0 / compact_S(p, w)) * g.transpose();
}

inline double compact_logdet(const CompactParams& p, double w) {
  const double S = compact_S(p, w);
  if (!(S > 1e-12)) return kInf;
  const Mat bound = compact_bound(p, w);
  if (!bound.allFinite()) return kInf;
  Eigen::SelfAdjointEigenSolver<Mat> eig((bound + bound.transpose()) / 2.0);
  if (eig.eigenvalues().minCoeff() <= 0.0) return kInf;
  return eig.eigenvalues().array().log().sum();
}

inline double compact_omega_grid(const CompactParams& p, double step = 1e-5) {
  double best_w = 1.0;
  double best = kInf;
  const double b = (p.H_j * p.P_j * p.H_j.transpose())(0, 0);
  const auto n_steps = static_cast<std::int64_t>(std::llround(1.0 / step));
  for (std::int64_t k = 0; k <= n_steps; ++k) {
    const double w = static_cast<double>(k) * step;
    if (w <= 0.0) continue;
    double v;
    if (w == 1.0 && b > 0.0) {
      const double det = p.P_i.determinant();
      v = det > 0.0 ? std::log(det) : kInf;
    } else {
      v = compact_logdet(p, w);
    }
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  return best_w;
}

// ---------------------------------------------------------------------------
// Plain Kalman update against a known position (range measurement).

struct KalmanResult {
  Vec x;
  Mat P;
  double gain_scale = 0.0;
};

inline KalmanResult beacon_kalman(const Vec& x, const Mat& P, const RowVec& H,
                                  double z_hat, double z, double R) {
  const double S = (H * P * H.transpose())(0, 0) + R;
  const Vec K = P * H.transpose() / S;
  KalmanResult out;
  out.x = x + K * (z - z_hat);
  const Mat I = Mat::Identity(x.size(), x.size());
  out.P = (I - K * H) * P * (I - K * H).transpose() + K * R * K.transpose();
  out.gain_scale = K.norm();
  return out;
}

// ---------------------------------------------------------------------------
// Mode probability evolution and moment matching.

inline double gaussian_density(double innovation, double S) {
  return std::exp(-innovation * innovation / (2.0 * S)) /
         std::sqrt(2.0 * std::numbers::pi * S);
}

inline std::pair<double, double> evolve_modes(double p_los, double p_nlos,
                                              double L_los, double L_nlos) {
  const double denom = L_los * p_los + L_nlos * p_nlos;
  return {L_los * p_los / denom, L_nlos * p_nlos / denom};
}

inline std::pair<Vec, Mat> moment_match(const Vec& x1, const Mat& P1,
                                        const Vec& x2, const Mat& P2,
                                        double w1, double w2) {
  const Vec x = w1 * x1 + w2 * x2;
  const Vec d1 = x1 - x;
  const Vec d2 = x2 - x;
  const Mat P = w1 * (P1 + d1 * d1.transpose()) + w2 * (P2 + d2 * d2.transpose());
  return {x, P};
}

// ---------------------------------------------------------------------------
// Exact segment intersection on integer coordinates (for the line-of-sight
// oracle all test coordinates are integers, so the arithmetic is exact).

inline long long iorient(long long px, long long py, long long qx,
                         long long qy, long long rx, long long ry) {
  return (qx - px) * (ry - py) - (qy - py) * (rx - px);
}

inline bool on_segment_int(long long px, long long py, long long qx,
                           long long qy, long long rx, long long ry) {
  return std::min(px, qx) <= rx && rx <= std::max(px, qx) &&
         std::min(py, qy) <= ry && ry <= std::max(py, qy);
}

inline bool segments_intersect_int(long long x1, long long y1, long long x2,
                                   long long y2, long long x3, long long y3,
                                   long long x4, long long y4) {
  const long long d1 = iorient(x3, y3, x4, y4, x1, y1);
  const long long d2 = iorient(x3, y3, x4, y4, x2, y2);
  const long long d3 = iorient(x1, y1, x2, y2, x3, y3);
  const long long d4 = iorient(x1, y1, x2, y2, x4, y4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment_int(x3, y3, x4, y4, x1, y1)) return true;
  if (d2 == 0 && on_segment_int(x3, y3, x4, y4, x2, y2)) return true;
  if (d3 == 0 && on_segment_int(x1, y1, x2, y2, x3, y3)) return true;
  if (d4 == 0 && on_segment_int(x1, y1, x2, y2, x4, y4)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Truncated normal mean by composite Simpson quadrature.

inline double truncated_normal_mean_quadrature(double mu, double sigma,
                                               double lower) {
  const double hi = mu + 12.0 * sigma;
  const int n = 20000;  // even
  const double h = (hi - lower) / n;
  auto pdf = [&](double x) {
    const double t = (x - mu) / sigma;
    return std::exp(-0.5 * t * t) /
           (sigma * std::sqrt(2.0 * std::numbers::pi));
  };
  double mass = 0.0, first = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double x = lower + k * h;
    const double wgt = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    mass += wgt * pdf(x);
    first += wgt * x * pdf(x);
  }
  return first / mass;
}

// ---------------------------------------------------------------------------
// Random PSD matrices and beliefs for property tests.

inline Mat random_spd(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat A(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) A(r, c) = g(rng);
  }
  return scale * (A * A.transpose() / n + 0.05 * Mat::Identity(n, n));
}

}  // namespace oracle
