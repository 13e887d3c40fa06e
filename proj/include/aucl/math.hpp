#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace aucl {

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

/// Density of N(0, variance) at x. Returns 0 for infinite variance.
inline double normal_pdf(double x, double variance) {
  return std::exp(-x * x / (2.0 * variance)) /
         std::sqrt(2.0 * std::numbers::pi * variance);
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Inverse standard normal CDF (Acklam's rational approximation plus one
/// Halley refinement against the exact CDF).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

/// Draws from N(mu, sigma^2) truncated below at `lower` via the inverse CDF,
/// consuming a single uniform u in [0,1). Deterministic in u.
inline double truncated_normal_sample(double mu, double sigma, double lower,
                                      double u) {
  if (sigma <= 0.0) return std::max(mu, lower);
  const double f0 = normal_cdf((lower - mu) / sigma);
  double p = f0 + u * (1.0 - f0);
  p = std::min(std::max(p, std::nextafter(0.0, 1.0)), 1.0 - 1e-16);
  const double z = normal_quantile(p);
  return std::max(mu + sigma * z, lower);
}

struct ScalarMinOptions {
  int grid_points = 64;
  double tolerance = 1e-5;
};

/// Minimizes f over [lo, hi] with a coarse grid followed by golden-section
/// refinement around the grid minimum. Non-finite evaluations are skipped.
/// Ties resolve to the smallest argument. Returns nullopt when f is
/// non-finite everywhere on the grid.
inline std::optional<double> minimize_scalar(
    const std::function<double(double)>& f, double lo, double hi,
    const ScalarMinOptions& opt = {}) {
  if (!(hi >= lo)) throw std::invalid_argument("minimize_scalar: hi < lo");
  const double inf = std::numeric_limits<double>::infinity();
  double best_x = lo;
  double best_v = inf;
  auto eval = [&](double x) {
    double v = f(x);
    if (!std::isfinite(v)) return inf;
    if (v < best_v || (v == best_v && x < best_x)) {
      best_v = v;
      best_x = x;
    }
    return v;
  };

  const int n = std::max(opt.grid_points, 2);
  int best_idx = 0;
  double grid_best = inf;
  for (int k = 0; k < n; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / (n - 1);
    const double v = eval(x);
    if (v < grid_best) {
      grid_best = v;
      best_idx = k;
    }
  }
  if (!std::isfinite(best_v)) return std::nullopt;

  double a = lo + (hi - lo) * static_cast<double>(std::max(best_idx - 1, 0)) /
                      (n - 1);
  double b = lo + (hi - lo) *
                      static_cast<double>(std::min(best_idx + 1, n - 1)) /
                      (n - 1);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  while (b - a > opt.tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = eval(d);
    }
  }
  return best_x;
}

}  // namespace aucl
