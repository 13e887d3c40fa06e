#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "aucl/math.hpp"

namespace aucl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Raised when an update cannot be completed for numerical reasons
/// (singular prior, invalid innovation variance, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::atomic<std::uint64_t> psd_clip_warnings{0};
inline std::atomic<std::uint64_t> missing_bias_entries{0};
}  // namespace detail

/// Number of times a covariance needed eigenvalue clipping beyond roundoff
/// (eigenvalue below -1e-9).
inline std::uint64_t psd_clip_warning_count() {
  return detail::psd_clip_warnings.load();
}

/// Number of cross-covariance lookups that fell back to zero because the
/// transmitted correlation set was missing an entry.
inline std::uint64_t missing_bias_entry_count() {
  return detail::missing_bias_entries.load();
}

/// Symmetric positive-semidefinite matrix. Construction symmetrizes the
/// input and clips negative eigenvalues at zero.
class Covariance {
 public:
  Covariance() = default;

  explicit Covariance(const Mat& raw) : m_(sanitize(raw)) {}

  const Mat& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }
  double trace() const { return m_.trace(); }
  double determinant() const { return m_.determinant(); }

 private:
  static Mat sanitize(const Mat& raw) {
    if (raw.rows() != raw.cols()) {
      throw std::invalid_argument("Covariance: matrix must be square");
    }
    if (!raw.allFinite()) {
      throw std::invalid_argument("Covariance: matrix must be finite");
    }
    Mat s = (raw + raw.transpose()) / 2.0;
    // Positive definite symmetric input passes through unchanged.
    Eigen::LLT<Mat> llt(s);
    if (llt.info() == Eigen::Success) return s;
    Eigen::SelfAdjointEigenSolver<Mat> eig(s);
    if (eig.info() != Eigen::Success) {
      throw std::invalid_argument("Covariance: eigendecomposition failed");
    }
    Vec lam = eig.eigenvalues();
    if (lam.minCoeff() < -1e-9) {
      detail::psd_clip_warnings.fetch_add(1, std::memory_order_relaxed);
    }
    lam = lam.cwiseMax(0.0);
    Mat out = eig.eigenvectors() * lam.asDiagonal() *
              eig.eigenvectors().transpose();
    return (out + out.transpose()) / 2.0;
  }

  Mat m_;
};

inline Covariance make_covariance(const Mat& raw) { return Covariance(raw); }

/// State estimate together with its error covariance.
struct Belief {
  Vec x_hat;
  Covariance P;
  std::int64_t stamp = 0;

  Belief() = default;
  Belief(Vec x, Covariance cov, std::int64_t t = 0)
      : x_hat(std::move(x)), P(std::move(cov)), stamp(t) {
    if (x_hat.size() != P.dim()) {
      throw std::invalid_argument("Belief: state/covariance dimensions differ");
    }
    if (!x_hat.allFinite()) {
      throw std::invalid_argument("Belief: state must be finite");
    }
    if (stamp < 0) throw std::invalid_argument("Belief: negative stamp");
  }

  Eigen::Index dim() const { return x_hat.size(); }
  Eigen::Vector2d position() const {
    if (x_hat.size() < 2) {
      throw std::invalid_argument("Belief: no position sub-vector");
    }
    return x_hat.head<2>();
  }
};

enum class BiasHandling { kZeroMean, kMeanSubtracted };

/// Range-bias statistics of one observing agent. Under the default
/// convention the running estimate stays at zero and B carries the full
/// second moment phi_bar^2 + Phi; the alternative convention subtracts the
/// mean from the predicted measurement instead.
struct BiasModel {
  double phi_bar = 0.0;  ///< mean of the NLoS bias [m]
  double Phi = 1.0;      ///< bias variance [m^2]
  double b_hat = 0.0;    ///< running bias estimate [m]
  double B = 1.0;        ///< bias second moment about b_hat [m^2]

  static BiasModel make(double phi_bar, double Phi,
                        BiasHandling handling = BiasHandling::kZeroMean) {
    if (!(Phi > 0.0) || !std::isfinite(Phi) || !std::isfinite(phi_bar)) {
      throw std::invalid_argument("BiasModel: Phi must be positive and finite");
    }
    BiasModel m;
    m.phi_bar = phi_bar;
    m.Phi = Phi;
    if (handling == BiasHandling::kZeroMean) {
      m.b_hat = 0.0;
      m.B = phi_bar * phi_bar + Phi;
    } else {
      m.b_hat = phi_bar;
      m.B = Phi;
    }
    return m;
  }
};

/// Per-agent set of state-bias cross-covariances C^{il}, keyed by the id of
/// the agent whose measurement bias the column correlates with.
struct BiasBook {
  int owner = -1;
  std::map<int, Vec> C;

  static BiasBook zeros(int owner, const std::vector<int>& agent_ids,
                        Eigen::Index nx) {
    BiasBook book;
    book.owner = owner;
    for (int id : agent_ids) book.C.emplace(id, Vec::Zero(nx));
    return book;
  }

  /// Entry for agent `id`; zero (with a diagnostic count) when absent.
  Vec entry_or_zero(int id, Eigen::Index nx) const {
    auto it = C.find(id);
    if (it != C.end()) return it->second;
    detail::missing_bias_entries.fetch_add(1, std::memory_order_relaxed);
    return Vec::Zero(nx);
  }
};

/// Normalized LoS/NLoS mode probabilities.
struct ModeProbabilities {
  double p_los = 0.5;
  double p_nlos = 0.5;

  ModeProbabilities() = default;
  ModeProbabilities(double los, double nlos) : p_los(los), p_nlos(nlos) {
    if (!std::isfinite(los) || !std::isfinite(nlos) || los < 0.0 ||
        nlos < 0.0 || los > 1.0 || nlos > 1.0) {
      throw std::invalid_argument("ModeProbabilities: values outside [0,1]");
    }
    if (std::abs(los + nlos - 1.0) > 1e-9) {
      throw std::invalid_argument("ModeProbabilities: must sum to one");
    }
    const double s = los + nlos;
    p_los = los / s;
    p_nlos = nlos / s;
  }

  static ModeProbabilities from_nlos(double p) {
    return ModeProbabilities(1.0 - p, p);
  }
};

/// One UWB ranging event.
struct RangeMeasurement {
  int observer = -1;
  int target = -1;
  double z = 0.0;             ///< measured range [m]
  double power_metric = 0.0;  ///< discriminator input [dB]
  std::int64_t stamp = 0;

  RangeMeasurement() = default;
  RangeMeasurement(int obs, int tgt, double range, double pm, std::int64_t t)
      : observer(obs), target(tgt), z(range), power_metric(pm), stamp(t) {
    if (obs == tgt) {
      throw std::invalid_argument("RangeMeasurement: observer == target");
    }
    if (!(range >= 0.0) || !std::isfinite(range)) {
      throw std::invalid_argument("RangeMeasurement: range must be >= 0");
    }
    if (!std::isfinite(pm)) {
      throw std::invalid_argument("RangeMeasurement: power metric not finite");
    }
  }
};

struct AgentNode {
  int id = -1;
};

struct BeaconNode {
  int id = -1;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

/// A UWB node is either a mobile agent or a fixed beacon.
using NodeKind = std::variant<AgentNode, BeaconNode>;

enum class SkipReason { kNone, kDegenerateGeometry, kNumerical };

/// Updated belief plus the diagnostics of one measurement update.
struct UpdateOutcome {
  Belief belief;
  double omega_star = 1.0;
  Vec gain;
  double innovation = 0.0;
  double innovation_var = std::numeric_limits<double>::infinity();
  double likelihood = 0.0;
  bool skipped = false;
  SkipReason skip_reason = SkipReason::kNone;
};

}  // namespace aucl
