#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aucl/discriminator.hpp"
#include "aucl/imm.hpp"
#include "aucl/math.hpp"
#include "aucl/types.hpp"

namespace aucl {

struct MotionNoise {
  double sigma_v = 0.0;      ///< [m/s]
  double sigma_omega = 0.0;  ///< [rad/s]
};

struct OdometrySample {
  double v = 0.0;
  double omega = 0.0;
};

struct Propagated {
  Belief belief;
  Mat F;  ///< motion Jacobian, feeds the cross-covariance propagation
};

/// Unicycle dead-reckoning propagation of a planar (x, y, theta) belief.
inline Propagated propagate_dead_reckoning(const Belief& bel,
                                           const OdometrySample& odom,
                                           const MotionNoise& noise,
                                           double dt) {
  if (bel.dim() != 3) {
    throw std::invalid_argument("propagate_dead_reckoning: state must be 3d");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("propagate_dead_reckoning: dt <= 0");
  }
  const double th = bel.x_hat(2);
  Vec x(3);
  x << bel.x_hat(0) + odom.v * dt * std::cos(th),
      bel.x_hat(1) + odom.v * dt * std::sin(th),
      wrap_angle(th + odom.omega * dt);

  Mat F = Mat::Identity(3, 3);
  F(0, 2) = -odom.v * dt * std::sin(th);
  F(1, 2) = odom.v * dt * std::cos(th);

  Mat G(3, 2);
  G << dt * std::cos(th), 0.0, dt * std::sin(th), 0.0, 0.0, dt;
  Mat Q = Eigen::Vector2d(noise.sigma_v * noise.sigma_v,
                          noise.sigma_omega * noise.sigma_omega)
              .asDiagonal();

  Mat P = F * bel.P.matrix() * F.transpose() + G * Q * G.transpose();
  Propagated out;
  out.belief = Belief(std::move(x), Covariance(P), bel.stamp + 1);
  out.F = std::move(F);
  return out;
}

/// Wall segment; obstacles block radio propagation only.
struct Segment {
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
};

namespace detail {

inline double orient(const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                     const Eigen::Vector2d& r) {
  return (q.x() - p.x()) * (r.y() - p.y()) -
         (q.y() - p.y()) * (r.x() - p.x());
}

inline bool on_segment(const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                       const Eigen::Vector2d& r) {
  return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) &&
         std::min(p.y(), q.y()) <= r.y() && r.y() <= std::max(p.y(), q.y());
}

/// Proper and improper (endpoint or collinear-overlap) intersections both
/// count.
inline bool segments_intersect(const Eigen::Vector2d& p1,
                               const Eigen::Vector2d& p2,
                               const Eigen::Vector2d& p3,
                               const Eigen::Vector2d& p4) {
  const double d1 = orient(p3, p4, p1);
  const double d2 = orient(p3, p4, p2);
  const double d3 = orient(p1, p2, p3);
  const double d4 = orient(p1, p2, p4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment(p3, p4, p1)) return true;
  if (d2 == 0 && on_segment(p3, p4, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, p3)) return true;
  if (d4 == 0 && on_segment(p1, p2, p4)) return true;
  return false;
}

}  // namespace detail

/// True iff the straight path between the two points crosses no obstacle.
/// Touching an obstacle endpoint counts as blocked.
inline bool line_of_sight(const Eigen::Vector2d& p_a,
                          const Eigen::Vector2d& p_b,
                          std::span<const Segment> obstacles) {
  if (!p_a.allFinite() || !p_b.allFinite()) {
    throw std::invalid_argument("line_of_sight: non-finite point");
  }
  for (const auto& wall : obstacles) {
    if (detail::segments_intersect(p_a, p_b, wall.a, wall.b)) return false;
  }
  return true;
}

struct AgentSpec {
  int id = -1;
  std::vector<Eigen::Vector2d> waypoints;
  double speed = 1.0;  ///< [m/s]
};

struct BeaconSpec {
  int id = -1;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

struct BiasSpec {
  double phi_bar = 1.0;  ///< [m]
  double Phi = 0.25;     ///< [m^2]
};

struct PowerMetricModel {
  double mu_los = 3.0;    ///< [dB]
  double mu_nlos = 10.0;  ///< [dB]
  double sigma = 1.5;     ///< [dB]
};

struct FilterConfig {
  SigmoidParams sigmoid;
  double deterministic_threshold = 6.934;  ///< [dB]
  BiasHandling bias_handling = BiasHandling::kZeroMean;
  CombineRule combine_rule = CombineRule::kPaperLiteral;
  Eigen::Vector3d initial_cov_diag{0.02, 0.02, 0.005};
  double comm_range = -1.0;  ///< negative means "use sensing_range"
};

struct WorldConfig {
  int schema_version = 1;
  std::string name = "scenario";
  std::vector<AgentSpec> agents;
  std::vector<BeaconSpec> beacons;
  std::vector<Segment> obstacles;
  double dt = 0.5;          ///< [s]
  double duration = 100.0;  ///< [s]
  double sigma_v = 0.05;
  double sigma_omega = 0.01;
  double range_noise_var = 0.01;  ///< R [m^2]
  BiasSpec bias;
  PowerMetricModel power_metric;
  double sensing_range = 20.0;   ///< [m]
  int max_ranges_per_step = 0;   ///< per observer; 0 = unlimited
  std::uint64_t seed = 1;
  FilterConfig filter;
  std::vector<std::string> variants;  ///< processing variants; empty = all

  void validate() const {
    if (schema_version != 1) {
      throw std::invalid_argument("WorldConfig: unsupported schema_version");
    }
    if (!(dt > 0.0)) throw std::invalid_argument("WorldConfig: dt <= 0");
    if (!(duration >= 0.0)) {
      throw std::invalid_argument("WorldConfig: negative duration");
    }
    if (!(sensing_range > 0.0)) {
      throw std::invalid_argument("WorldConfig: sensing_range <= 0");
    }
    if (sigma_v < 0.0 || sigma_omega < 0.0) {
      throw std::invalid_argument("WorldConfig: negative odometry noise");
    }
    if (!(range_noise_var > 0.0)) {
      throw std::invalid_argument("WorldConfig: range_noise_var <= 0");
    }
    if (!(bias.Phi > 0.0)) throw std::invalid_argument("WorldConfig: Phi <= 0");
    if (power_metric.sigma < 0.0) {
      throw std::invalid_argument("WorldConfig: negative sigma_pm");
    }
    if (agents.empty()) throw std::invalid_argument("WorldConfig: no agents");
    std::vector<int> ids;
    for (const auto& a : agents) {
      if (a.waypoints.empty()) {
        throw std::invalid_argument("WorldConfig: agent without waypoints");
      }
      if (!(a.speed > 0.0)) {
        throw std::invalid_argument("WorldConfig: agent speed <= 0");
      }
      ids.push_back(a.id);
    }
    for (const auto& b : beacons) ids.push_back(b.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw std::invalid_argument("WorldConfig: duplicate node ids");
    }
  }

  std::vector<int> agent_ids() const {
    std::vector<int> ids;
    for (const auto& a : agents) ids.push_back(a.id);
    return ids;
  }

  double comm_range() const {
    return filter.comm_range > 0.0 ? filter.comm_range : sensing_range;
  }
};

/// Ground-truth annotations of one synthesized measurement.
struct SynthesizedMeasurement {
  RangeMeasurement meas;
  bool nlos = false;
  double bias = 0.0;  ///< actual bias draw, zero under LoS
};

struct StepRecord {
  std::int64_t step = 0;
  std::vector<Eigen::Vector3d> true_poses;  ///< config agent order
  std::vector<OdometrySample> odometry;     ///< config agent order
  std::vector<SynthesizedMeasurement> measurements;
};

/// Synthetic world: waypoint-following unicycle agents, wall geometry
/// deciding the true measurement mode, and range/power-metric synthesis.
/// A fixed seed reproduces the full stream bit for bit.
class World {
 public:
  World(WorldConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    poses_.reserve(cfg_.agents.size());
    wp_index_.assign(cfg_.agents.size(), 0);
    for (const auto& a : cfg_.agents) {
      const Eigen::Vector2d p0 = a.waypoints.front();
      Eigen::Vector2d look =
          a.waypoints.size() > 1 ? a.waypoints[1] : a.waypoints[0];
      const double th0 = a.waypoints.size() > 1
                             ? std::atan2(look.y() - p0.y(), look.x() - p0.x())
                             : 0.0;
      poses_.emplace_back(p0.x(), p0.y(), th0);
    }
    // Node lookup sorted by id so the measurement schedule is id-ordered.
    for (std::size_t k = 0; k < cfg_.agents.size(); ++k) {
      nodes_.push_back({cfg_.agents[k].id, false, k});
    }
    for (std::size_t k = 0; k < cfg_.beacons.size(); ++k) {
      nodes_.push_back({cfg_.beacons[k].id, true, k});
    }
    std::sort(nodes_.begin(), nodes_.end(),
              [](const Node& a, const Node& b) { return a.id < b.id; });
  }

  const WorldConfig& config() const { return cfg_; }

  int steps_total() const {
    return static_cast<int>(std::llround(cfg_.duration / cfg_.dt));
  }

  const std::vector<Eigen::Vector3d>& true_poses() const { return poses_; }

  /// Synthesizes one ranging event between two nodes at their current true
  /// positions; no measurement is emitted beyond the sensing range.
  std::optional<SynthesizedMeasurement> synthesize_measurement(int observer_id,
                                                               int target_id) {
    const Node* obs = find_node(observer_id);
    const Node* tgt = find_node(target_id);
    if (!obs || !tgt || obs->is_beacon) return std::nullopt;
    const Eigen::Vector2d p_obs = poses_[obs->index].head<2>();
    const Eigen::Vector2d p_tgt =
        tgt->is_beacon ? cfg_.beacons[tgt->index].position
                       : poses_[tgt->index].head<2>().eval();
    if ((p_obs - p_tgt).norm() > cfg_.sensing_range) return std::nullopt;
    return synthesize(observer_id, target_id, p_obs, p_tgt);
  }

  StepRecord step() {
    ++step_;
    StepRecord rec;
    rec.step = step_;
    rec.true_poses.resize(cfg_.agents.size());
    rec.odometry.resize(cfg_.agents.size());

    for (std::size_t k = 0; k < cfg_.agents.size(); ++k) {
      const OdometrySample cmd = control(k);
      advance_truth(k, cmd);
      rec.true_poses[k] = poses_[k];
      rec.odometry[k] = {cmd.v + cfg_.sigma_v * gauss_(rng_),
                         cmd.omega + cfg_.sigma_omega * gauss_(rng_)};
    }

    for (std::size_t k = 0; k < cfg_.agents.size(); ++k) {
      int emitted = 0;
      const Eigen::Vector2d p_obs = poses_[k].head<2>();
      for (const Node& node : nodes_) {
        if (!node.is_beacon && node.index == k) continue;
        if (cfg_.max_ranges_per_step > 0 &&
            emitted >= cfg_.max_ranges_per_step) {
          break;
        }
        const Eigen::Vector2d p_tgt =
            node.is_beacon ? cfg_.beacons[node.index].position
                           : poses_[node.index].head<2>().eval();
        const double d = (p_obs - p_tgt).norm();
        if (d > cfg_.sensing_range) continue;
        rec.measurements.push_back(
            synthesize(cfg_.agents[k].id, node.id, p_obs, p_tgt));
        ++emitted;
      }
    }
    return rec;
  }

 private:
  struct Node {
    int id;
    bool is_beacon;
    std::size_t index;
  };

  const Node* find_node(int id) const {
    for (const Node& n : nodes_) {
      if (n.id == id) return &n;
    }
    return nullptr;
  }

  OdometrySample control(std::size_t k) {
    const auto& spec = cfg_.agents[k];
    Eigen::Vector3d& pose = poses_[k];
    if (spec.waypoints.size() == 1) return {0.0, 0.0};
    const double capture = std::max(0.3, spec.speed * cfg_.dt);
    Eigen::Vector2d to = spec.waypoints[wp_index_[k]];
    if ((to - pose.head<2>()).norm() < capture) {
      wp_index_[k] = (wp_index_[k] + 1) % spec.waypoints.size();
      to = spec.waypoints[wp_index_[k]];
    }
    const double bearing =
        std::atan2(to.y() - pose.y(), to.x() - pose.x());
    const double err = wrap_angle(bearing - pose.z());
    const double w = std::clamp(2.0 * err, -2.0, 2.0);
    return {spec.speed, w};
  }

  void advance_truth(std::size_t k, const OdometrySample& u) {
    Eigen::Vector3d& pose = poses_[k];
    pose.x() += u.v * cfg_.dt * std::cos(pose.z());
    pose.y() += u.v * cfg_.dt * std::sin(pose.z());
    pose.z() = wrap_angle(pose.z() + u.omega * cfg_.dt);
  }

  SynthesizedMeasurement synthesize(int observer, int target,
                                    const Eigen::Vector2d& p_obs,
                                    const Eigen::Vector2d& p_tgt) {
    const double d = (p_obs - p_tgt).norm();
    const bool los = line_of_sight(p_obs, p_tgt, cfg_.obstacles);
    const double nu = std::sqrt(cfg_.range_noise_var) * gauss_(rng_);
    const double pm = (los ? cfg_.power_metric.mu_los : cfg_.power_metric.mu_nlos) +
                      cfg_.power_metric.sigma * gauss_(rng_);
    double bias = 0.0;
    if (!los) {
      bias = truncated_normal_sample(cfg_.bias.phi_bar,
                                     std::sqrt(cfg_.bias.Phi), 0.0,
                                     uniform_(rng_));
    }
    SynthesizedMeasurement out;
    out.nlos = !los;
    out.bias = bias;
    out.meas = RangeMeasurement(observer, target, std::max(d + nu + bias, 0.0),
                                pm, step_);
    return out;
  }

  WorldConfig cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::vector<Eigen::Vector3d> poses_;
  std::vector<std::size_t> wp_index_;
  std::vector<Node> nodes_;
  std::int64_t step_ = 0;
};

}  // namespace aucl
