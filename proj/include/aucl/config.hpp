#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aucl/sim.hpp"

namespace aucl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using json = nlohmann::json;

inline Eigen::Vector2d parse_vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(where + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline WorldConfig parse_world_config(const nlohmann::json& j) {
  using detail::get_or;
  using detail::parse_vec2;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  WorldConfig cfg;
  cfg.schema_version = get_or(j, "schema_version", 1);
  cfg.name = get_or<std::string>(j, "name", "scenario");
  cfg.dt = get_or(j, "dt", cfg.dt);
  cfg.duration = get_or(j, "duration", cfg.duration);
  cfg.sensing_range = get_or(j, "sensing_range", cfg.sensing_range);
  cfg.max_ranges_per_step =
      get_or(j, "max_ranges_per_step", cfg.max_ranges_per_step);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.range_noise_var = get_or(j, "range_noise_var", cfg.range_noise_var);

  if (j.contains("odometry_noise")) {
    const auto& n = j.at("odometry_noise");
    cfg.sigma_v = get_or(n, "sigma_v", cfg.sigma_v);
    cfg.sigma_omega = get_or(n, "sigma_omega", cfg.sigma_omega);
  }
  if (j.contains("bias")) {
    const auto& b = j.at("bias");
    cfg.bias.phi_bar = get_or(b, "mean", cfg.bias.phi_bar);
    cfg.bias.Phi = get_or(b, "variance", cfg.bias.Phi);
  }
  if (j.contains("power_metric")) {
    const auto& p = j.at("power_metric");
    cfg.power_metric.mu_los = get_or(p, "mu_los", cfg.power_metric.mu_los);
    cfg.power_metric.mu_nlos = get_or(p, "mu_nlos", cfg.power_metric.mu_nlos);
    cfg.power_metric.sigma = get_or(p, "sigma", cfg.power_metric.sigma);
  }

  if (!j.contains("agents") || !j.at("agents").is_array()) {
    throw ConfigError("missing 'agents' array");
  }
  for (const auto& a : j.at("agents")) {
    AgentSpec spec;
    spec.id = a.at("id").get<int>();
    spec.speed = get_or(a, "speed", 1.0);
    if (!a.contains("waypoints") || !a.at("waypoints").is_array() ||
        a.at("waypoints").empty()) {
      throw ConfigError("agent " + std::to_string(spec.id) +
                        ": missing waypoints");
    }
    for (const auto& w : a.at("waypoints")) {
      spec.waypoints.push_back(parse_vec2(w, "waypoint"));
    }
    cfg.agents.push_back(std::move(spec));
  }
  for (const auto& b : detail::get_or(j, "beacons", nlohmann::json::array())) {
    BeaconSpec spec;
    spec.id = b.at("id").get<int>();
    spec.position = parse_vec2(b.at("position"), "beacon position");
    cfg.beacons.push_back(spec);
  }
  for (const auto& o : detail::get_or(j, "obstacles", nlohmann::json::array())) {
    if (!o.is_array() || o.size() != 2) {
      throw ConfigError("obstacle: expected [[x1,y1],[x2,y2]]");
    }
    cfg.obstacles.push_back(
        {parse_vec2(o[0], "obstacle endpoint"), parse_vec2(o[1], "obstacle endpoint")});
  }

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    if (f.contains("sigmoid")) {
      const auto& s = f.at("sigmoid");
      cfg.filter.sigmoid = SigmoidParams(
          get_or(s, "a", cfg.filter.sigmoid.a), get_or(s, "b", cfg.filter.sigmoid.b),
          get_or(s, "c", cfg.filter.sigmoid.c));
    }
    cfg.filter.deterministic_threshold =
        get_or(f, "deterministic_threshold", cfg.filter.deterministic_threshold);
    const std::string handling =
        get_or<std::string>(f, "bias_handling", "zero_mean");
    if (handling == "zero_mean") {
      cfg.filter.bias_handling = BiasHandling::kZeroMean;
    } else if (handling == "mean_subtracted") {
      cfg.filter.bias_handling = BiasHandling::kMeanSubtracted;
    } else {
      throw ConfigError("filter.bias_handling: unknown value '" + handling + "'");
    }
    const std::string rule =
        get_or<std::string>(f, "combine_rule", "paper_literal");
    if (rule == "paper_literal") {
      cfg.filter.combine_rule = CombineRule::kPaperLiteral;
    } else if (rule == "mixture") {
      cfg.filter.combine_rule = CombineRule::kMixture;
    } else {
      throw ConfigError("filter.combine_rule: unknown value '" + rule + "'");
    }
    if (f.contains("initial_cov_diag")) {
      const auto& d = f.at("initial_cov_diag");
      if (!d.is_array() || d.size() != 3) {
        throw ConfigError("filter.initial_cov_diag: expected 3 entries");
      }
      cfg.filter.initial_cov_diag =
          Eigen::Vector3d(d[0].get<double>(), d[1].get<double>(),
                          d[2].get<double>());
    }
    cfg.filter.comm_range = get_or(f, "comm_range", cfg.filter.comm_range);
  }

  for (const auto& v : detail::get_or(j, "variants", nlohmann::json::array())) {
    cfg.variants.push_back(v.get<std::string>());
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// Applies one "dotted.path=value" override onto a JSON document. The value
/// is parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + expr + "': expected path=value");
  }
  const std::string path = expr.substr(0, eq);
  const std::string raw = expr.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &doc;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  if (keys.empty()) throw ConfigError("override '" + expr + "': empty path");
  for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
    node = &(*node)[keys[k]];
  }
  (*node)[keys.back()] = value;
}

inline WorldConfig load_world_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_world_config(doc);
}

/// Canonical JSON echo of a configuration, used to detect scenario
/// mismatches between runs. The seed is not part of the identity.
inline nlohmann::json world_config_to_json(const WorldConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema_version"] = cfg.schema_version;
  j["name"] = cfg.name;
  j["dt"] = cfg.dt;
  j["duration"] = cfg.duration;
  j["sensing_range"] = cfg.sensing_range;
  j["max_ranges_per_step"] = cfg.max_ranges_per_step;
  j["range_noise_var"] = cfg.range_noise_var;
  j["odometry_noise"] = {{"sigma_v", cfg.sigma_v},
                         {"sigma_omega", cfg.sigma_omega}};
  j["bias"] = {{"mean", cfg.bias.phi_bar}, {"variance", cfg.bias.Phi}};
  j["power_metric"] = {{"mu_los", cfg.power_metric.mu_los},
                       {"mu_nlos", cfg.power_metric.mu_nlos},
                       {"sigma", cfg.power_metric.sigma}};
  auto agents = nlohmann::ordered_json::array();
  for (const auto& a : cfg.agents) {
    auto wps = nlohmann::ordered_json::array();
    for (const auto& w : a.waypoints) wps.push_back({w.x(), w.y()});
    agents.push_back({{"id", a.id}, {"speed", a.speed}, {"waypoints", wps}});
  }
  j["agents"] = agents;
  auto beacons = nlohmann::ordered_json::array();
  for (const auto& b : cfg.beacons) {
    beacons.push_back(
        {{"id", b.id}, {"position", {b.position.x(), b.position.y()}}});
  }
  j["beacons"] = beacons;
  auto obstacles = nlohmann::ordered_json::array();
  for (const auto& o : cfg.obstacles) {
    obstacles.push_back({{o.a.x(), o.a.y()}, {o.b.x(), o.b.y()}});
  }
  j["obstacles"] = obstacles;
  j["filter"] = {
      {"sigmoid",
       {{"a", cfg.filter.sigmoid.a},
        {"b", cfg.filter.sigmoid.b},
        {"c", cfg.filter.sigmoid.c}}},
      {"deterministic_threshold", cfg.filter.deterministic_threshold},
      {"bias_handling", cfg.filter.bias_handling == BiasHandling::kZeroMean
                            ? "zero_mean"
                            : "mean_subtracted"},
      {"combine_rule", cfg.filter.combine_rule == CombineRule::kPaperLiteral
                           ? "paper_literal"
                           : "mixture"},
      {"initial_cov_diag",
       {cfg.filter.initial_cov_diag.x(), cfg.filter.initial_cov_diag.y(),
        cfg.filter.initial_cov_diag.z()}},
      {"comm_range", cfg.filter.comm_range}};
  return j;
}

}  // namespace aucl
