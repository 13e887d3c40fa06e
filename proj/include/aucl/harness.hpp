#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aucl/config.hpp"
#include "aucl/discriminator.hpp"
#include "aucl/imm.hpp"
#include "aucl/network.hpp"
#include "aucl/sim.hpp"
#include "aucl/types.hpp"

namespace aucl {

enum class VariantId { kDrOnly, kNaiveUwb, kDeterministic, kAucl, kAuclCompact };

inline const char* variant_name(VariantId v) {
  switch (v) {
    case VariantId::kDrOnly: return "dr_only";
    case VariantId::kNaiveUwb: return "naive_uwb";
    case VariantId::kDeterministic: return "deterministic";
    case VariantId::kAucl: return "aucl";
    case VariantId::kAuclCompact: return "aucl_compact";
  }
  return "unknown";
}

inline std::optional<VariantId> variant_from_name(const std::string& s) {
  if (s == "dr_only") return VariantId::kDrOnly;
  if (s == "naive_uwb") return VariantId::kNaiveUwb;
  if (s == "deterministic") return VariantId::kDeterministic;
  if (s == "aucl") return VariantId::kAucl;
  if (s == "aucl_compact") return VariantId::kAuclCompact;
  return std::nullopt;
}

inline std::vector<VariantId> all_variants() {
  return {VariantId::kDrOnly, VariantId::kNaiveUwb, VariantId::kDeterministic,
          VariantId::kAucl, VariantId::kAuclCompact};
}

/// One metrics sample: estimate vs truth for one agent at one step.
struct MetricsRow {
  std::int64_t step = 0;
  Eigen::Vector3d truth = Eigen::Vector3d::Zero();
  Eigen::Vector3d estimate = Eigen::Vector3d::Zero();
  double pos_error = 0.0;
  double nees = 0.0;
  double p_los = std::numeric_limits<double>::quiet_NaN();
  double p_nlos = std::numeric_limits<double>::quiet_NaN();
  double trace_p = 0.0;
};

struct UpdateAudit {
  std::uint64_t measurements = 0;
  std::uint64_t branch_updates = 0;
  std::uint64_t combined_updates = 0;
  std::uint64_t det_violations = 0;
  double max_det_increase = 0.0;
  std::uint64_t skipped = 0;
  std::uint64_t fallbacks = 0;
  std::uint64_t underflows = 0;
  std::uint64_t dropped = 0;
  std::uint64_t stale_aborts = 0;
};

struct AgentSummary {
  int id = -1;
  double final_error = 0.0;
  double loop_closure_pct = 0.0;
  double mean_nees = 0.0;
  double path_length = 0.0;
};

struct VariantRunData {
  VariantId id = VariantId::kDrOnly;
  std::vector<std::vector<MetricsRow>> rows;  ///< per agent (config order)
  std::vector<MessageLogEntry> messages;
  UpdateAudit audit;
  std::vector<AgentSummary> agent_summaries;
  double final_rmse = 0.0;
  double mean_nees = 0.0;
  std::uint64_t belief_messages = 0;
  std::uint64_t bias_book_messages = 0;
};

struct RunData {
  WorldConfig cfg;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<VariantRunData> variants;
};

namespace detail {

struct AgentFilter {
  int id = -1;
  Belief belief;
  BiasModel bias;
  BiasBook book;
  ModeProbabilities last_posterior;
  bool had_measurement = false;
};

inline ModeProbabilities variant_modes(VariantId v, double pm,
                                       const FilterConfig& f) {
  switch (v) {
    case VariantId::kNaiveUwb: return ModeProbabilities(1.0, 0.0);
    case VariantId::kDeterministic:
      return deterministic_mode(pm, f.deterministic_threshold);
    default: return nlos_probability(pm, f.sigmoid);
  }
}

inline double det3(const Covariance& P) { return P.matrix().determinant(); }

inline void audit_transition(UpdateAudit& audit, double det_prior,
                             double det_post) {
  const double inc = det_post - det_prior;
  if (inc > 1e-12) {
    ++audit.det_violations;
    audit.max_det_increase = std::max(audit.max_det_increase, inc);
  }
}

}  // namespace detail

/// Runs every requested variant on the identical measurement stream.
inline RunData run_scenario(const WorldConfig& cfg, std::uint64_t seed,
                            const std::vector<VariantId>& variants) {
  RunData data;
  data.cfg = cfg;
  data.seed = seed;

  World world(cfg, seed);
  const int total_steps = world.steps_total();
  const std::size_t n_agents = cfg.agents.size();
  const std::vector<int> agent_ids = cfg.agent_ids();

  std::map<int, std::size_t> agent_index;
  for (std::size_t k = 0; k < n_agents; ++k) agent_index[cfg.agents[k].id] = k;
  std::map<int, Eigen::Vector2d> beacon_pos;
  for (const auto& b : cfg.beacons) beacon_pos[b.id] = b.position;

  struct VariantState {
    VariantId id;
    ImmOptions opt;
    std::vector<detail::AgentFilter> filters;
    ExchangeHub hub;
    VariantRunData out;
  };

  std::vector<VariantState> states;
  for (VariantId v : variants) {
    VariantState st;
    st.id = v;
    st.opt.combine_rule = cfg.filter.combine_rule;
    st.opt.compact = (v == VariantId::kAuclCompact);
    st.out.id = v;
    st.out.rows.resize(n_agents);
    for (std::size_t k = 0; k < n_agents; ++k) {
      detail::AgentFilter f;
      f.id = cfg.agents[k].id;
      const Eigen::Vector3d pose0 = world.true_poses()[k];
      Vec x0(3);
      x0 << pose0.x(), pose0.y(), pose0.z();
      f.belief = Belief(
          x0, Covariance(Mat(cfg.filter.initial_cov_diag.asDiagonal())), 0);
      f.bias = BiasModel::make(cfg.bias.phi_bar, cfg.bias.Phi,
                               cfg.filter.bias_handling);
      f.book = st.opt.compact ? BiasBook::zeros(f.id, {f.id}, 3)
                              : BiasBook::zeros(f.id, agent_ids, 3);
      st.filters.push_back(std::move(f));
    }
    states.push_back(std::move(st));
  }

  const MotionNoise noise{cfg.sigma_v, cfg.sigma_omega};
  std::vector<Eigen::Vector3d> prev_truth = world.true_poses();
  std::vector<double> path_length(n_agents, 0.0);

  for (int t = 1; t <= total_steps; ++t) {
    StepRecord rec = world.step();
    for (std::size_t k = 0; k < n_agents; ++k) {
      path_length[k] +=
          (rec.true_poses[k].head<2>() - prev_truth[k].head<2>()).norm();
    }
    prev_truth = rec.true_poses;

    for (auto& st : states) {
      for (std::size_t k = 0; k < n_agents; ++k) {
        auto prop = propagate_dead_reckoning(st.filters[k].belief,
                                             rec.odometry[k], noise, cfg.dt);
        st.filters[k].belief = std::move(prop.belief);
        st.filters[k].book = predict_bias(st.filters[k].book, prop.F);
        st.filters[k].had_measurement = false;
      }
      st.hub.begin_step(t);
      for (auto& f : st.filters) st.hub.post_snapshot(f.id, f.belief, f.book);

      if (st.id != VariantId::kDrOnly) {
        // Measurements arrive ordered by observer id then target id; the
        // sequential update consumes them in that order.
        std::vector<const SynthesizedMeasurement*> ordered;
        for (const auto& m : rec.measurements) ordered.push_back(&m);
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const auto* a, const auto* b) {
                           if (a->meas.observer != b->meas.observer) {
                             return a->meas.observer < b->meas.observer;
                           }
                           return a->meas.target < b->meas.target;
                         });

        for (const auto* sm : ordered) {
          const RangeMeasurement& meas = sm->meas;
          auto it = agent_index.find(meas.observer);
          if (it == agent_index.end()) continue;
          detail::AgentFilter& obs = st.filters[it->second];
          ++st.out.audit.measurements;

          const ModeProbabilities modes =
              detail::variant_modes(st.id, meas.power_metric, cfg.filter);

          Belief target_belief;
          BiasBook target_book;
          Target target;
          if (auto bit = beacon_pos.find(meas.target); bit != beacon_pos.end()) {
            target = BeaconTarget{bit->second};
          } else {
            const std::size_t tgt_idx = agent_index.at(meas.target);
            const double true_dist =
                (rec.true_poses[it->second].head<2>() -
                 rec.true_poses[tgt_idx].head<2>())
                    .norm();
            if (true_dist > cfg.comm_range()) {
              st.hub.count_dropped();
              ++st.out.audit.dropped;
              continue;
            }
            const bool needs_book = !st.opt.compact && modes.p_nlos > 0.0;
            auto ex = st.hub.request_exchange(meas.observer, meas.target,
                                              needs_book);
            if (!ex) {
              ++st.out.audit.stale_aborts;
              continue;
            }
            target_belief = Belief(ex->belief.x_hat,
                                   Covariance(ex->belief.P), ex->belief.stamp);
            AgentTarget at;
            at.belief = &target_belief;
            if (ex->bias_book) {
              target_book.owner = ex->bias_book->sender;
              target_book.C = std::move(ex->bias_book->C);
              at.book = &target_book;
            }
            target = at;
          }

          const double det_prior = detail::det3(obs.belief.P);
          ProcessResult res =
              process_measurement(obs.belief, target, obs.bias, obs.book, meas,
                                  modes, cfg.range_noise_var, st.opt);

          if (res.diag.skipped) {
            ++st.out.audit.skipped;
          } else {
            if (res.diag.los.gain.size() > 0) {
              ++st.out.audit.branch_updates;
              detail::audit_transition(st.out.audit, det_prior,
                                       detail::det3(res.diag.los.belief.P));
            }
            if (res.diag.nlos.gain.size() > 0) {
              ++st.out.audit.branch_updates;
              detail::audit_transition(st.out.audit, det_prior,
                                       detail::det3(res.diag.nlos.belief.P));
            }
            ++st.out.audit.combined_updates;
            detail::audit_transition(st.out.audit, det_prior,
                                     detail::det3(res.belief.P));
            if (res.diag.fell_back_to_los || res.diag.fell_back_to_nlos) {
              ++st.out.audit.fallbacks;
            }
            if (res.diag.likelihood_underflow) ++st.out.audit.underflows;
            obs.last_posterior = res.diag.posterior_modes;
            obs.had_measurement = true;
          }
          obs.belief = std::move(res.belief);
          obs.book = std::move(res.book);
        }
      }

      for (std::size_t k = 0; k < n_agents; ++k) {
        detail::AgentFilter& f = st.filters[k];
        Vec x = f.belief.x_hat;
        x(2) = wrap_angle(x(2));
        f.belief = Belief(std::move(x), f.belief.P, f.belief.stamp);

        MetricsRow row;
        row.step = t;
        row.truth = rec.true_poses[k];
        row.estimate = Eigen::Vector3d(f.belief.x_hat(0), f.belief.x_hat(1),
                                       f.belief.x_hat(2));
        Vec err(3);
        err << row.truth.x() - row.estimate.x(),
            row.truth.y() - row.estimate.y(),
            wrap_angle(row.truth.z() - row.estimate.z());
        row.pos_error = err.head<2>().norm();
        Eigen::LDLT<Mat> ldlt(f.belief.P.matrix());
        const Vec sol = ldlt.solve(err);
        row.nees = err.dot(sol);
        row.trace_p = f.belief.P.trace();
        if (f.had_measurement) {
          row.p_los = f.last_posterior.p_los;
          row.p_nlos = f.last_posterior.p_nlos;
        }
        st.out.rows[k].push_back(row);
      }
    }
    data.steps.push_back(std::move(rec));
  }

  for (auto& st : states) {
    st.out.messages = st.hub.log();
    st.out.audit.stale_aborts += st.hub.stale_aborts();
    st.out.belief_messages = st.hub.count(MessageType::kBelief);
    st.out.bias_book_messages = st.hub.count(MessageType::kBiasBook);

    double sq_sum = 0.0;
    double nees_sum = 0.0;
    std::size_t nees_count = 0;
    for (std::size_t k = 0; k < n_agents; ++k) {
      AgentSummary s;
      s.id = cfg.agents[k].id;
      s.path_length = path_length[k];
      if (!st.out.rows[k].empty()) {
        const MetricsRow& last = st.out.rows[k].back();
        s.final_error = last.pos_error;
        s.loop_closure_pct =
            path_length[k] > 0.0 ? 100.0 * last.pos_error / path_length[k]
                                 : 0.0;
        double acc = 0.0;
        for (const auto& r : st.out.rows[k]) acc += r.nees;
        s.mean_nees = acc / static_cast<double>(st.out.rows[k].size());
        nees_sum += acc;
        nees_count += st.out.rows[k].size();
      }
      sq_sum += s.final_error * s.final_error;
      st.out.agent_summaries.push_back(s);
    }
    st.out.final_rmse = std::sqrt(sq_sum / static_cast<double>(n_agents));
    st.out.mean_nees =
        nees_count > 0 ? nees_sum / static_cast<double>(nees_count) : 0.0;
    data.variants.push_back(std::move(st.out));
  }
  return data;
}

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_outputs(const RunData& data,
                          const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream truth(out_dir / "truth.csv");
    truth << "step,agent,x,y,theta\n";
    std::ofstream odo(out_dir / "odometry.csv");
    odo << "step,agent,v,omega\n";
    std::ofstream meas(out_dir / "measurements.csv");
    meas << "step,observer,target,z,power_metric,true_mode,true_bias\n";
    for (const auto& rec : data.steps) {
      for (std::size_t k = 0; k < data.cfg.agents.size(); ++k) {
        const int id = data.cfg.agents[k].id;
        truth << rec.step << ',' << id << ','
              << detail::g17(rec.true_poses[k].x()) << ','
              << detail::g17(rec.true_poses[k].y()) << ','
              << detail::g17(rec.true_poses[k].z()) << '\n';
        odo << rec.step << ',' << id << ',' << detail::g17(rec.odometry[k].v)
            << ',' << detail::g17(rec.odometry[k].omega) << '\n';
      }
      for (const auto& sm : rec.measurements) {
        meas << rec.step << ',' << sm.meas.observer << ',' << sm.meas.target
             << ',' << detail::g17(sm.meas.z) << ','
             << detail::g17(sm.meas.power_metric) << ','
             << (sm.nlos ? "nlos" : "los") << ',' << detail::g17(sm.bias)
             << '\n';
      }
    }
  }

  nlohmann::ordered_json summary;
  summary["schema_version"] = 1;
  summary["seed"] = data.seed;
  summary["scenario"] = world_config_to_json(data.cfg);
  auto jvariants = nlohmann::ordered_json::object();

  for (const auto& v : data.variants) {
    const fs::path vdir = out_dir / variant_name(v.id);
    fs::create_directories(vdir);
    for (std::size_t k = 0; k < data.cfg.agents.size(); ++k) {
      std::ofstream csv(vdir /
                        ("agent_" + std::to_string(data.cfg.agents[k].id) +
                         ".csv"));
      csv << "step,true_x,true_y,true_theta,est_x,est_y,est_theta,pos_error,"
             "nees,p_los,p_nlos,trace_p\n";
      for (const auto& r : v.rows[k]) {
        csv << r.step << ',' << detail::g17(r.truth.x()) << ','
            << detail::g17(r.truth.y()) << ',' << detail::g17(r.truth.z())
            << ',' << detail::g17(r.estimate.x()) << ','
            << detail::g17(r.estimate.y()) << ','
            << detail::g17(r.estimate.z()) << ',' << detail::g17(r.pos_error)
            << ',' << detail::g17(r.nees) << ',' << detail::g17(r.p_los) << ','
            << detail::g17(r.p_nlos) << ',' << detail::g17(r.trace_p) << '\n';
      }
    }
    write_message_log_csv(vdir / "messages.csv", v.messages);

    nlohmann::ordered_json jv;
    jv["final_rmse"] = v.final_rmse;
    jv["mean_nees"] = v.mean_nees;
    jv["messages"] = {{"belief", v.belief_messages},
                      {"bias_book", v.bias_book_messages}};
    jv["audit"] = {{"measurements", v.audit.measurements},
                   {"branch_updates", v.audit.branch_updates},
                   {"combined_updates", v.audit.combined_updates},
                   {"det_violations", v.audit.det_violations},
                   {"max_det_increase", v.audit.max_det_increase},
                   {"skipped", v.audit.skipped},
                   {"fallbacks", v.audit.fallbacks},
                   {"underflows", v.audit.underflows},
                   {"dropped", v.audit.dropped},
                   {"stale_aborts", v.audit.stale_aborts}};
    auto jagents = nlohmann::ordered_json::object();
    for (const auto& s : v.agent_summaries) {
      jagents[std::to_string(s.id)] = {{"final_error", s.final_error},
                                       {"loop_closure_pct", s.loop_closure_pct},
                                       {"mean_nees", s.mean_nees},
                                       {"path_length", s.path_length}};
    }
    jv["agents"] = jagents;
    jvariants[variant_name(v.id)] = jv;
  }
  summary["variants"] = jvariants;

  std::ofstream out(out_dir / "summary.json");
  out << summary.dump(2) << '\n';
}

inline std::vector<VariantId> variants_from_config(const WorldConfig& cfg) {
  if (cfg.variants.empty()) return all_variants();
  std::vector<VariantId> out;
  for (const auto& name : cfg.variants) {
    auto v = variant_from_name(name);
    if (!v) throw ConfigError("unknown variant '" + name + "'");
    out.push_back(*v);
  }
  return out;
}

/// Full CLI run: parse, simulate every configured variant, write outputs.
/// Exit codes: 0 success, 1 config error, 2 numerical failure.
inline int run(const std::filesystem::path& config_path, std::uint64_t seed,
               const std::filesystem::path& out_dir,
               const std::vector<std::string>& overrides = {}) {
  WorldConfig cfg;
  std::vector<VariantId> variants;
  try {
    cfg = load_world_config(config_path, overrides);
    variants = variants_from_config(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  try {
    RunData data = run_scenario(cfg, seed, variants);
    write_outputs(data, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

struct CompareRow {
  std::string variant;
  std::size_t runs = 0;
  double median_final_rmse = 0.0;
  double iqr_final_rmse = 0.0;
  double median_loop_closure = 0.0;
  double iqr_loop_closure = 0.0;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

/// Cross-seed aggregation of run summaries. Refuses to mix runs of
/// different scenarios.
inline std::vector<CompareRow> compare(
    const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("compare: no runs");
  nlohmann::json reference_scenario;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      per_variant;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "summary.json");
    if (!in) {
      throw std::runtime_error("compare: missing summary in " + dir.string());
    }
    nlohmann::json j = nlohmann::json::parse(in);
    if (reference_scenario.is_null()) {
      reference_scenario = j.at("scenario");
    } else if (j.at("scenario") != reference_scenario) {
      throw std::runtime_error("compare: scenario mismatch in " + dir.string());
    }
    for (auto& [name, jv] : j.at("variants").items()) {
      per_variant[name].first.push_back(jv.at("final_rmse").get<double>());
      double loop_sum = 0.0;
      std::size_t n = 0;
      for (auto& [aid, ja] : jv.at("agents").items()) {
        loop_sum += ja.at("loop_closure_pct").get<double>();
        ++n;
      }
      per_variant[name].second.push_back(n ? loop_sum / n : 0.0);
    }
  }
  std::vector<CompareRow> rows;
  for (auto& [name, lists] : per_variant) {
    CompareRow row;
    row.variant = name;
    row.runs = lists.first.size();
    row.median_final_rmse = detail::quantile(lists.first, 0.5);
    row.iqr_final_rmse = detail::quantile(lists.first, 0.75) -
                         detail::quantile(lists.first, 0.25);
    row.median_loop_closure = detail::quantile(lists.second, 0.5);
    row.iqr_loop_closure = detail::quantile(lists.second, 0.75) -
                           detail::quantile(lists.second, 0.25);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void print_compare_table(const std::vector<CompareRow>& rows,
                                std::ostream& os) {
  os << "variant        runs  median_rmse  iqr_rmse  median_loop%  iqr_loop%\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %4zu  %11.4f  %8.4f  %12.4f  %9.4f\n",
                  r.variant.c_str(), r.runs, r.median_final_rmse,
                  r.iqr_final_rmse, r.median_loop_closure, r.iqr_loop_closure);
    os << buf;
  }
}

}  // namespace aucl
