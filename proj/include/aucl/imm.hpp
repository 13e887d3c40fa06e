#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <variant>
#include <vector>

#include "aucl/dmv_los.hpp"
#include "aucl/skf_nlos.hpp"
#include "aucl/types.hpp"

namespace aucl {

inline constexpr double kLikelihoodFloor = 1e-300;

/// Scalar Gaussian density of a model-matched innovation.
inline double gaussian_likelihood(double innovation, double S) {
  if (!(S > 0.0)) throw NumericalError("gaussian_likelihood: S <= 0");
  return normal_pdf(innovation, S);
}

/// Bayes evolution of the mode probabilities with the two model-matched
/// likelihoods. A vanishing denominator (outlier measurement) keeps the
/// prior and raises the underflow flag instead of renormalizing noise.
inline ModeProbabilities evolve_mode_probabilities(
    const ModeProbabilities& prior, double likelihood_los,
    double likelihood_nlos, bool* underflow = nullptr) {
  if (!(likelihood_los >= 0.0) || !(likelihood_nlos >= 0.0)) {
    throw std::invalid_argument("evolve_mode_probabilities: negative likelihood");
  }
  if (underflow) *underflow = false;
  const double denom =
      likelihood_los * prior.p_los + likelihood_nlos * prior.p_nlos;
  if (!(denom >= kLikelihoodFloor) || !std::isfinite(denom)) {
    if (underflow) *underflow = true;
    return prior;
  }
  const double p_nlos = likelihood_nlos * prior.p_nlos / denom;
  return ModeProbabilities::from_nlos(std::min(std::max(p_nlos, 0.0), 1.0));
}

/// Moment-matched combination of the two mode-conditioned posteriors.
inline Belief combine(const UpdateOutcome& out_los,
                      const UpdateOutcome& out_nlos,
                      const ModeProbabilities& posterior) {
  const Belief& b1 = out_los.belief;
  const Belief& b2 = out_nlos.belief;
  if (b1.dim() != b2.dim()) {
    throw std::invalid_argument("combine: dimension mismatch");
  }
  const double w1 = posterior.p_los;
  const double w2 = posterior.p_nlos;
  Vec x = w1 * b1.x_hat + w2 * b2.x_hat;
  Vec d1 = b1.x_hat - x;
  Vec d2 = b2.x_hat - x;
  Mat P = w1 * (b1.P.matrix() + d1 * d1.transpose()) +
          w2 * (b2.P.matrix() + d2 * d2.transpose());
  return Belief(std::move(x), Covariance(P), b1.stamp);
}

enum class CombineRule {
  kPaperLiteral,  ///< C+ = p_nlos * C_nlos+
  kMixture        ///< C+ = p_los * C_los + p_nlos * C_nlos+
};

/// Combination of the cross-covariance set after the two branch updates.
inline BiasBook combine_bias_book(const BiasBook& book_los,
                                  const BiasBook& book_nlos,
                                  const ModeProbabilities& posterior,
                                  CombineRule rule = CombineRule::kPaperLiteral) {
  BiasBook out;
  out.owner = book_nlos.owner;
  for (const auto& [id, c_nlos] : book_nlos.C) {
    if (rule == CombineRule::kPaperLiteral) {
      out.C.emplace(id, posterior.p_nlos * c_nlos);
    } else {
      const Vec c_los = book_los.entry_or_zero(id, c_nlos.size());
      out.C.emplace(id,
                    posterior.p_los * c_los + posterior.p_nlos * c_nlos);
    }
  }
  return out;
}

/// Target of a relative measurement: another agent (belief plus, when the
/// full update runs, its transmitted correlation set) or a fixed beacon.
struct AgentTarget {
  const Belief* belief = nullptr;
  const BiasBook* book = nullptr;  ///< may stay null in compact mode
};

struct BeaconTarget {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

using Target = std::variant<AgentTarget, BeaconTarget>;

struct ImmOptions {
  OmegaOptions omega;
  CombineRule combine_rule = CombineRule::kPaperLiteral;
  bool compact = false;  ///< use the reduced-communication NLoS variant
};

/// Diagnostics of one IMM cycle.
struct ImmDiagnostics {
  ModeProbabilities prior_modes;
  ModeProbabilities posterior_modes;
  UpdateOutcome los;
  UpdateOutcome nlos;
  Mat spread_term;
  bool likelihood_underflow = false;
  bool fell_back_to_los = false;
  bool fell_back_to_nlos = false;
  bool skipped = false;
};

struct ProcessResult {
  Belief belief;
  BiasBook book;
  ImmDiagnostics diag;
};

namespace detail {

struct BranchResult {
  UpdateOutcome outcome;
  BiasBook book;
};

inline std::optional<BranchResult> run_los_branch(const Belief& bel_i,
                                                  const Target& target,
                                                  const BiasBook& book_i,
                                                  double z, double R,
                                                  const ImmOptions& opt) {
  BranchResult res;
  res.book = book_i;
  try {
    if (const auto* agent = std::get_if<AgentTarget>(&target)) {
      res.outcome = los_correct(bel_i, *agent->belief, z, R, opt.omega);
    } else {
      res.outcome =
          beacon_los_correct(bel_i, std::get<BeaconTarget>(target).position, z, R);
    }
  } catch (const NumericalError&) {
    return std::nullopt;
  }
  if (res.outcome.skipped) return std::nullopt;
  return res;
}

inline std::optional<BranchResult> run_nlos_branch(const Belief& bel_i,
                                                   const Target& target,
                                                   const BiasModel& bias_i,
                                                   const BiasBook& book_i,
                                                   double z, double R,
                                                   const ImmOptions& opt) {
  BranchResult res;
  res.book = book_i;
  try {
    if (const auto* agent = std::get_if<AgentTarget>(&target)) {
      if (opt.compact) {
        const Vec C_ii =
            book_i.entry_or_zero(book_i.owner, bel_i.dim());
        auto upd = nlos_correct_compact(bel_i, *agent->belief, bias_i, C_ii, z,
                                        R, opt.omega);
        res.outcome = std::move(upd.outcome);
        res.book.C[book_i.owner] = std::move(upd.C_ii);
      } else {
        static const BiasBook kEmptyBook{};
        const BiasBook& book_j = agent->book ? *agent->book : kEmptyBook;
        auto upd = nlos_correct(bel_i, *agent->belief, bias_i, book_i, book_j,
                                z, R, opt.omega);
        res.outcome = std::move(upd.outcome);
        res.book = std::move(upd.book);
      }
    } else {
      const Vec C_ii = book_i.entry_or_zero(book_i.owner, bel_i.dim());
      auto upd = beacon_nlos_correct(
          bel_i, bias_i, C_ii, std::get<BeaconTarget>(target).position, z, R);
      res.outcome = std::move(upd.outcome);
      res.book.C[book_i.owner] = std::move(upd.C_ii);
    }
  } catch (const NumericalError&) {
    return std::nullopt;
  }
  if (res.outcome.skipped) return std::nullopt;
  return res;
}

}  // namespace detail

/// One cycle of the simplified IMM estimator: both mode-conditioned updates
/// run on the same propagated prior (no mixing step), the mode probability
/// evolves through the model-matched likelihoods and the posteriors are
/// moment-matched. With a degenerate mode probability only the matching
/// branch runs and its result is returned as-is.
inline ProcessResult process_measurement(const Belief& bel_i,
                                         const Target& target,
                                         const BiasModel& bias_i,
                                         const BiasBook& book_i,
                                         const RangeMeasurement& meas,
                                         const ModeProbabilities& modes,
                                         double R, const ImmOptions& opt = {}) {
  ProcessResult res;
  res.diag.prior_modes = modes;
  res.diag.posterior_modes = modes;
  res.diag.spread_term = Mat::Zero(bel_i.dim(), bel_i.dim());

  auto passthrough = [&]() {
    res.belief = bel_i;
    res.book = book_i;
    res.diag.skipped = true;
    return res;
  };

  if (modes.p_nlos == 0.0) {
    auto los = detail::run_los_branch(bel_i, target, book_i, meas.z, R, opt);
    if (!los) return passthrough();
    res.belief = los->outcome.belief;
    res.book = std::move(los->book);
    res.diag.los = std::move(los->outcome);
    return res;
  }
  if (modes.p_los == 0.0) {
    auto nlos = detail::run_nlos_branch(bel_i, target, bias_i, book_i, meas.z,
                                        R, opt);
    if (!nlos) return passthrough();
    res.belief = nlos->outcome.belief;
    res.book = std::move(nlos->book);
    res.diag.nlos = std::move(nlos->outcome);
    return res;
  }

  auto los = detail::run_los_branch(bel_i, target, book_i, meas.z, R, opt);
  auto nlos =
      detail::run_nlos_branch(bel_i, target, bias_i, book_i, meas.z, R, opt);

  if (!los && !nlos) return passthrough();
  if (!nlos) {
    res.diag.fell_back_to_los = true;
    res.diag.posterior_modes = ModeProbabilities(1.0, 0.0);
    res.belief = los->outcome.belief;
    res.book = std::move(los->book);
    res.diag.los = std::move(los->outcome);
    return res;
  }
  if (!los) {
    res.diag.fell_back_to_nlos = true;
    res.diag.posterior_modes = ModeProbabilities(0.0, 1.0);
    res.belief = nlos->outcome.belief;
    res.book = std::move(nlos->book);
    res.diag.nlos = std::move(nlos->outcome);
    return res;
  }

  bool underflow = false;
  const ModeProbabilities posterior = evolve_mode_probabilities(
      modes, los->outcome.likelihood, nlos->outcome.likelihood, &underflow);
  res.diag.likelihood_underflow = underflow;
  res.diag.posterior_modes = posterior;

  res.belief = combine(los->outcome, nlos->outcome, posterior);
  res.book =
      combine_bias_book(los->book, nlos->book, posterior, opt.combine_rule);

  const Vec d1 = los->outcome.belief.x_hat - res.belief.x_hat;
  const Vec d2 = nlos->outcome.belief.x_hat - res.belief.x_hat;
  res.diag.spread_term = posterior.p_los * d1 * d1.transpose() +
                         posterior.p_nlos * d2 * d2.transpose();
  res.diag.los = std::move(los->outcome);
  res.diag.nlos = std::move(nlos->outcome);
  return res;
}

struct SequentialItem {
  RangeMeasurement meas;
  Target target;
  ModeProbabilities modes;
};

struct SequentialResult {
  Belief belief;
  BiasBook book;
  std::vector<ImmDiagnostics> diags;
};

/// Processes concurrent measurements one after another, each consuming the
/// previously updated belief as its prior. Per-measurement failures skip
/// that measurement only. Callers order items by ascending target id.
inline SequentialResult sequential_update(const Belief& bel_i,
                                          const BiasModel& bias_i,
                                          const BiasBook& book_i,
                                          const std::vector<SequentialItem>& items,
                                          double R,
                                          const ImmOptions& opt = {}) {
  SequentialResult res;
  res.belief = bel_i;
  res.book = book_i;
  res.diags.reserve(items.size());
  for (const auto& item : items) {
    ProcessResult step = process_measurement(res.belief, item.target, bias_i,
                                             res.book, item.meas, item.modes,
                                             R, opt);
    res.belief = std::move(step.belief);
    res.book = std::move(step.book);
    res.diags.push_back(std::move(step.diag));
  }
  return res;
}

}  // namespace aucl
