#pragma once

#include <cmath>
#include <stdexcept>

#include "aucl/types.hpp"

namespace aucl {

/// Parameters of the fitted sigmoid p = 1 / (a + b * exp(-pm + c)).
struct SigmoidParams {
  double a = 1.068;  ///< keeps the NLoS probability below 1/a
  double b = 1.013;
  double c = 6.934;  ///< curve center [dB]

  SigmoidParams() = default;
  SigmoidParams(double a_, double b_, double c_) : a(a_), b(b_), c(c_) {
    if (!(a >= 1.0) || !(b > 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("SigmoidParams: need a >= 1, b > 0, finite c");
    }
  }
};

/// Soft LoS/NLoS classification of a received-signal power metric.
inline ModeProbabilities nlos_probability(double pm,
                                          const SigmoidParams& params = {}) {
  if (!std::isfinite(pm)) {
    throw std::invalid_argument("nlos_probability: power metric not finite");
  }
  double p = 1.0 / (params.a + params.b * std::exp(-pm + params.c));
  p = std::min(std::max(p, 0.0), 1.0);
  return ModeProbabilities::from_nlos(p);
}

/// Hard threshold baseline. A power metric at or above the threshold
/// classifies as NLoS.
inline ModeProbabilities deterministic_mode(double pm, double threshold) {
  if (!std::isfinite(pm) || !std::isfinite(threshold)) {
    throw std::invalid_argument("deterministic_mode: non-finite input");
  }
  return pm < threshold ? ModeProbabilities(1.0, 0.0)
                        : ModeProbabilities(0.0, 1.0);
}

}  // namespace aucl
