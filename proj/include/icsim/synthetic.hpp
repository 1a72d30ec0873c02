#pragma once

#include <cstdint>

#include "icsim/env.hpp"

namespace icsim {

/// Toy execution record with a known causal effect. Each step draws a binary
/// market condition x (wide or narrow spread); the exp policy sees the spread
/// before acting, and the outcome is
///   y = effect * [market order] + confounding * (2x - 1) + noise * N(0, 1),
/// stored as the step's next return, price impact and reward.
struct ConfoundedMdp {
  double p_wide = 0.5;
  double effect = 0.2;
  double confounding = 1.0;
  double noise = 0.5;
  double wide_spread = 3.0;
  double narrow_spread = 1.0;

  /// Exp policy whose market-order rate follows the spread.
  ExpPolicy confounded_policy(double p_wide_market = 0.8, double p_narrow_market = 0.2) const;
};

Rollout simulate_confounded(const ConfoundedMdp& mdp, const ExpPolicy& pi, int horizon, std::uint64_t seed);

/// Ground-truth effect from a randomized run: treatment ignores the state, so
/// the mean treated outcome is unconfounded.
double randomized_truth(const ConfoundedMdp& mdp, int steps, std::uint64_t seed);

}  // namespace icsim
