#include "icsim/synthetic.hpp"

namespace icsim {

ExpPolicy ConfoundedMdp::confounded_policy(double p_wide_market, double p_narrow_market) const {
  ExpPolicy pi;
  pi.kind = ExpPolicyKind::SpreadContingent;
  pi.spread_threshold = 0.5 * (wide_spread + narrow_spread);
  pi.p_market_wide = p_wide_market;
  pi.p_market_narrow = p_narrow_market;
  return pi;
}

Rollout simulate_confounded(const ConfoundedMdp& mdp, const ExpPolicy& pi, int horizon, std::uint64_t seed) {
  Rng rng(seed);
  Rollout r;
  r.horizon = horizon;
  r.seed = seed;
  r.env = EnvTag::Real;
  r.complete = true;
  for (int t = 1; t <= horizon; ++t) {
    const bool wide = rng.bernoulli(mdp.p_wide);
    ExpMarketFeatures m;
    m.spread = wide ? mdp.wide_spread : mdp.narrow_spread;
    ExpStep step;
    step.t = t;
    step.s_prev = ExpAgentState::make(static_cast<double>(t - 1) / horizon, 1.0, m);
    step.a = pi.act(step.s_prev, rng);
    const double treated = step.a == ExpAction::Market ? 1.0 : 0.0;
    const double y = mdp.effect * treated + mdp.confounding * (wide ? 1.0 : -1.0) + mdp.noise * rng.normal();
    step.reward = y;
    step.facts_after.mid = 1.0;
    step.facts_after.log_return = y;
    step.facts_after.price_impact = y;
    step.facts_after.spread = m.spread;
    r.steps.push_back(std::move(step));
  }
  return r;
}

double randomized_truth(const ConfoundedMdp& mdp, int steps, std::uint64_t seed) {
  const Rollout r = simulate_confounded(mdp, ExpPolicy::epsilon_market(0.5), steps, seed);
  double sum = 0.0;
  int n = 0;
  for (const auto& s : r.steps)
    if (s.a == ExpAction::Market) {
      sum += *s.facts_after.log_return;
      ++n;
    }
  return sum / n;
}

}  // namespace icsim
