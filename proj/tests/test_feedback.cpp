#include <doctest.h>

#include <cmath>
#include <sstream>

#include "icsim/feedback.hpp"
#include "icsim/synthetic.hpp"

using namespace icsim;

namespace {

ExpStep step(int t, ExpAction a, double ret, double reward = 0.0, double spread = 2.0) {
  ExpStep s;
  s.t = t;
  ExpMarketFeatures m;
  m.spread = spread;
  s.s_prev = ExpAgentState::make(0.1 * (t - 1), 1.0, m);
  s.a = a;
  s.reward = reward;
  s.facts_after.mid = 100.0;
  s.facts_after.log_return = ret;
  return s;
}

Rollout hand_built(std::vector<ExpStep> steps) {
  Rollout r;
  r.horizon = static_cast<int>(steps.size());
  r.steps = std::move(steps);
  r.complete = true;
  r.seed = 7;
  return r;
}

Propensity constant(double p) {
  return [p](const ExpAgentState&) { return p; };
}

const OutcomeSelector kReturn{FeedbackKind::Mkt2NextReturn, 0};

}  // namespace

TEST_CASE("episode reward") {
  EnvConfig cfg;
  BgPopulationConfig none;
  none.noise = none.value = none.momentum = none.market_maker = 0;
  SUBCASE("all-hold rollout pays the full terminal penalty") {
    cfg.exp.penalty = 2.0;
    const Rollout r = run_rollout(Environment::real(cfg, none), ExpPolicy::passive(), cfg.exp.horizon, 1);
    CHECK(episode_reward(r).value == -2.0 * cfg.exp.parent_order);
  }
  SUBCASE("zero penalty and no fills") {
    cfg.exp.penalty = 0.0;
    const Rollout r = run_rollout(Environment::real(cfg, none), ExpPolicy::passive(), cfg.exp.horizon, 1);
    CHECK(episode_reward(r).value == 0.0);
  }
  SUBCASE("sum of step rewards") {
    const Rollout r = hand_built({step(1, ExpAction::Limit, 0.0, -3.0), step(2, ExpAction::Limit, 0.0, 1.0)});
    CHECK(episode_reward(r).value == -2.0);
    Rollout partial = r;
    partial.complete = false;
    try {
      episode_reward(partial);
      FAIL("expected IncompleteRollout");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::IncompleteRollout);
    }
  }
}

TEST_CASE("naive effect") {
  const Rollout flat = hand_built({step(1, ExpAction::Market, 0.25), step(2, ExpAction::Limit, 9.0),
                                   step(3, ExpAction::Market, 0.25)});
  const FeedbackSample c = naive_effect(flat, kReturn);
  CHECK(c.value == 0.25);
  CHECK(c.n_treated == 2);
  CHECK(c.seed == 7);

  const Rollout two = hand_built({step(1, ExpAction::Hold, 0.3), step(2, ExpAction::Market, 0.01),
                                  step(3, ExpAction::Limit, 0.5), step(4, ExpAction::Market, -0.01)});
  CHECK(naive_effect(two, kReturn).value == doctest::Approx(0.0));

  const Rollout none = hand_built({step(1, ExpAction::Limit, 0.1), step(2, ExpAction::Hold, 0.1)});
  try {
    naive_effect(none, kReturn);
    FAIL("expected NoTreatedSteps");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoTreatedSteps);
  }
}

TEST_CASE("mkt_to_reward uses the step reward as outcome") {
  const Rollout r = hand_built({step(1, ExpAction::Market, 0.0, -4.0), step(2, ExpAction::Limit, 0.0, 10.0),
                                step(3, ExpAction::Market, 0.0, -2.0)});
  CHECK(mkt_to_reward(r).value == -3.0);
}

TEST_CASE("ipw effect") {
  const Rollout two = hand_built({step(1, ExpAction::Market, 0.01), step(2, ExpAction::Limit, 0.4),
                                  step(3, ExpAction::Market, -0.01)});
  for (IpwForm form : {IpwForm::SelfNormalized, IpwForm::AsPrinted}) {
    CHECK(ipw_effect(two, kReturn, constant(1.0), 0.05, form).value == naive_effect(two, kReturn).value);
    CHECK(ipw_effect(two, kReturn, constant(0.5), 0.05, form).value == doctest::Approx(0.0));
  }
  const Rollout flat = hand_built({step(1, ExpAction::Market, 0.3), step(2, ExpAction::Market, 0.3)});
  // Constant propensity: the printed form scales by 1/e, the self-normalized form does not.
  CHECK(ipw_effect(flat, kReturn, constant(0.25), 0.05, IpwForm::AsPrinted).value == doctest::Approx(1.2));
  CHECK(ipw_effect(flat, kReturn, constant(0.25), 0.05, IpwForm::SelfNormalized).value == doctest::Approx(0.3));
  // Clipping at the threshold.
  CHECK(ipw_effect(flat, kReturn, constant(0.01), 0.1, IpwForm::AsPrinted).value == doctest::Approx(3.0));
  try {
    ipw_effect(flat, kReturn, constant(0.0), 0.05);
    FAIL("expected DegeneratePropensity");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegeneratePropensity);
  }
}

TEST_CASE("collect_feedback drops rollouts without treated steps") {
  const std::vector<Rollout> rs{hand_built({step(1, ExpAction::Market, 0.5)}), hand_built({step(1, ExpAction::Hold, 0.5)}),
                                hand_built({step(1, ExpAction::Market, 0.1)})};
  FeedbackSpec spec;
  const FeedbackSet set = collect_feedback(rs, spec);
  CHECK(set.samples.size() == 2);
  CHECK(set.dropped == 1);
  CHECK(set.values()[1] == 0.1);
  spec.estimator = Estimator::Ipw;
  CHECK_THROWS_AS(collect_feedback(rs, spec), Error);  // no propensity source
}

TEST_CASE("fit_propensity") {
  Rng rng(3);
  SUBCASE("state-independent treatment recovers the base rate") {
    std::vector<PropensityRecord> h;
    for (int i = 0; i < 10000; ++i) {
      ExpMarketFeatures m;
      m.spread = static_cast<double>(rng.uniform_int(1, 4));
      m.imbalance5 = rng.uniform();
      h.push_back({ExpAgentState::make(rng.uniform(), rng.uniform(), m), rng.bernoulli(0.3)});
    }
    const LogisticPropensity e = fit_propensity(h);
    CHECK_FALSE(e.separable);
    for (const auto& r : h) REQUIRE(std::abs(e(r.state) - 0.3) < 0.02);
  }
  SUBCASE("threshold treatment separates and clipping bounds the weights") {
    std::vector<PropensityRecord> h;
    for (int i = 0; i < 2000; ++i) {
      ExpMarketFeatures m;
      m.spread = static_cast<double>(rng.uniform_int(1, 4));
      h.push_back({ExpAgentState::make(0.5, 0.5, m), m.spread > 2.0});
    }
    const LogisticPropensity e = fit_propensity(h);
    CHECK(e.separable);
    for (const auto& r : h) {
      const double clipped = std::max(e(r.state), 0.05);
      if (r.treated)
        CHECK(clipped > 0.95);
      else
        CHECK(clipped < 0.1);
    }
  }
  SUBCASE("a single class is rejected") {
    std::vector<PropensityRecord> h(10, PropensityRecord{ExpAgentState{}, true});
    try {
      fit_propensity(h);
      FAIL("expected Separable");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Separable);
    }
  }
}

TEST_CASE("randomized exp policy: naive estimate matches the oracle") {
  const ConfoundedMdp mdp;
  const double truth = randomized_truth(mdp, 200000, 1);
  CHECK(truth == doctest::Approx(mdp.effect).epsilon(0.05));
  double sum = 0.0;
  const int n = 200;
  for (int s = 0; s < n; ++s)
    sum += naive_effect(simulate_confounded(mdp, ExpPolicy::uniform(), 100, static_cast<std::uint64_t>(s)), kReturn).value;
  // Per-rollout sd is at most sqrt(1 + 0.25) / sqrt(~33 treated) ~ 0.2.
  CHECK(std::abs(sum / n - truth) < 3 * 0.2 / std::sqrt(n));
}

TEST_CASE("zero-intelligence policy: naive and ipw agree") {
  const ConfoundedMdp mdp;
  const ExpPolicy pi = ExpPolicy::uniform();
  double gap = 0.0;
  for (int s = 0; s < 50; ++s) {
    const Rollout r = simulate_confounded(mdp, pi, 100, static_cast<std::uint64_t>(s));
    gap += ipw_effect(r, kReturn, exact_propensity(pi), 0.05).value - naive_effect(r, kReturn).value;
  }
  CHECK(std::abs(gap) < 1e-9);
}

TEST_CASE("confounded record: ipw with a fitted propensity beats the naive estimate") {
  const ConfoundedMdp mdp;
  const ExpPolicy pi = mdp.confounded_policy();
  const double truth = randomized_truth(mdp, 200000, 2);
  std::vector<Rollout> rs;
  for (int s = 0; s < 200; ++s) rs.push_back(simulate_confounded(mdp, pi, 100, 1000 + static_cast<std::uint64_t>(s)));
  const LogisticPropensity fitted = fit_propensity(propensity_history(rs));
  int better = 0;
  for (const auto& r : rs) {
    const double naive = naive_effect(r, kReturn).value;
    const double ipw = ipw_effect(r, kReturn, fitted, 0.05).value;
    better += std::abs(ipw - truth) < std::abs(naive - truth);
  }
  CHECK(better >= 180);
}

TEST_CASE("feedback csv round trip") {
  FeedbackSet set;
  set.samples = {{0.125, 3, 11}, {-1.0 / 3.0, 1, 12}};
  FeedbackSpec spec;
  spec.kind = FeedbackKind::Mkt2NextImbalance;
  spec.imbalance_level = 5;
  std::stringstream ss;
  write_feedback_csv(ss, set, spec, 42);
  const FeedbackCsv back = read_feedback_csv(ss);
  CHECK(back.seed == 42);
  CHECK(back.samples == set.samples);
  CHECK(back.kind == "Mkt2NextImbalance5");
  CHECK(back.estimator == "naive");
  std::stringstream bad("seed=1\nwrong,header\n");
  CHECK_THROWS_AS(read_feedback_csv(bad), Error);
}
