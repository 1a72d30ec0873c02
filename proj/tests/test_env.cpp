#include <doctest.h>

#include <sstream>

#include "icsim/env.hpp"
#include "icsim/rollout_io.hpp"

using namespace icsim;

namespace {

EnvConfig desk() { return EnvConfig{}; }

BgPopulationConfig no_agents() {
  BgPopulationConfig p;
  p.noise = p.value = p.momentum = p.market_maker = 0;
  return p;
}

std::string jsonl(const Rollout& r) {
  std::ostringstream os;
  write_rollout_jsonl(os, r);
  return os.str();
}

Environment world_env(double scale = 0.3) {
  return Environment::world(desk(), WorldPolicy::random(desk().policy_shape, 5, scale));
}

}  // namespace

TEST_CASE("inert environment: one hold step, no background, book unchanged") {
  EnvConfig cfg = desk();
  cfg.exp.penalty = 0.0;
  const Environment env = Environment::real(cfg, no_agents());
  Episode ep(env, ExpPolicy::passive(), 1);
  const Book before = ep.book();
  const Rollout r = run_rollout(env, ExpPolicy::passive(), 1, 1);
  REQUIRE(r.steps.size() == 1);
  CHECK(r.complete);
  CHECK(r.steps[0].reward == 0.0);
  CHECK(r.steps[0].tau() == 0);
  CHECK(r.steps[0].a == ExpAction::Hold);
  ep.run_to_end();
  CHECK(ep.book() == before);
}

TEST_CASE("identical seeds give byte-identical rollouts") {
  const Environment real = Environment::real(desk(), BgPopulationConfig{});
  CHECK(jsonl(run_rollout(real, ExpPolicy::epsilon_market(0.5), 10, 9)) ==
        jsonl(run_rollout(real, ExpPolicy::epsilon_market(0.5), 10, 9)));
  const Environment world = world_env();
  CHECK(jsonl(run_rollout(world, ExpPolicy::epsilon_market(0.5), 10, 9)) ==
        jsonl(run_rollout(world, ExpPolicy::epsilon_market(0.5), 10, 9)));
}

TEST_CASE("neighbouring seeds give different background interactions") {
  const Environment real = Environment::real(desk(), BgPopulationConfig{});
  int differ = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Rollout a = run_rollout(real, ExpPolicy::aggressive(), 2, s);
    const Rollout b = run_rollout(real, ExpPolicy::aggressive(), 2, s + 1);
    differ += a.steps[0].bg != b.steps[0].bg;
  }
  CHECK(differ == 100);
}

TEST_CASE("each background agent wakes once per step by default") {
  const Environment real = Environment::real(desk(), BgPopulationConfig{});
  const Rollout r = run_rollout(real, ExpPolicy::aggressive(), 10, 3);
  for (const auto& s : r.steps) CHECK(s.tau() == 104);
  const Rollout w = run_rollout(world_env(), ExpPolicy::aggressive(), 10, 3);
  for (const auto& s : w.steps) CHECK(s.tau() == desk().world_wakeups_per_step);
}

TEST_CASE("real and world environments diverge") {
  const Rollout a = run_rollout(Environment::real(desk(), BgPopulationConfig{}), ExpPolicy::aggressive(), 10, 4);
  const Rollout b = run_rollout(world_env(), ExpPolicy::aggressive(), 10, 4);
  CHECK(a.env == EnvTag::Real);
  CHECK(b.env == EnvTag::World);
  CHECK(a.steps[0].facts_after != b.steps[0].facts_after);
}

TEST_CASE("aggressive exp agent fills the parent order in a liquid desk market") {
  const Environment real = Environment::real(desk(), BgPopulationConfig{});
  int filled = 0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    const Rollout r = run_rollout(real, ExpPolicy::aggressive(), 10, static_cast<std::uint64_t>(s));
    Volume total = 0;
    for (const auto& st : r.steps) total += st.executed;
    filled += total == 50;
  }
  CHECK(filled >= 95);
}

TEST_CASE("terminal penalty applies to unfilled shares") {
  EnvConfig cfg = desk();
  cfg.exp.penalty = 5.0;
  const Rollout r = run_rollout(Environment::real(cfg, no_agents()), ExpPolicy::passive(), 3, 1);
  CHECK(r.steps.back().reward == -5.0 * 50);
  CHECK(r.steps.front().reward == 0.0);
}

TEST_CASE("snapshot restore then finish equals the uninterrupted run") {
  const ExpPolicy pi = ExpPolicy::epsilon_market(0.5);
  Rng pick(21);
  for (const Environment& env : {Environment::real(desk(), BgPopulationConfig{}), world_env()}) {
    for (int trial = 0; trial < 8; ++trial) {
      const auto seed = static_cast<std::uint64_t>(pick.uniform_int(0, 1000));
      const Rollout full = run_rollout(env, pi, 10, seed);
      const int t = static_cast<int>(pick.uniform_int(1, 10));
      const int j = static_cast<int>(pick.uniform_int(1, full.steps[static_cast<std::size_t>(t - 1)].tau()));
      const RolloutPrefix prefix = capture_prefix(env, pi, 10, seed, t, j);
      Episode back = Episode::restore(prefix.blob(), env, pi);
      back.resume();
      back.run_to_end();
      CHECK(jsonl(back.rollout()) == jsonl(full));
      CHECK(prefix.partial.steps.size() == static_cast<std::size_t>(t));
      CHECK(prefix.partial.steps.back().tau() == j - 1);
    }
  }
}

TEST_CASE("captures are pure and the first prefix holds only s0, a1") {
  const Environment env = world_env();
  const ExpPolicy pi = ExpPolicy::epsilon_market(0.5);
  const RolloutPrefix a = capture_prefix(env, pi, 10, 8, 1, 1);
  const RolloutPrefix b = capture_prefix(env, pi, 10, 8, 1, 1);
  CHECK(a.blob() == b.blob());
  REQUIRE(a.partial.steps.size() == 1);
  CHECK(a.partial.steps[0].bg.empty());
  CHECK_FALSE(a.partial.complete);
  CHECK(a.pending_state.features.size() == static_cast<std::size_t>(desk().state_dim()));
}

TEST_CASE("capture beyond the realized schedule fails") {
  const Environment env = world_env();
  try {
    capture_prefix(env, ExpPolicy::aggressive(), 10, 1, 2, desk().world_wakeups_per_step + 1);
    FAIL("expected IndexBeyondRealizedTau");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IndexBeyondRealizedTau);
  }
  CHECK_THROWS_AS(capture_prefix(env, ExpPolicy::aggressive(), 10, 1, 11, 1), Error);
}

TEST_CASE("snapshot blobs are versioned") {
  const Environment env = world_env();
  const RolloutPrefix p = capture_prefix(env, ExpPolicy::aggressive(), 10, 1, 2, 3);
  std::string blob = p.blob();
  CHECK(blob.substr(0, 6) == "ICSNAP");
  blob[8] = 9;  // version field
  CHECK_THROWS_AS(Episode::restore(blob, env, ExpPolicy::aggressive()), Error);
  CHECK_THROWS_AS(Episode::restore("junk", env, ExpPolicy::aggressive()), Error);
}

TEST_CASE("MC finishes share the prefix and carry the forced action") {
  const Environment env = world_env();
  const ExpPolicy pi = ExpPolicy::epsilon_market(0.5);
  const RolloutPrefix prefix = capture_prefix(env, pi, 10, 12, 3, 4);
  const WorldAction forced = WorldAction::market(1, 2);
  const auto rs = mc_finish(prefix, forced, env.policy() ? std::make_shared<const WorldPolicy>(*env.policy()) : nullptr,
                            {1, 2, 3, 4, 5});
  REQUIRE(rs.size() == 5);
  for (const auto& r : rs) {
    CHECK(r.complete);
    for (int t = 0; t < 2; ++t) CHECK(r.steps[static_cast<std::size_t>(t)] == prefix.partial.steps[static_cast<std::size_t>(t)]);
    const auto& step3 = r.steps[2];
    for (int k = 0; k < 3; ++k) CHECK(step3.bg[static_cast<std::size_t>(k)] == prefix.partial.steps[2].bg[static_cast<std::size_t>(k)]);
    CHECK(step3.bg[3].action == forced);
  }
  CHECK(jsonl(rs[0]) != jsonl(rs[1]));
}

TEST_CASE("forcing at the final decision leaves nothing to sample") {
  const Environment env = world_env();
  const ExpPolicy pi = ExpPolicy::epsilon_market(0.5);
  const RolloutPrefix prefix = capture_prefix(env, pi, 10, 3, 10, desk().world_wakeups_per_step);
  const auto policy = std::make_shared<const WorldPolicy>(*env.policy());
  const auto rs = mc_finish(prefix, WorldAction::hold(), policy, {11, 12, 13});
  // Only the recorded seed may differ.
  CHECK(rs[0].steps == rs[1].steps);
  CHECK(rs[1].steps == rs[2].steps);
  CHECK(rs[0].steps.back().bg.back().action == WorldAction::hold());
}

TEST_CASE("forced hold in an inert world leaves the facts unchanged") {
  EnvConfig cfg = desk();
  cfg.world_floor = no_agents();
  cfg.world_wakeups_per_step = 1;
  const Environment env = Environment::world(cfg, WorldPolicy(cfg.policy_shape));
  const RolloutPrefix prefix = capture_prefix(env, ExpPolicy::passive(), 3, 1, 2, 1);
  const auto rs = mc_finish(prefix, WorldAction::hold(), std::make_shared<const WorldPolicy>(*env.policy()), {5});
  CHECK(rs[0].steps[1].facts_after.mid == prefix.partial.steps[0].facts_after.mid);
  CHECK(rs[0].steps[1].facts_after.imbalance == prefix.partial.steps[0].facts_after.imbalance);
}

TEST_CASE("illegal forced actions are rejected") {
  const Environment env = world_env();
  const RolloutPrefix prefix = capture_prefix(env, ExpPolicy::passive(), 10, 1, 1, 1);
  REQUIRE(prefix.pending_state.n_resting == 0);
  try {
    mc_finish(prefix, WorldAction::cancel(0), std::make_shared<const WorldPolicy>(*env.policy()), {1});
    FAIL("expected IllegalForcedAction");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IllegalForcedAction);
  }
}

TEST_CASE("world states have the configured dimension and are zero-padded at the start") {
  const Rollout r = run_rollout(world_env(), ExpPolicy::aggressive(), 2, 1);
  const auto& s = r.steps[0].bg[0].state;
  REQUIRE(s.features.size() == static_cast<std::size_t>(desk().state_dim()));
  // Current facts, then the opening facts, then three window slots before the scenario start.
  for (int i = 2 * EnvConfig::kFactFeatures; i < EnvConfig::kWindow * EnvConfig::kFactFeatures; ++i)
    CHECK(s.features[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("configuration errors") {
  EnvConfig cfg = desk();
  cfg.policy_shape.state_dim = 7;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = desk();
  cfg.exp.horizon = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
