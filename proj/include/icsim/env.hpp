#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "icsim/agents.hpp"
#include "icsim/lob.hpp"
#include "icsim/world_policy.hpp"

namespace icsim {

inline constexpr AgentId kSeedOwner = 0;
inline constexpr AgentId kExpAgent = 1;
inline constexpr AgentId kWorldAgent = 2;
inline constexpr AgentId kFirstBgAgent = 10;

struct MarketConfig {
  Price tick_size = 1;
  Price start_best_bid = 9999;
  Price start_best_ask = 10001;
  int initial_levels = 10;
  Volume initial_level_volume = 100;
  std::vector<int> imbalance_levels{5, 0};  // 0 = all levels
  int export_levels = 10;
  DepthConvention depth_convention = DepthConvention::Corrected;

  double start_mid() const { return 0.5 * static_cast<double>(start_best_bid + start_best_ask); }

  friend bool operator==(const MarketConfig&, const MarketConfig&) = default;
};

struct ExpConfig {
  int horizon = 10;
  Volume parent_order = 50;
  double penalty = 5.0;  // currency per unfilled share
  Volume order_size = 10;
  ExpPolicy policy;
  bool stop_when_filled = false;

  friend bool operator==(const ExpConfig&, const ExpConfig&) = default;
};

/// Everything about a market except where the background flow comes from.
struct EnvConfig {
  MarketConfig market;
  ExpConfig exp;
  int world_wakeups_per_step = 20;
  BgPopulationConfig world_floor = [] {
    BgPopulationConfig c;
    c.noise = 0;
    c.value = 0;
    c.momentum = 0;
    c.market_maker = 1;
    return c;
  }();
  WorldPolicyShape policy_shape;
  std::vector<Volume> size_grid{10, 20, 50};
  int state_book_levels = 3;
  bool record_states = true;
  bool record_snapshots = false;

  static constexpr int kWindow = 5;
  static constexpr int kFactFeatures = 6;
  int state_dim() const { return kWindow * kFactFeatures + 2 * state_book_levels; }
  void validate() const;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct RealEnv {
  BgPopulationConfig population;
};

struct WorldEnv {
  std::shared_ptr<const WorldPolicy> policy;
};

enum class EnvTag : std::uint8_t { Real = 0, World = 1 };

/// A market: configuration plus exactly one background source.
struct Environment {
  EnvConfig config;
  std::variant<RealEnv, WorldEnv> source;

  EnvTag tag() const { return source.index() == 0 ? EnvTag::Real : EnvTag::World; }
  const WorldPolicy* policy() const;

  static Environment real(EnvConfig cfg, BgPopulationConfig population) {
    return Environment{std::move(cfg), RealEnv{std::move(population)}};
  }
  static Environment world(EnvConfig cfg, WorldPolicy policy) {
    return Environment{std::move(cfg), WorldEnv{std::make_shared<const WorldPolicy>(std::move(policy))}};
  }
};

std::string to_string(EnvTag tag);
EnvTag env_tag_from_string(const std::string& s);

struct BgInteraction {
  AgentId agent = 0;
  WorldState state;  // empty features when state recording is off
  WorldAction action;

  friend bool operator==(const BgInteraction&, const BgInteraction&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(agent, state, action);
  }
};

/// One step of the experimental agent and the background reaction to it.
struct ExpStep {
  int t = 0;
  ExpAgentState s_prev;
  ExpAction a = ExpAction::Hold;
  double reward = 0.0;
  Volume executed = 0;  // shares the exp agent acquired during the step
  std::vector<BgInteraction> bg;
  StylizedFacts facts_after;

  int tau() const { return static_cast<int>(bg.size()); }

  friend bool operator==(const ExpStep&, const ExpStep&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(t, s_prev, a, reward, executed, bg, facts_after);
  }
};

struct Rollout {
  std::vector<ExpStep> steps;
  int horizon = 0;
  std::uint64_t seed = 0;
  EnvTag env = EnvTag::Real;
  bool complete = false;

  friend bool operator==(const Rollout&, const Rollout&) = default;
};

/// Book and fact snapshot taken after one market event (for plotting exports).
struct SnapshotRow {
  std::int64_t event_clock = 0;
  int t = 0;
  std::vector<Level> bids;
  std::vector<Level> asks;
  StylizedFacts facts;
  Volume cum_buy = 0;   // executed volume with a buying taker
  Volume cum_sell = 0;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(event_clock, t, bids, asks, facts, cum_buy, cum_sell);
  }
};

/// Where to pause: before the j-th recorded background decision of step t.
/// j = kLastDecision targets the last decision of that step.
struct StopAt {
  static constexpr int kLastDecision = -1;
  int t = 0;
  int j = kLastDecision;
};

enum class RunStatus { Paused, PassedTarget, Finished };

/// A resumable interaction episode. Copying an Episode snapshots it: the copy
/// continues exactly like the original when fed the same random stream.
class Episode {
public:
  Episode(Environment env, ExpPolicy exp_policy, std::uint64_t seed);

  /// Runs to completion (resolving any pending decision by sampling).
  void run_to_end();

  /// Runs until the stop target is reached (Paused), step `stop.t` ends
  /// without reaching it (PassedTarget), or the horizon ends (Finished).
  RunStatus run_until(StopAt stop);

  /// Resolves the pending decision: with `forced` for a world decision, or by
  /// the acting agent's own rule when empty.
  void resume(const std::optional<WorldAction>& forced = std::nullopt);

  bool paused() const { return state_.paused; }
  bool finished() const { return state_.phase == Phase::Done; }
  const WorldState& pending_state() const { return state_.pending_state; }
  int current_step() const { return state_.t; }
  int pending_index() const;

  /// Replaces the random stream (MC branches draw from fresh seeds).
  void reseed(std::uint64_t seed);
  void set_policy(std::shared_ptr<const WorldPolicy> policy);

  Rollout rollout() const;
  const Book& book() const { return state_.book; }
  const std::vector<SnapshotRow>& snapshots() const { return state_.snapshots; }
  const Environment& environment() const { return env_; }

  /// Versioned binary image of the full simulation state.
  std::string snapshot_blob() const;
  static Episode restore(const std::string& blob, Environment env, ExpPolicy exp_policy);

private:
  enum class Phase : std::uint8_t { BeforeStep, InStep, Done };

  struct State {
    Book book;
    std::vector<BgAgent> agents;
    std::vector<OrderId> world_resting;
    std::vector<OrderId> exp_resting;
    Volume exp_filled = 0;
    Rng rng;
    std::uint64_t seed = 0;
    int t = 0;
    Phase phase = Phase::BeforeStep;
    std::vector<int> schedule;  // agent index, or -1 for the world agent
    std::size_t cursor = 0;
    int step_tau = 0;
    OrderId next_id = 1;
    double start_mid = 0.0;
    double last_mid = 0.0;
    double prev_step_mid = 0.0;
    std::vector<StylizedFacts> step_facts;
    std::vector<ExpStep> steps;
    bool paused = false;
    WorldState pending_state;
    std::vector<SnapshotRow> snapshots;
    Volume cum_buy = 0;
    Volume cum_sell = 0;

    template <class Archive>
    void save(Archive& ar) const;
    template <class Archive>
    void load(Archive& ar);
  };

  Episode(Environment env, ExpPolicy exp_policy);

  void begin_step();
  void end_step();
  bool is_recorded(int slot) const;
  const BgPopulationConfig& population() const;
  std::vector<Execution> submit(const Order& order, std::optional<Price> depth_price = std::nullopt);
  WorldState observe(int slot);
  void act(int slot, const WorldState& s, const std::optional<WorldAction>& forced);
  std::optional<Order> world_order(const WorldAction& a);
  WorldAction encode(const BgAgent& agent, const std::optional<Order>& order, const MarketView& view) const;
  MarketView view() const { return MarketView{state_.book, state_.last_mid}; }
  StylizedFacts facts_now() const;

  Environment env_;
  ExpPolicy exp_policy_;
  State state_;
};

/// Snapshot of an episode paused before a background decision.
struct RolloutPrefix {
  Rollout partial;  // steps so far; the last step holds decisions 1..j-1
  WorldState pending_state;
  int t = 0;
  int j = 0;
  Episode episode;

  std::string blob() const { return episode.snapshot_blob(); }
};

Rollout run_rollout(const Environment& env, const ExpPolicy& pi, int horizon, std::uint64_t seed);

RolloutPrefix capture_prefix(const Environment& env, const ExpPolicy& pi, int horizon, std::uint64_t seed, int t,
                             int j);

/// Finishes `prefix` once per seed with `forced` applied as the pending
/// decision and the remainder sampled from `policy`.
std::vector<Rollout> mc_finish(const RolloutPrefix& prefix, const WorldAction& forced,
                               std::shared_ptr<const WorldPolicy> policy, const std::vector<std::uint64_t>& seeds);

/// Features of one fact snapshot as fed to the world policy.
std::array<double, EnvConfig::kFactFeatures> fact_features(const StylizedFacts& f);

ExpMarketFeatures exp_market_features(const StylizedFacts& f);

}  // namespace icsim
