#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "icsim/common.hpp"
#include "icsim/lob.hpp"

namespace icsim {

// ---------------------------------------------------------------------------
// Background archetypes
// ---------------------------------------------------------------------------

enum class Archetype : std::uint8_t { Noise = 0, Value = 1, Momentum = 2, MarketMaker = 3 };

struct NoiseParams {
  int price_range = 3;                  // offsets uniform in [-range, range]
  std::vector<Volume> sizes{10, 20, 50};
  double cancel_prob = 0.1;             // chance a wake-up cancels the oldest own order

  friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

struct ValueParams {
  double kappa = 0.05;           // OU mean reversion toward the anchor per wake-up
  double sigma = 1.0;            // OU noise, ticks per wake-up
  double initial_spread = 5.0;   // sd of the initial fundamental around the start mid
  double threshold = 2.0;        // ticks
  Volume size = 20;

  friend bool operator==(const ValueParams&, const ValueParams&) = default;
};

struct MomentumParams {
  int short_window = 2;
  int long_window = 5;
  Volume size = 10;

  friend bool operator==(const MomentumParams&, const MomentumParams&) = default;
};

struct MarketMakerParams {
  Price half_spread = 1;
  Volume size = 100;

  friend bool operator==(const MarketMakerParams&, const MarketMakerParams&) = default;
};

struct BgPopulationConfig {
  int noise = 100;
  int value = 2;
  int momentum = 1;
  int market_maker = 1;
  NoiseParams noise_params;
  ValueParams value_params;
  MomentumParams momentum_params;
  MarketMakerParams market_maker_params;
  double extra_wakeup_rate = 0.0;  // Poisson mean of extra wake-ups per agent per step
  std::uint64_t seed = 0;

  int total() const { return noise + value + momentum + market_maker; }

  friend bool operator==(const BgPopulationConfig&, const BgPopulationConfig&) = default;
};

/// Mutable per-agent state carried across wake-ups.
struct BgAgent {
  AgentId id = 0;
  Archetype kind = Archetype::Noise;
  double fundamental = 0.0;         // value agents
  double anchor = 0.0;              // OU long-run mean
  std::vector<double> mid_history;  // momentum agents
  std::vector<OrderId> resting;     // own orders believed resting, oldest first
  OrderId bid_quote = -1;           // market makers
  OrderId ask_quote = -1;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(id, kind, fundamental, anchor, mid_history, resting, bid_quote, ask_quote);
  }
};

/// What a background agent sees: the book and the reference mid (the current
/// mid, or the last known mid when a side is empty).
struct MarketView {
  const Book& book;
  double mid;

  /// Integer reference price for orders on `side`: bids round the mid down,
  /// asks round it up, so a half-tick mid biases neither side.
  Price anchor(Side side) const;
  Price price_at(Side side, int offset) const { return std::max<Price>(1, anchor(side) + offset); }
};

std::vector<BgAgent> make_population(const BgPopulationConfig& cfg, AgentId first_id, double start_mid, Rng& rng);

/// Draws of a noise agent at one wake-up.
struct NoiseDecision {
  bool cancel_oldest = false;
  Side side = Side::Bid;
  int offset = 0;
  Volume size = 0;
};

NoiseDecision sample_noise_decision(const NoiseParams& p, Rng& rng);
std::optional<Order> noise_order(BgAgent& agent, const NoiseDecision& d, const MarketView& view, OrderId next_id);

/// Value agent: OU step of the fundamental (using `shock`), then trade toward it.
std::optional<Order> value_order(BgAgent& agent, const ValueParams& p, double shock, const MarketView& view,
                                 OrderId next_id);
std::optional<Order> momentum_order(BgAgent& agent, const MomentumParams& p, const MarketView& view, OrderId next_id);
std::optional<Order> market_maker_order(BgAgent& agent, const MarketMakerParams& p, const MarketView& view,
                                        OrderId next_id);

/// One wake-up of `agent`: at most one order, deterministic given `rng`.
std::optional<Order> bg_act(BgAgent& agent, const BgPopulationConfig& cfg, const MarketView& view, OrderId next_id,
                            Rng& rng);

/// Drops ids no longer resting in `book` from the agent's bookkeeping.
void prune_resting(BgAgent& agent, const Book& book);

// ---------------------------------------------------------------------------
// Experimental (optimal-execution) agent
// ---------------------------------------------------------------------------

enum class ExpAction : int { Market = 0, Limit = 1, Hold = 2 };

struct ExpMarketFeatures {
  double imbalance5 = 0.5;
  double imbalance_all = 0.5;
  double spread = 0.0;
  double price_impact = 0.0;
  int direction = 0;

  friend bool operator==(const ExpMarketFeatures&, const ExpMarketFeatures&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(imbalance5, imbalance_all, spread, price_impact, direction);
  }
};

struct ExpAgentState {
  double elapsed_frac = 0.0;
  double remaining_frac = 1.0;
  double pace_gap = 0.0;  // elapsed_frac - (1 - remaining_frac)
  ExpMarketFeatures market;

  static ExpAgentState make(double elapsed, double remaining, const ExpMarketFeatures& m) {
    return ExpAgentState{elapsed, remaining, elapsed - (1.0 - remaining), m};
  }

  friend bool operator==(const ExpAgentState&, const ExpAgentState&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(elapsed_frac, remaining_frac, pace_gap, market);
  }
};

/// Keeps placing limit orders until the parent order is filled.
ExpAction exp_act_aggressive(const ExpAgentState& state);

enum class ExpPolicyKind : std::uint8_t {
  Aggressive,       // limit orders until filled
  Uniform,          // zero-intelligence over {market, limit, hold}
  EpsilonMarket,    // market with probability epsilon, else limit
  SpreadContingent,  // market probability depends on the spread (confounded)
  Passive            // always holds
};

/// Experimental agent policy as an explicit action distribution, so the
/// propensity of every policy is exact. A filled parent order always holds.
struct ExpPolicy {
  ExpPolicyKind kind = ExpPolicyKind::EpsilonMarket;
  double epsilon = 0.5;
  double spread_threshold = 2.0;  // SpreadContingent: wide spread when spread >= threshold
  double p_market_wide = 0.8;
  double p_market_narrow = 0.2;

  std::array<double, 3> probabilities(const ExpAgentState& s) const;
  ExpAction act(const ExpAgentState& s, Rng& rng) const;

  static ExpPolicy aggressive() { return ExpPolicy{ExpPolicyKind::Aggressive}; }
  static ExpPolicy passive() { return ExpPolicy{ExpPolicyKind::Passive}; }
  static ExpPolicy uniform() { return ExpPolicy{ExpPolicyKind::Uniform}; }
  static ExpPolicy epsilon_market(double eps) { return ExpPolicy{ExpPolicyKind::EpsilonMarket, eps}; }

  friend bool operator==(const ExpPolicy&, const ExpPolicy&) = default;
};

/// Exact probability that `pi` places a market order in state `s`.
double propensity(const ExpPolicy& pi, const ExpAgentState& s);

// ---------------------------------------------------------------------------
// Tabular Q-learning for the execution task
// ---------------------------------------------------------------------------

/// Tabular action values over discretized execution states. Unvisited
/// entries read as zero.
class QTable {
public:
  using StateKey = std::int64_t;

  QTable(double alpha, double gamma, double penalty, int bins = 5);

  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  double penalty() const { return penalty_; }

  double value(StateKey s, int a) const;
  void set(StateKey s, int a, double v) { values_[{s, a}] = v; }
  double max_value(StateKey s) const;
  int greedy(StateKey s) const;

  /// Grid key over (elapsed, remaining, spread bucket).
  StateKey discretize(const ExpAgentState& s) const;

  friend bool operator==(const QTable&, const QTable&) = default;

private:
  double alpha_;
  double gamma_;
  double penalty_;
  int bins_;
  std::map<std::pair<StateKey, int>, double> values_;
};

/// Q(s,a) <- Q(s,a) + alpha (R + gamma max_a' Q(s',a') - Q(s,a)).
QTable q_update(QTable table, QTable::StateKey s, int a, double reward, QTable::StateKey s_next);

}  // namespace icsim
