#include "icsim/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icsim {

Price MarketView::anchor(Side side) const {
  return static_cast<Price>(side == Side::Bid ? std::floor(mid) : std::ceil(mid));
}

std::vector<BgAgent> make_population(const BgPopulationConfig& cfg, AgentId first_id, double start_mid, Rng& rng) {
  std::vector<BgAgent> out;
  AgentId id = first_id;
  auto add = [&](Archetype kind, int count) {
    for (int i = 0; i < count; ++i) {
      BgAgent a;
      a.id = id++;
      a.kind = kind;
      if (kind == Archetype::Value) {
        a.anchor = start_mid + cfg.value_params.initial_spread * rng.normal();
        a.fundamental = a.anchor;
      }
      out.push_back(std::move(a));
    }
  };
  add(Archetype::MarketMaker, cfg.market_maker);
  add(Archetype::Value, cfg.value);
  add(Archetype::Momentum, cfg.momentum);
  add(Archetype::Noise, cfg.noise);
  return out;
}

void prune_resting(BgAgent& agent, const Book& book) {
  std::erase_if(agent.resting, [&](OrderId id) { return !book.contains(id); });
  if (agent.bid_quote >= 0 && !book.contains(agent.bid_quote)) agent.bid_quote = -1;
  if (agent.ask_quote >= 0 && !book.contains(agent.ask_quote)) agent.ask_quote = -1;
}

NoiseDecision sample_noise_decision(const NoiseParams& p, Rng& rng) {
  NoiseDecision d;
  d.cancel_oldest = rng.bernoulli(p.cancel_prob);
  d.side = rng.bernoulli(0.5) ? Side::Bid : Side::Ask;
  d.offset = static_cast<int>(rng.uniform_int(-p.price_range, p.price_range));
  d.size = p.sizes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(p.sizes.size()) - 1))];
  return d;
}

std::optional<Order> noise_order(BgAgent& agent, const NoiseDecision& d, const MarketView& view, OrderId next_id) {
  prune_resting(agent, view.book);
  if (d.cancel_oldest && !agent.resting.empty()) {
    const OrderId target = agent.resting.front();
    agent.resting.erase(agent.resting.begin());
    return Order::cancel(next_id, agent.id, target);
  }
  const Price price = view.price_at(d.side, d.offset);
  agent.resting.push_back(next_id);
  return Order::limit(next_id, agent.id, d.side, price, d.size);
}

std::optional<Order> value_order(BgAgent& agent, const ValueParams& p, double shock, const MarketView& view,
                                 OrderId next_id) {
  prune_resting(agent, view.book);
  agent.fundamental += p.kappa * (agent.anchor - agent.fundamental) + p.sigma * shock;
  const double gap = agent.fundamental - view.mid;
  if (std::abs(gap) <= p.threshold) return std::nullopt;
  const Side side = gap > 0 ? Side::Bid : Side::Ask;
  agent.resting.push_back(next_id);
  return Order::limit(next_id, agent.id, side, view.price_at(side, 0), p.size);
}

std::optional<Order> momentum_order(BgAgent& agent, const MomentumParams& p, const MarketView& view, OrderId next_id) {
  agent.mid_history.push_back(view.mid);
  const auto keep = static_cast<std::size_t>(p.long_window);
  if (agent.mid_history.size() > keep)
    agent.mid_history.erase(agent.mid_history.begin(),
                            agent.mid_history.end() - static_cast<std::ptrdiff_t>(keep));
  if (agent.mid_history.size() < keep) return std::nullopt;
  auto mean_last = [&](int w) {
    const auto& h = agent.mid_history;
    return std::accumulate(h.end() - w, h.end(), 0.0) / w;
  };
  const double short_ma = mean_last(p.short_window);
  const double long_ma = mean_last(p.long_window);
  if (short_ma == long_ma) return std::nullopt;
  return Order::market(next_id, agent.id, short_ma > long_ma ? Side::Bid : Side::Ask, p.size);
}

std::optional<Order> market_maker_order(BgAgent& agent, const MarketMakerParams& p, const MarketView& view,
                                        OrderId next_id) {
  prune_resting(agent, view.book);
  const Price bid_target = view.price_at(Side::Bid, -static_cast<int>(p.half_spread));
  const Price ask_target = view.price_at(Side::Ask, static_cast<int>(p.half_spread));
  if (agent.bid_quote < 0) {
    agent.bid_quote = next_id;
    return Order::limit(next_id, agent.id, Side::Bid, bid_target, p.size);
  }
  if (agent.ask_quote < 0) {
    agent.ask_quote = next_id;
    return Order::limit(next_id, agent.id, Side::Ask, ask_target, p.size);
  }
  if (const Order* q = view.book.find(agent.bid_quote); q && *q->price != bid_target) {
    const OrderId old = agent.bid_quote;
    agent.bid_quote = next_id;
    return Order::replace(next_id, agent.id, old, bid_target, p.size);
  }
  if (const Order* q = view.book.find(agent.ask_quote); q && *q->price != ask_target) {
    const OrderId old = agent.ask_quote;
    agent.ask_quote = next_id;
    return Order::replace(next_id, agent.id, old, ask_target, p.size);
  }
  return std::nullopt;
}

std::optional<Order> bg_act(BgAgent& agent, const BgPopulationConfig& cfg, const MarketView& view, OrderId next_id,
                            Rng& rng) {
  switch (agent.kind) {
    case Archetype::Noise: return noise_order(agent, sample_noise_decision(cfg.noise_params, rng), view, next_id);
    case Archetype::Value: return value_order(agent, cfg.value_params, rng.normal(), view, next_id);
    case Archetype::Momentum: return momentum_order(agent, cfg.momentum_params, view, next_id);
    case Archetype::MarketMaker: return market_maker_order(agent, cfg.market_maker_params, view, next_id);
  }
  return std::nullopt;
}

ExpAction exp_act_aggressive(const ExpAgentState& state) {
  return state.remaining_frac > 0.0 ? ExpAction::Limit : ExpAction::Hold;
}

std::array<double, 3> ExpPolicy::probabilities(const ExpAgentState& s) const {
  if (s.remaining_frac <= 0.0) return {0.0, 0.0, 1.0};
  switch (kind) {
    case ExpPolicyKind::Aggressive: return {0.0, 1.0, 0.0};
    case ExpPolicyKind::Uniform: return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    case ExpPolicyKind::EpsilonMarket: return {epsilon, 1.0 - epsilon, 0.0};
    case ExpPolicyKind::Passive: return {0.0, 0.0, 1.0};
    case ExpPolicyKind::SpreadContingent: {
      const double p = s.market.spread >= spread_threshold ? p_market_wide : p_market_narrow;
      return {p, 1.0 - p, 0.0};
    }
  }
  return {0.0, 0.0, 1.0};
}

ExpAction ExpPolicy::act(const ExpAgentState& s, Rng& rng) const {
  const auto p = probabilities(s);
  const double u = rng.uniform();
  if (u < p[0]) return ExpAction::Market;
  if (u < p[0] + p[1]) return ExpAction::Limit;
  return ExpAction::Hold;
}

double propensity(const ExpPolicy& pi, const ExpAgentState& s) { return pi.probabilities(s)[0]; }

QTable::QTable(double alpha, double gamma, double penalty, int bins)
    : alpha_(alpha), gamma_(gamma), penalty_(penalty), bins_(bins) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::ConfigError, "discount must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::ConfigError, "learning rate must lie in [0, 1]");
  if (bins < 1) throw Error(Errc::ConfigError, "need at least one bin");
}

double QTable::value(StateKey s, int a) const {
  auto it = values_.find({s, a});
  return it == values_.end() ? 0.0 : it->second;
}

double QTable::max_value(StateKey s) const {
  double m = value(s, 0);
  for (int a = 1; a < 3; ++a) m = std::max(m, value(s, a));
  return m;
}

int QTable::greedy(StateKey s) const {
  int best = 0;
  for (int a = 1; a < 3; ++a)
    if (value(s, a) > value(s, best)) best = a;
  return best;
}

QTable::StateKey QTable::discretize(const ExpAgentState& s) const {
  auto bucket = [this](double x) {
    return static_cast<StateKey>(std::clamp(static_cast<int>(std::floor(x * bins_)), 0, bins_ - 1));
  };
  const StateKey spread = std::clamp<StateKey>(static_cast<StateKey>(s.market.spread), 0, 9);
  return (bucket(s.elapsed_frac) * bins_ + bucket(s.remaining_frac)) * 10 + spread;
}

QTable q_update(QTable table, QTable::StateKey s, int a, double reward, QTable::StateKey s_next) {
  const double q = table.value(s, a);
  const double target = reward + table.gamma() * table.max_value(s_next);
  table.set(s, a, q + table.alpha() * (target - q));
  return table;
}

}  // namespace icsim
