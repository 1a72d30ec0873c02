#include "icsim/env.hpp"

#include <algorithm>
#include <cereal/archives/binary.hpp>
#include <cereal/types/deque.hpp>
#include <cereal/types/map.hpp>
#include <cereal/types/optional.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/utility.hpp>
#include <cereal/types/vector.hpp>
#include <cmath>
#include <cstring>
#include <sstream>

namespace icsim {

void EnvConfig::validate() const {
  if (exp.horizon < 1) throw Error(Errc::ConfigError, "horizon must be at least 1");
  if (exp.parent_order < 0 || exp.order_size <= 0) throw Error(Errc::ConfigError, "bad parent order or order size");
  if (market.start_best_bid >= market.start_best_ask || market.start_best_bid < 1)
    throw Error(Errc::ConfigError, "initial book must be uncrossed with positive prices");
  if (market.initial_levels < 0 || market.initial_level_volume <= 0)
    throw Error(Errc::ConfigError, "bad initial book depth");
  if (policy_shape.state_dim != state_dim())
    throw Error(Errc::ConfigError, "policy state_dim " + std::to_string(policy_shape.state_dim) +
                                       " does not match the environment state dimension " +
                                       std::to_string(state_dim()));
  if (static_cast<int>(size_grid.size()) != policy_shape.size_buckets)
    throw Error(Errc::ConfigError, "size grid length must equal the number of size buckets");
  for (Volume v : size_grid)
    if (v <= 0) throw Error(Errc::ConfigError, "size grid entries must be positive");
  if (world_wakeups_per_step < 0) throw Error(Errc::ConfigError, "negative world wake-ups");
}

const WorldPolicy* Environment::policy() const {
  if (const auto* w = std::get_if<WorldEnv>(&source)) return w->policy.get();
  return nullptr;
}

std::string to_string(EnvTag tag) { return tag == EnvTag::Real ? "real" : "world"; }

EnvTag env_tag_from_string(const std::string& s) {
  if (s == "real") return EnvTag::Real;
  if (s == "world") return EnvTag::World;
  throw Error(Errc::ParseError, "unknown environment kind: " + s);
}

std::array<double, EnvConfig::kFactFeatures> fact_features(const StylizedFacts& f) {
  std::array<double, EnvConfig::kFactFeatures> x{};
  x[0] = f.log_return.value_or(0.0) * 1e3;
  x[1] = f.price_impact.value_or(0.0) * 1e3;
  x[2] = f.spread.value_or(0.0) / 10.0;
  x[3] = f.imbalance.size() > 0 ? f.imbalance[0] - 0.5 : 0.0;
  x[4] = f.imbalance.size() > 1 ? f.imbalance[1] - 0.5 : 0.0;
  x[5] = static_cast<double>(f.direction);
  return x;
}

ExpMarketFeatures exp_market_features(const StylizedFacts& f) {
  ExpMarketFeatures m;
  auto level = [&](int n) -> std::optional<double> {
    auto it = std::find(f.levels.begin(), f.levels.end(), n);
    if (it == f.levels.end()) return std::nullopt;
    return f.imbalance[static_cast<std::size_t>(it - f.levels.begin())];
  };
  m.imbalance5 = level(5).value_or(0.5);
  m.imbalance_all = level(0).value_or(0.5);
  m.spread = f.spread.value_or(0.0);
  m.price_impact = f.price_impact.value_or(0.0);
  m.direction = f.direction;
  return m;
}

// ---------------------------------------------------------------------------

Episode::Episode(Environment env, ExpPolicy exp_policy) : env_(std::move(env)), exp_policy_(exp_policy) {}

Episode::Episode(Environment env, ExpPolicy exp_policy, std::uint64_t seed)
    : env_(std::move(env)), exp_policy_(exp_policy) {
  const EnvConfig& cfg = env_.config;
  cfg.validate();
  if (env_.tag() == EnvTag::World) {
    const WorldPolicy* p = env_.policy();
    if (!p) throw Error(Errc::ConfigError, "world environment without a policy");
    if (!(p->shape() == cfg.policy_shape)) throw Error(Errc::ConfigError, "world policy shape differs from config");
  }
  state_.book = Book(cfg.market.tick_size);
  state_.rng = Rng(seed);
  state_.seed = seed;
  for (int i = 0; i < cfg.market.initial_levels; ++i) {
    state_.book.submit(Order::limit(state_.next_id++, kSeedOwner, Side::Bid, cfg.market.start_best_bid - i,
                                    cfg.market.initial_level_volume));
    state_.book.submit(Order::limit(state_.next_id++, kSeedOwner, Side::Ask, cfg.market.start_best_ask + i,
                                    cfg.market.initial_level_volume));
  }
  state_.start_mid = cfg.market.start_mid();
  state_.last_mid = state_.start_mid;
  state_.prev_step_mid = state_.start_mid;
  Rng pop_rng(derive_seed(seed, population().seed, 1));
  state_.agents = make_population(population(), kFirstBgAgent, state_.start_mid, pop_rng);
}

const BgPopulationConfig& Episode::population() const {
  if (const auto* r = std::get_if<RealEnv>(&env_.source)) return r->population;
  return env_.config.world_floor;
}

bool Episode::is_recorded(int slot) const { return env_.tag() == EnvTag::Real ? slot >= 0 : slot < 0; }

int Episode::pending_index() const {
  return state_.paused ? static_cast<int>(state_.steps.back().bg.size()) + 1 : 0;
}

void Episode::reseed(std::uint64_t seed) {
  state_.rng = Rng(seed);
  state_.seed = seed;
}

void Episode::set_policy(std::shared_ptr<const WorldPolicy> policy) {
  auto* w = std::get_if<WorldEnv>(&env_.source);
  if (!w) throw Error(Errc::ConfigError, "policy set on a real environment");
  if (!policy || !(policy->shape() == env_.config.policy_shape))
    throw Error(Errc::ConfigError, "world policy shape differs from config");
  w->policy = std::move(policy);
}

StylizedFacts Episode::facts_now() const {
  return snapshot_facts(state_.book, state_.start_mid, state_.prev_step_mid, env_.config.market.imbalance_levels);
}

std::vector<Execution> Episode::submit(const Order& order, std::optional<Price> depth_price) {
  std::optional<double> depth;
  if (env_.config.record_snapshots && depth_price && order.kind == OrderKind::Limit) {
    try {
      depth = static_cast<double>(depth_of(state_.book, order, env_.config.market.depth_convention));
    } catch (const Error&) {
    }
  }
  auto execs = state_.book.submit(order);
  for (const auto& e : execs) {
    if (e.taker_side == Side::Bid)
      state_.cum_buy += e.volume;
    else
      state_.cum_sell += e.volume;
    if (e.taker_owner == kExpAgent || e.maker_owner == kExpAgent) {
      ExpStep& step = state_.steps.back();
      state_.exp_filled += e.volume;
      step.executed += e.volume;
      step.reward -= static_cast<double>(e.volume) * (static_cast<double>(e.price) - state_.start_mid) *
                     static_cast<double>(env_.config.market.tick_size);
    }
  }
  if (auto m = mid_price(state_.book)) state_.last_mid = *m;
  if (env_.config.record_snapshots) {
    SnapshotRow row;
    row.event_clock = state_.book.event_clock();
    row.t = state_.t;
    const auto k = static_cast<std::size_t>(env_.config.market.export_levels);
    row.bids = state_.book.levels(Side::Bid, k);
    row.asks = state_.book.levels(Side::Ask, k);
    row.facts = facts_now();
    row.facts.depth = depth;
    row.cum_buy = state_.cum_buy;
    row.cum_sell = state_.cum_sell;
    state_.snapshots.push_back(std::move(row));
  }
  return execs;
}

void Episode::begin_step() {
  const EnvConfig& cfg = env_.config;
  ++state_.t;
  state_.phase = Phase::InStep;

  for (OrderId id : state_.exp_resting)
    if (state_.book.contains(id)) state_.book.submit(Order::cancel(state_.next_id++, kExpAgent, id));
  state_.exp_resting.clear();

  const Volume remaining = cfg.exp.parent_order - state_.exp_filled;
  ExpStep step;
  step.t = state_.t;
  step.s_prev = ExpAgentState::make(
      static_cast<double>(state_.t - 1) / cfg.exp.horizon,
      cfg.exp.parent_order > 0 ? static_cast<double>(remaining) / static_cast<double>(cfg.exp.parent_order) : 0.0,
      exp_market_features(facts_now()));
  step.a = exp_policy_.act(step.s_prev, state_.rng);
  state_.steps.push_back(std::move(step));

  const ExpAction a = state_.steps.back().a;
  if (a != ExpAction::Hold && remaining > 0) {
    const Volume size = std::min(cfg.exp.order_size, remaining);
    const OrderId id = state_.next_id++;
    if (a == ExpAction::Market) {
      submit(Order::market(id, kExpAgent, Side::Bid, size));
    } else {
      const Price price = state_.book.best_ask().value_or(view().price_at(Side::Ask, 1));
      const Order o = Order::limit(id, kExpAgent, Side::Bid, price, size);
      submit(o, price);
      if (state_.book.contains(id)) state_.exp_resting.push_back(id);
    }
  }

  state_.schedule.clear();
  for (std::size_t i = 0; i < state_.agents.size(); ++i) {
    const std::int64_t wakes = 1 + state_.rng.poisson(population().extra_wakeup_rate);
    for (std::int64_t k = 0; k < wakes; ++k) state_.schedule.push_back(static_cast<int>(i));
  }
  if (env_.tag() == EnvTag::World)
    for (int k = 0; k < cfg.world_wakeups_per_step; ++k) state_.schedule.push_back(-1);
  // Fisher-Yates with the episode stream
  for (std::size_t i = state_.schedule.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(state_.rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(state_.schedule[i - 1], state_.schedule[j]);
  }
  state_.cursor = 0;
  state_.step_tau = static_cast<int>(
      std::count_if(state_.schedule.begin(), state_.schedule.end(), [this](int s) { return is_recorded(s); }));
}

void Episode::end_step() {
  const EnvConfig& cfg = env_.config;
  ExpStep& step = state_.steps.back();
  step.facts_after = facts_now();
  const Volume remaining = cfg.exp.parent_order - state_.exp_filled;
  const bool filled = remaining <= 0;
  const bool last = state_.t >= cfg.exp.horizon || (cfg.exp.stop_when_filled && filled);
  if (last) step.reward -= cfg.exp.penalty * static_cast<double>(std::max<Volume>(0, remaining));
  if (step.facts_after.mid) state_.prev_step_mid = *step.facts_after.mid;
  state_.step_facts.push_back(step.facts_after);
  state_.phase = last ? Phase::Done : Phase::BeforeStep;
}

WorldState Episode::observe(int slot) {
  const EnvConfig& cfg = env_.config;
  WorldState s;
  s.features.reserve(static_cast<std::size_t>(cfg.state_dim()));
  const auto now = fact_features(facts_now());
  s.features.insert(s.features.end(), now.begin(), now.end());
  for (int k = 1; k < EnvConfig::kWindow; ++k) {
    const auto n = static_cast<int>(state_.step_facts.size());
    if (n - k >= 0) {
      const auto f = fact_features(state_.step_facts[static_cast<std::size_t>(n - k)]);
      s.features.insert(s.features.end(), f.begin(), f.end());
    } else {
      s.features.insert(s.features.end(), EnvConfig::kFactFeatures, 0.0);
    }
  }
  const auto k = static_cast<std::size_t>(cfg.state_book_levels);
  for (Side side : {Side::Bid, Side::Ask}) {
    const auto lv = state_.book.levels(side, k);
    for (std::size_t i = 0; i < k; ++i) s.features.push_back(i < lv.size() ? lv[i].volume / 100.0 : 0.0);
  }
  if (slot < 0) {
    std::erase_if(state_.world_resting, [this](OrderId id) { return !state_.book.contains(id); });
    s.n_resting = static_cast<int>(state_.world_resting.size());
  } else {
    BgAgent& agent = state_.agents[static_cast<std::size_t>(slot)];
    prune_resting(agent, state_.book);
    s.n_resting = static_cast<int>(agent.resting.size()) + (agent.bid_quote >= 0) + (agent.ask_quote >= 0);
  }
  return s;
}

std::optional<Order> Episode::world_order(const WorldAction& a) {
  const EnvConfig& cfg = env_.config;
  const Side side = a.side == 0 ? Side::Bid : Side::Ask;
  switch (a.kind) {
    case WorldKind::Hold: return std::nullopt;
    case WorldKind::Market:
      return Order::market(state_.next_id++, kWorldAgent, side, cfg.size_grid[static_cast<std::size_t>(a.size_bucket)]);
    case WorldKind::Limit: {
      const Price price = view().price_at(side, a.price_offset);
      const OrderId id = state_.next_id++;
      state_.world_resting.push_back(id);
      return Order::limit(id, kWorldAgent, side, price, cfg.size_grid[static_cast<std::size_t>(a.size_bucket)]);
    }
    case WorldKind::Cancel: {
      std::erase_if(state_.world_resting, [this](OrderId id) { return !state_.book.contains(id); });
      const auto slot = static_cast<std::size_t>(a.cancel_slot);
      if (slot >= state_.world_resting.size()) throw Error(Errc::IllegalAction, "cancel slot has no resting order");
      const OrderId target = state_.world_resting[slot];
      state_.world_resting.erase(state_.world_resting.begin() + static_cast<std::ptrdiff_t>(slot));
      return Order::cancel(state_.next_id++, kWorldAgent, target);
    }
  }
  return std::nullopt;
}

WorldAction Episode::encode(const BgAgent& agent, const std::optional<Order>& order, const MarketView& v) const {
  (void)agent;
  if (!order) return WorldAction::hold();
  const EnvConfig& cfg = env_.config;
  auto bucket = [&](Volume vol) {
    int best = 0;
    for (std::size_t i = 1; i < cfg.size_grid.size(); ++i)
      if (std::abs(cfg.size_grid[i] - vol) < std::abs(cfg.size_grid[static_cast<std::size_t>(best)] - vol))
        best = static_cast<int>(i);
    return best;
  };
  const int side = order->side == Side::Bid ? 0 : 1;
  const int k = cfg.policy_shape.price_half_range;
  switch (order->kind) {
    case OrderKind::Market: return WorldAction::market(side, bucket(order->volume));
    case OrderKind::Cancel: return WorldAction::cancel(0);
    case OrderKind::Limit:
    case OrderKind::Replace: {
      Side order_side = order->side;
      if (order->kind == OrderKind::Replace) {
        const Order* target = state_.book.find(*order->target_id);
        order_side = target && target->side == Side::Ask ? Side::Ask : Side::Bid;
      }
      const auto off = static_cast<int>(std::clamp<Price>(*order->price - v.anchor(order_side), -k, k));
      return WorldAction::limit(order_side == Side::Bid ? 0 : 1, off, bucket(order->volume));
    }
  }
  return WorldAction::hold();
}

void Episode::act(int slot, const WorldState& s, const std::optional<WorldAction>& forced) {
  const bool record = env_.config.record_states;
  if (slot < 0) {
    const WorldPolicy* policy = env_.policy();
    const WorldAction a = forced ? forced->canonical() : policy->sample(s, state_.rng);
    state_.steps.back().bg.push_back(BgInteraction{kWorldAgent, record ? s : WorldState{}, a});
    if (auto order = world_order(a)) submit(*order, order->price);
    return;
  }
  BgAgent& agent = state_.agents[static_cast<std::size_t>(slot)];
  const MarketView v = view();
  auto order = bg_act(agent, population(), v, state_.next_id, state_.rng);
  if (order) ++state_.next_id;
  if (is_recorded(slot))
    state_.steps.back().bg.push_back(BgInteraction{agent.id, record ? s : WorldState{}, encode(agent, order, v)});
  if (order) submit(*order, order->price);
}

RunStatus Episode::run_until(StopAt stop) {
  while (true) {
    if (state_.paused) return RunStatus::Paused;
    if (state_.phase == Phase::Done) return stop.t > 0 ? RunStatus::PassedTarget : RunStatus::Finished;
    if (state_.phase == Phase::BeforeStep) {
      if (stop.t > 0 && state_.t >= stop.t) return RunStatus::PassedTarget;
      begin_step();
      continue;
    }
    if (state_.cursor == state_.schedule.size()) {
      end_step();
      if (stop.t > 0 && state_.t == stop.t) return RunStatus::PassedTarget;
      continue;
    }
    const int slot = state_.schedule[state_.cursor];
    if (is_recorded(slot)) {
      const int j = static_cast<int>(state_.steps.back().bg.size()) + 1;
      const bool hit = stop.t == state_.t && (stop.j == j || (stop.j == StopAt::kLastDecision && j == state_.step_tau));
      const bool need_state = hit || slot < 0 || env_.config.record_states;
      WorldState s = need_state ? observe(slot) : WorldState{};
      if (hit) {
        state_.paused = true;
        state_.pending_state = std::move(s);
        return RunStatus::Paused;
      }
      act(slot, s, std::nullopt);
    } else {
      act(slot, WorldState{}, std::nullopt);
    }
    ++state_.cursor;
  }
}

void Episode::resume(const std::optional<WorldAction>& forced) {
  if (!state_.paused) throw Error(Errc::ConfigError, "no pending decision to resume");
  const int slot = state_.schedule[state_.cursor];
  if (forced) {
    if (slot >= 0) throw Error(Errc::IllegalForcedAction, "pending decision belongs to a rule-based agent");
    try {
      (void)env_.policy()->log_prob(state_.pending_state, *forced);
    } catch (const Error& e) {
      throw Error(Errc::IllegalForcedAction, e.what());
    }
  }
  state_.paused = false;
  act(slot, state_.pending_state, forced);
  state_.pending_state = WorldState{};
  ++state_.cursor;
}

void Episode::run_to_end() {
  if (state_.paused) resume();
  run_until(StopAt{0, 0});
}

Rollout Episode::rollout() const {
  Rollout r;
  r.steps = state_.steps;
  r.horizon = env_.config.exp.horizon;
  r.seed = state_.seed;
  r.env = env_.tag();
  r.complete = state_.phase == Phase::Done;
  return r;
}

// ---------------------------------------------------------------------------
// Snapshot blob: magic, format version, cereal binary payload.

namespace {
constexpr char kSnapshotMagic[8] = {'I', 'C', 'S', 'N', 'A', 'P', '\0', '\0'};
constexpr std::uint32_t kSnapshotVersion = 1;
}  // namespace

template <class Archive>
void Episode::State::save(Archive& ar) const {
  ar(book, agents, world_resting, exp_resting, exp_filled, rng.state(), seed, t, phase, schedule,
     static_cast<std::uint64_t>(cursor), step_tau, next_id, start_mid, last_mid, prev_step_mid, step_facts, steps,
     paused, pending_state, snapshots, cum_buy, cum_sell);
}

template <class Archive>
void Episode::State::load(Archive& ar) {
  std::string rng_state;
  std::uint64_t cur = 0;
  ar(book, agents, world_resting, exp_resting, exp_filled, rng_state, seed, t, phase, schedule, cur, step_tau,
     next_id, start_mid, last_mid, prev_step_mid, step_facts, steps, paused, pending_state, snapshots, cum_buy,
     cum_sell);
  rng.set_state(rng_state);
  cursor = static_cast<std::size_t>(cur);
}

std::string Episode::snapshot_blob() const {
  std::ostringstream os(std::ios::binary);
  os.write(kSnapshotMagic, sizeof kSnapshotMagic);
  const std::uint32_t v = kSnapshotVersion;
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
  {
    cereal::BinaryOutputArchive ar(os);
    ar(state_);
  }
  return os.str();
}

Episode Episode::restore(const std::string& blob, Environment env, ExpPolicy exp_policy) {
  if (blob.size() < sizeof kSnapshotMagic + 4 || std::memcmp(blob.data(), kSnapshotMagic, sizeof kSnapshotMagic) != 0)
    throw Error(Errc::ParseError, "not a snapshot blob");
  std::uint32_t v = 0;
  std::memcpy(&v, blob.data() + sizeof kSnapshotMagic, sizeof v);
  if (v != kSnapshotVersion) throw Error(Errc::ParseError, "unsupported snapshot version " + std::to_string(v));
  Episode e(std::move(env), exp_policy);
  std::istringstream is(blob.substr(sizeof kSnapshotMagic + sizeof v), std::ios::binary);
  try {
    cereal::BinaryInputArchive ar(is);
    ar(e.state_);
  } catch (const cereal::Exception& ex) {
    throw Error(Errc::ParseError, std::string("corrupt snapshot: ") + ex.what());
  }
  return e;
}

// ---------------------------------------------------------------------------

Rollout run_rollout(const Environment& env, const ExpPolicy& pi, int horizon, std::uint64_t seed) {
  Environment e = env;
  e.config.exp.horizon = horizon;
  Episode ep(std::move(e), pi, seed);
  ep.run_to_end();
  return ep.rollout();
}

RolloutPrefix capture_prefix(const Environment& env, const ExpPolicy& pi, int horizon, std::uint64_t seed, int t,
                             int j) {
  if (t < 1 || t > horizon) throw Error(Errc::IndexBeyondRealizedTau, "step index outside the horizon");
  if (j < 1) throw Error(Errc::IndexBeyondRealizedTau, "decision index must be at least 1");
  Environment e = env;
  e.config.exp.horizon = horizon;
  Episode ep(std::move(e), pi, seed);
  if (ep.run_until(StopAt{t, j}) != RunStatus::Paused)
    throw Error(Errc::IndexBeyondRealizedTau,
                "step " + std::to_string(t) + " realized fewer than " + std::to_string(j) + " decisions");
  Rollout partial = ep.rollout();
  WorldState pending = ep.pending_state();
  return RolloutPrefix{std::move(partial), std::move(pending), t, j, std::move(ep)};
}

std::vector<Rollout> mc_finish(const RolloutPrefix& prefix, const WorldAction& forced,
                               std::shared_ptr<const WorldPolicy> policy, const std::vector<std::uint64_t>& seeds) {
  if (prefix.episode.environment().tag() != EnvTag::World)
    throw Error(Errc::ConfigError, "MC rollouts need a world environment");
  std::vector<Rollout> out;
  out.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    Episode e = prefix.episode;
    e.set_policy(policy);
    e.reseed(seed);
    e.resume(forced);
    e.run_to_end();
    out.push_back(e.rollout());
  }
  return out;
}

}  // namespace icsim
