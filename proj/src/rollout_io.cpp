#include "icsim/rollout_io.hpp"

#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

namespace icsim {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json facts_json(const StylizedFacts& f) {
  return json{{"mid", opt(f.mid)},
              {"spread", opt(f.spread)},
              {"log_return", opt(f.log_return)},
              {"price_impact", opt(f.price_impact)},
              {"depth", opt(f.depth)},
              {"levels", f.levels},
              {"imbalance", f.imbalance},
              {"volume", f.volume},
              {"volume_bid", f.volume_bid},
              {"volume_ask", f.volume_ask},
              {"direction", f.direction}};
}

StylizedFacts facts_from(const json& j) {
  StylizedFacts f;
  f.mid = opt_from(j.at("mid"));
  f.spread = opt_from(j.at("spread"));
  f.log_return = opt_from(j.at("log_return"));
  f.price_impact = opt_from(j.at("price_impact"));
  f.depth = opt_from(j.at("depth"));
  j.at("levels").get_to(f.levels);
  j.at("imbalance").get_to(f.imbalance);
  j.at("volume").get_to(f.volume);
  j.at("volume_bid").get_to(f.volume_bid);
  j.at("volume_ask").get_to(f.volume_ask);
  j.at("direction").get_to(f.direction);
  return f;
}

json state_json(const ExpAgentState& s) {
  return json{{"elapsed", s.elapsed_frac},
              {"remaining", s.remaining_frac},
              {"pace_gap", s.pace_gap},
              {"imbalance5", s.market.imbalance5},
              {"imbalance_all", s.market.imbalance_all},
              {"spread", s.market.spread},
              {"price_impact", s.market.price_impact},
              {"direction", s.market.direction}};
}

ExpAgentState state_from(const json& j) {
  ExpAgentState s;
  j.at("elapsed").get_to(s.elapsed_frac);
  j.at("remaining").get_to(s.remaining_frac);
  j.at("pace_gap").get_to(s.pace_gap);
  j.at("imbalance5").get_to(s.market.imbalance5);
  j.at("imbalance_all").get_to(s.market.imbalance_all);
  j.at("spread").get_to(s.market.spread);
  j.at("price_impact").get_to(s.market.price_impact);
  j.at("direction").get_to(s.market.direction);
  return s;
}

}  // namespace

void write_rollout_jsonl(std::ostream& os, const Rollout& r) {
  for (const auto& step : r.steps) {
    json bg = json::array();
    for (const auto& b : step.bg) {
      const auto& a = b.action;
      bg.push_back(json{{"agent", b.agent},
                        {"n_resting", b.state.n_resting},
                        {"S", b.state.features},
                        {"A", {static_cast<int>(a.kind), a.side, a.price_offset, a.size_bucket, a.cancel_slot}}});
    }
    json line{{"seed", r.seed},
              {"env", to_string(r.env)},
              {"horizon", r.horizon},
              {"complete", r.complete},
              {"t", step.t},
              {"s_prev", state_json(step.s_prev)},
              {"a", static_cast<int>(step.a)},
              {"reward", step.reward},
              {"executed", step.executed},
              {"bg", std::move(bg)},
              {"facts", facts_json(step.facts_after)}};
    os << line.dump() << '\n';
  }
  if (!os) throw Error(Errc::IoError, "failed to write rollout log");
}

std::vector<Rollout> read_rollouts_jsonl(std::istream& is) {
  std::vector<Rollout> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Rollout meta;
      j.at("seed").get_to(meta.seed);
      meta.env = env_tag_from_string(j.at("env").get<std::string>());
      j.at("horizon").get_to(meta.horizon);
      j.at("complete").get_to(meta.complete);

      ExpStep step;
      j.at("t").get_to(step.t);
      step.s_prev = state_from(j.at("s_prev"));
      const int a = j.at("a").get<int>();
      if (a < 0 || a > 2) throw Error(Errc::ParseError, "exp action code out of range");
      step.a = static_cast<ExpAction>(a);
      j.at("reward").get_to(step.reward);
      j.at("executed").get_to(step.executed);
      for (const auto& b : j.at("bg")) {
        BgInteraction x;
        b.at("agent").get_to(x.agent);
        b.at("n_resting").get_to(x.state.n_resting);
        b.at("S").get_to(x.state.features);
        const auto code = b.at("A").get<std::vector<int>>();
        if (code.size() != 5 || code[0] < 0 || code[0] > 3) throw Error(Errc::ParseError, "bad world action");
        x.action = WorldAction{static_cast<WorldKind>(code[0]), code[1], code[2], code[3], code[4]};
        step.bg.push_back(std::move(x));
      }
      step.facts_after = facts_from(j.at("facts"));

      const bool continues = !out.empty() && out.back().seed == meta.seed && out.back().env == meta.env &&
                             out.back().horizon == meta.horizon && out.back().complete == meta.complete &&
                             !out.back().steps.empty() && out.back().steps.back().t < step.t;
      if (!continues) out.push_back(meta);
      out.back().steps.push_back(std::move(step));
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, "rollout log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_snapshot_csv(std::ostream& os, std::span<const SnapshotRow> rows, std::uint64_t seed, int export_levels) {
  os << csv_metadata_line(seed) << '\n';
  os << "event_clock,t,mid,spread,log_return,price_impact,depth,direction,cum_buy,cum_sell";
  const std::vector<int> levels = rows.empty() ? std::vector<int>{} : rows.front().facts.levels;
  for (int n : levels) {
    const std::string tag = n == 0 ? "all" : std::to_string(n);
    os << ",imbalance_" << tag << ",volume_" << tag << ",volume_bid_" << tag << ",volume_ask_" << tag;
  }
  for (int i = 1; i <= export_levels; ++i)
    os << ",bid_price_" << i << ",bid_volume_" << i << ",ask_price_" << i << ",ask_volume_" << i;
  os << '\n';
  auto opt_field = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    const auto& f = r.facts;
    os << r.event_clock << ',' << r.t << ',' << opt_field(f.mid) << ',' << opt_field(f.spread) << ','
       << opt_field(f.log_return) << ',' << opt_field(f.price_impact) << ',' << opt_field(f.depth) << ','
       << f.direction << ',' << r.cum_buy << ',' << r.cum_sell;
    for (std::size_t k = 0; k < levels.size(); ++k)
      os << ',' << format_double(f.imbalance[k]) << ',' << f.volume[k] << ',' << f.volume_bid[k] << ','
         << f.volume_ask[k];
    for (int i = 0; i < export_levels; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (idx < r.bids.size())
        os << ',' << r.bids[idx].price << ',' << r.bids[idx].volume;
      else
        os << ",,";
      if (idx < r.asks.size())
        os << ',' << r.asks[idx].price << ',' << r.asks[idx].volume;
      else
        os << ",,";
    }
    os << '\n';
  }
  if (!os) throw Error(Errc::IoError, "failed to write snapshot CSV");
}

}  // namespace icsim
