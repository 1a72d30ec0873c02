#include "icsim/config.hpp"

#include <cmath>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace icsim {

using nlohmann::json;

namespace {

std::string to_string(ExpPolicyKind k) {
  switch (k) {
    case ExpPolicyKind::Aggressive: return "aggressive";
    case ExpPolicyKind::Uniform: return "uniform";
    case ExpPolicyKind::EpsilonMarket: return "epsilon_market";
    case ExpPolicyKind::SpreadContingent: return "spread_contingent";
    case ExpPolicyKind::Passive: return "passive";
  }
  return "?";
}

ExpPolicyKind exp_policy_kind_from_string(const std::string& s) {
  for (auto k : {ExpPolicyKind::Aggressive, ExpPolicyKind::Uniform, ExpPolicyKind::EpsilonMarket,
                 ExpPolicyKind::SpreadContingent, ExpPolicyKind::Passive})
    if (to_string(k) == s) return k;
  throw Error(Errc::ConfigError, "unknown exp policy: " + s);
}

}  // namespace

// nlohmann serializers, found by argument-dependent lookup.

void to_json(json& j, const MarketConfig& c) {
  j = json{{"tick_size", c.tick_size},
           {"start_best_bid", c.start_best_bid},
           {"start_best_ask", c.start_best_ask},
           {"initial_levels", c.initial_levels},
           {"initial_level_volume", c.initial_level_volume},
           {"imbalance_levels", c.imbalance_levels},
           {"export_levels", c.export_levels},
           {"depth_convention", c.depth_convention == DepthConvention::Corrected ? "corrected" : "literal"}};
}

void from_json(const json& j, MarketConfig& c) {
  j.at("tick_size").get_to(c.tick_size);
  j.at("start_best_bid").get_to(c.start_best_bid);
  j.at("start_best_ask").get_to(c.start_best_ask);
  j.at("initial_levels").get_to(c.initial_levels);
  j.at("initial_level_volume").get_to(c.initial_level_volume);
  j.at("imbalance_levels").get_to(c.imbalance_levels);
  j.at("export_levels").get_to(c.export_levels);
  const auto d = j.at("depth_convention").get<std::string>();
  if (d != "corrected" && d != "literal") throw Error(Errc::ConfigError, "depth_convention: corrected or literal");
  c.depth_convention = d == "corrected" ? DepthConvention::Corrected : DepthConvention::Literal;
}

void to_json(json& j, const ExpPolicy& p) {
  j = json{{"kind", to_string(p.kind)},
           {"epsilon", p.epsilon},
           {"spread_threshold", p.spread_threshold},
           {"p_market_wide", p.p_market_wide},
           {"p_market_narrow", p.p_market_narrow}};
}

void from_json(const json& j, ExpPolicy& p) {
  p.kind = exp_policy_kind_from_string(j.at("kind").get<std::string>());
  j.at("epsilon").get_to(p.epsilon);
  j.at("spread_threshold").get_to(p.spread_threshold);
  j.at("p_market_wide").get_to(p.p_market_wide);
  j.at("p_market_narrow").get_to(p.p_market_narrow);
}

void to_json(json& j, const ExpConfig& c) {
  j = json{{"horizon", c.horizon},       {"parent_order", c.parent_order}, {"penalty", c.penalty},
           {"order_size", c.order_size}, {"policy", c.policy},             {"stop_when_filled", c.stop_when_filled}};
}

void from_json(const json& j, ExpConfig& c) {
  j.at("horizon").get_to(c.horizon);
  j.at("parent_order").get_to(c.parent_order);
  j.at("penalty").get_to(c.penalty);
  j.at("order_size").get_to(c.order_size);
  j.at("policy").get_to(c.policy);
  j.at("stop_when_filled").get_to(c.stop_when_filled);
}

void to_json(json& j, const BgPopulationConfig& c) {
  j = json{{"noise", c.noise},
           {"value", c.value},
           {"momentum", c.momentum},
           {"market_maker", c.market_maker},
           {"noise_params",
            {{"price_range", c.noise_params.price_range},
             {"sizes", c.noise_params.sizes},
             {"cancel_prob", c.noise_params.cancel_prob}}},
           {"value_params",
            {{"kappa", c.value_params.kappa},
             {"sigma", c.value_params.sigma},
             {"initial_spread", c.value_params.initial_spread},
             {"threshold", c.value_params.threshold},
             {"size", c.value_params.size}}},
           {"momentum_params",
            {{"short_window", c.momentum_params.short_window},
             {"long_window", c.momentum_params.long_window},
             {"size", c.momentum_params.size}}},
           {"market_maker_params",
            {{"half_spread", c.market_maker_params.half_spread}, {"size", c.market_maker_params.size}}},
           {"extra_wakeup_rate", c.extra_wakeup_rate},
           {"seed", c.seed}};
}

void from_json(const json& j, BgPopulationConfig& c) {
  j.at("noise").get_to(c.noise);
  j.at("value").get_to(c.value);
  j.at("momentum").get_to(c.momentum);
  j.at("market_maker").get_to(c.market_maker);
  const auto& np = j.at("noise_params");
  np.at("price_range").get_to(c.noise_params.price_range);
  np.at("sizes").get_to(c.noise_params.sizes);
  np.at("cancel_prob").get_to(c.noise_params.cancel_prob);
  const auto& vp = j.at("value_params");
  vp.at("kappa").get_to(c.value_params.kappa);
  vp.at("sigma").get_to(c.value_params.sigma);
  vp.at("initial_spread").get_to(c.value_params.initial_spread);
  vp.at("threshold").get_to(c.value_params.threshold);
  vp.at("size").get_to(c.value_params.size);
  const auto& mp = j.at("momentum_params");
  mp.at("short_window").get_to(c.momentum_params.short_window);
  mp.at("long_window").get_to(c.momentum_params.long_window);
  mp.at("size").get_to(c.momentum_params.size);
  const auto& mm = j.at("market_maker_params");
  mm.at("half_spread").get_to(c.market_maker_params.half_spread);
  mm.at("size").get_to(c.market_maker_params.size);
  j.at("extra_wakeup_rate").get_to(c.extra_wakeup_rate);
  j.at("seed").get_to(c.seed);
}

void to_json(json& j, const WorldPolicyShape& s) {
  j = json{{"state_dim", s.state_dim},
           {"hidden", s.hidden},
           {"price_half_range", s.price_half_range},
           {"size_buckets", s.size_buckets},
           {"cancel_slots", s.cancel_slots}};
}

void from_json(const json& j, WorldPolicyShape& s) {
  j.at("state_dim").get_to(s.state_dim);
  j.at("hidden").get_to(s.hidden);
  j.at("price_half_range").get_to(s.price_half_range);
  j.at("size_buckets").get_to(s.size_buckets);
  j.at("cancel_slots").get_to(s.cancel_slots);
}

void to_json(json& j, const EnvConfig& c) {
  j = json{{"market", c.market},
           {"exp", c.exp},
           {"world_wakeups_per_step", c.world_wakeups_per_step},
           {"world_floor", c.world_floor},
           {"policy_shape", c.policy_shape},
           {"size_grid", c.size_grid},
           {"state_book_levels", c.state_book_levels},
           {"record_states", c.record_states},
           {"record_snapshots", c.record_snapshots}};
}

void from_json(const json& j, EnvConfig& c) {
  j.at("market").get_to(c.market);
  j.at("exp").get_to(c.exp);
  j.at("world_wakeups_per_step").get_to(c.world_wakeups_per_step);
  j.at("world_floor").get_to(c.world_floor);
  j.at("policy_shape").get_to(c.policy_shape);
  j.at("size_grid").get_to(c.size_grid);
  j.at("state_book_levels").get_to(c.state_book_levels);
  j.at("record_states").get_to(c.record_states);
  j.at("record_snapshots").get_to(c.record_snapshots);
}

void to_json(json& j, const FeedbackSpec& f) {
  j = json{{"kind", to_string(f.kind)},
           {"imbalance_level", f.imbalance_level},
           {"estimator", to_string(f.estimator)},
           {"ps_threshold", f.ps_threshold},
           {"ipw_form", to_string(f.ipw_form)}};
}

void from_json(const json& j, FeedbackSpec& f) {
  f.kind = feedback_kind_from_string(j.at("kind").get<std::string>());
  j.at("imbalance_level").get_to(f.imbalance_level);
  f.estimator = estimator_from_string(j.at("estimator").get<std::string>());
  j.at("ps_threshold").get_to(f.ps_threshold);
  f.ipw_form = ipw_form_from_string(j.at("ipw_form").get<std::string>());
}

void to_json(json& j, const KernelSpec& k) {
  j = json{{"kind", to_string(k.kind)}, {"bandwidth", k.bandwidth ? json(*k.bandwidth) : json("median")}};
}

void from_json(const json& j, KernelSpec& k) {
  k.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  const auto& b = j.at("bandwidth");
  if (b.is_string()) {
    if (b.get<std::string>() != "median") throw Error(Errc::ConfigError, "bandwidth: a number or \"median\"");
    k.bandwidth.reset();
  } else {
    k.bandwidth = b.get<double>();
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"N", c.mc_rollouts},
           {"N_real", c.real_count},
           {"b", c.actions_per_step},
           {"T0", c.truncation},
           {"learning_rate", c.learning_rate},
           {"halve_every", c.halve_every},
           {"iterations", c.iterations},
           {"eval_rollouts", c.eval_rollouts},
           {"feedback", c.feedback},
           {"distance", to_string(c.distance)},
           {"kernel", c.kernel},
           {"fixed_bandwidth", c.fixed_bandwidth},
           {"baseline", c.baseline},
           {"common_random_numbers", c.common_random_numbers},
           {"checkpoint_every", c.checkpoint_every},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("N").get_to(c.mc_rollouts);
  j.at("N_real").get_to(c.real_count);
  j.at("b").get_to(c.actions_per_step);
  j.at("T0").get_to(c.truncation);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("halve_every").get_to(c.halve_every);
  j.at("iterations").get_to(c.iterations);
  j.at("eval_rollouts").get_to(c.eval_rollouts);
  j.at("feedback").get_to(c.feedback);
  c.distance = distance_kind_from_string(j.at("distance").get<std::string>());
  j.at("kernel").get_to(c.kernel);
  j.at("fixed_bandwidth").get_to(c.fixed_bandwidth);
  j.at("baseline").get_to(c.baseline);
  j.at("common_random_numbers").get_to(c.common_random_numbers);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("seed").get_to(c.seed);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"env", c.env},
           {"population", c.population},
           {"feedback", c.feedback},
           {"distance", to_string(c.distance)},
           {"kernel", c.kernel},
           {"train", c.train},
           {"world_init",
            {{"policy_file", c.world_init.policy_file}, {"scale", c.world_init.scale}, {"seed", c.world_init.seed}}},
           {"separability",
            {{"pool_size", c.separability.pool_size}, {"ns", c.separability.ns}, {"reps", c.separability.reps}}},
           {"calibration", {{"bid_bias", c.calibration.bid_bias}}},
           {"output_dir", c.output_dir},
           {"seed", c.seed}};
}

void from_json(const json& j, ExperimentConfig& c) {
  j.at("env").get_to(c.env);
  j.at("population").get_to(c.population);
  j.at("feedback").get_to(c.feedback);
  c.distance = distance_kind_from_string(j.at("distance").get<std::string>());
  j.at("kernel").get_to(c.kernel);
  j.at("train").get_to(c.train);
  const auto& w = j.at("world_init");
  w.at("policy_file").get_to(c.world_init.policy_file);
  w.at("scale").get_to(c.world_init.scale);
  w.at("seed").get_to(c.world_init.seed);
  const auto& s = j.at("separability");
  s.at("pool_size").get_to(c.separability.pool_size);
  s.at("ns").get_to(c.separability.ns);
  s.at("reps").get_to(c.separability.reps);
  j.at("calibration").at("bid_bias").get_to(c.calibration.bid_bias);
  j.at("output_dir").get_to(c.output_dir);
  j.at("seed").get_to(c.seed);
}

namespace {

// Overlays `patch` on `base`, rejecting keys the defaults do not have.
void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw Error(Errc::ConfigError, "expected an object at '" + path + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object())
      merge_strict(slot, it.value(), key);
    else
      slot = it.value();
  }
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
}

template <class T>
T decode(const json& j) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad config value: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ParseError) throw Error(Errc::ConfigError, e.what());
    throw;
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  feedback.validate();
  train.validate(env.exp.horizon);
  if (population.total() < 1) throw Error(Errc::ConfigError, "real market needs at least one background agent");
  if (separability.reps < 1 || separability.pool_size < 2)
    throw Error(Errc::ConfigError, "separability needs reps >= 1 and pool_size >= 2");
  for (int n : separability.ns)
    if (n < 2 || n > separability.pool_size)
      throw Error(Errc::ConfigError, "separability N values must lie in [2, pool_size]");
  if (!std::isfinite(calibration.bid_bias)) throw Error(Errc::ConfigError, "calibration bid_bias must be finite");
  if (kernel.bandwidth && !(*kernel.bandwidth > 0.0)) throw Error(Errc::ConfigError, "bandwidth must be positive");
}

ExperimentConfig config_from_json(const std::string& text) {
  json merged = ExperimentConfig{};
  merge_strict(merged, parse_json(text), "");
  auto cfg = decode<ExperimentConfig>(merged);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) { return json(cfg).dump(2) + "\n"; }

std::string apply_override(const std::string& json_text, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::ConfigError, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  json doc = json_text.empty() ? json::object() : parse_json(json_text);
  json full = ExperimentConfig{};
  merge_strict(full, doc, "");
  merge_strict(full, patch, "");
  return full.dump(2);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text = "{}";
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigError, "cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const auto& o : overrides) text = apply_override(text, o);
  return config_from_json(text);
}

std::string train_config_to_json(const TrainConfig& cfg) { return json(cfg).dump(2) + "\n"; }

TrainConfig train_config_from_json(const std::string& text) {
  json merged = TrainConfig{};
  merge_strict(merged, parse_json(text), "");
  return decode<TrainConfig>(merged);
}

}  // namespace icsim
