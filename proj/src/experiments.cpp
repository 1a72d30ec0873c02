#include "icsim/experiments.hpp"

#include <fstream>

namespace icsim {

Environment real_environment(const ExperimentConfig& cfg) { return Environment::real(cfg.env, cfg.population); }

Environment world_environment(const ExperimentConfig& cfg, const WorldPolicy& policy) {
  return Environment::world(cfg.env, policy);
}

std::uint64_t rollout_seed(std::uint64_t master, ExperimentStream stream, int i) {
  return derive_seed(master, stream, static_cast<std::uint64_t>(i));
}

std::vector<Rollout> collect_rollouts(const Environment& env, const ExpPolicy& pi, int horizon, int count,
                                      std::uint64_t master, ExperimentStream stream) {
  std::vector<Rollout> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(run_rollout(env, pi, horizon, rollout_seed(master, stream, i)));
  return out;
}

WorldPolicy initial_world_policy(const ExperimentConfig& cfg) {
  if (!cfg.world_init.policy_file.empty()) {
    std::ifstream in(cfg.world_init.policy_file, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open policy file " + cfg.world_init.policy_file);
    WorldPolicy p = read_policy(in);
    if (!(p.shape() == cfg.env.policy_shape)) throw Error(Errc::ConfigError, "policy file shape differs from config");
    return p;
  }
  return WorldPolicy::random(cfg.env.policy_shape, cfg.world_init.seed, cfg.world_init.scale);
}

Propensity config_propensity(const ExperimentConfig& cfg) { return exact_propensity(cfg.env.exp.policy); }

SeparabilityResult run_separability(const ExperimentConfig& cfg, const WorldPolicy& world_policy,
                                    const FeedbackSpec& spec) {
  const auto& sep = cfg.separability;
  const int horizon = cfg.env.exp.horizon;
  const ExpPolicy& pi = cfg.env.exp.policy;
  const Propensity e = config_propensity(cfg);
  SeparabilityResult r;
  r.world = collect_feedback(
      collect_rollouts(world_environment(cfg, world_policy), pi, horizon, sep.pool_size, cfg.seed, kWorldRollouts),
      spec, e);
  const Environment real = real_environment(cfg);
  r.real_a = collect_feedback(collect_rollouts(real, pi, horizon, sep.pool_size, cfg.seed, kRealRollouts), spec, e);
  r.real_b = collect_feedback(collect_rollouts(real, pi, horizon, sep.pool_size, cfg.seed, kRealRolloutsB), spec, e);
  const std::uint64_t boot = derive_seed(cfg.seed, kBootstrap);
  r.world_vs_real = EnvelopeTable{
      "world_vs_real", bootstrap_envelope(r.world.values(), r.real_a.values(), sep.ns, sep.reps, cfg.distance,
                                          cfg.kernel, boot)};
  r.real_vs_real = EnvelopeTable{
      "real_vs_real", bootstrap_envelope(r.real_b.values(), r.real_a.values(), sep.ns, sep.reps, cfg.distance,
                                         cfg.kernel, boot)};
  return r;
}

std::vector<SnapshotRow> facts_rollout(Environment env, const ExpPolicy& pi, std::uint64_t seed) {
  env.config.record_snapshots = true;
  Episode ep(std::move(env), pi, seed);
  ep.run_to_end();
  return ep.snapshots();
}

TrainProblem real_train_problem(const ExperimentConfig& cfg) {
  const auto rs = collect_rollouts(real_environment(cfg), cfg.env.exp.policy, cfg.env.exp.horizon,
                                   cfg.train.real_count, cfg.seed, kRealRollouts);
  return TrainProblem{cfg.env, collect_feedback(rs, cfg.train.feedback, config_propensity(cfg)).values()};
}

SelfCalibration self_calibration(const ExperimentConfig& cfg) {
  SelfCalibration out{initial_world_policy(cfg), {}, {cfg.env, {}}};
  const auto rs = collect_rollouts(world_environment(cfg, out.reference), cfg.env.exp.policy, cfg.env.exp.horizon,
                                   cfg.train.real_count, cfg.seed, kRealRollouts);
  out.problem.real_feedbacks = collect_feedback(rs, cfg.train.feedback, config_propensity(cfg)).values();
  out.init = out.reference;
  out.init.head_bias(1)[0] += cfg.calibration.bid_bias;
  return out;
}

}  // namespace icsim
