#include "icsim/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "icsim/config.hpp"

namespace icsim {

namespace {

// Independent random streams of one training run.
enum Stream : std::uint64_t { kMainRollout = 1, kBranch = 2, kMonteCarlo = 3, kEvaluation = 4 };

Propensity propensity_for(const FeedbackSpec& spec, const ExpPolicy& pi) {
  return spec.estimator == Estimator::Ipw ? exact_propensity(pi) : Propensity{};
}

}  // namespace

double TrainConfig::rate_at(int i) const { return learning_rate * std::ldexp(1.0, -(i / halve_every)); }

void TrainConfig::validate(int horizon) const {
  if (truncation < 1 || truncation > horizon) throw Error(Errc::ConfigError, "T0 must lie in [1, T]");
  if (mc_rollouts < 2) throw Error(Errc::ConfigError, "N must be at least 2");
  if (real_count < 2) throw Error(Errc::ConfigError, "N' must be at least 2");
  if (actions_per_step < 1) throw Error(Errc::ConfigError, "b must be at least 1");
  if (!(learning_rate >= 0.0)) throw Error(Errc::ConfigError, "learning rate must be non-negative");
  if (halve_every < 1) throw Error(Errc::ConfigError, "halve_every must be at least 1");
  if (iterations < 0) throw Error(Errc::ConfigError, "iterations must be non-negative");
  if (eval_rollouts < 2) throw Error(Errc::ConfigError, "evaluation needs at least 2 rollouts");
  if (checkpoint_every < 1) throw Error(Errc::ConfigError, "checkpoint_every must be at least 1");
  feedback.validate();
}

KernelSpec training_kernel(const TrainConfig& cfg, const Eigen::VectorXd& real) {
  KernelSpec k = cfg.kernel;
  if (k.kind == KernelKind::Gaussian && !k.bandwidth && cfg.fixed_bandwidth) {
    const double m = median_pairwise_distance(real);
    k.bandwidth = m > kBandwidthFloor ? m : kBandwidthFloor;
  }
  return k;
}

double q_value(const RolloutPrefix& prefix, const WorldAction& a, std::shared_ptr<const WorldPolicy> policy,
               const Eigen::VectorXd& real, const TrainConfig& cfg, const KernelSpec& kernel,
               const std::vector<std::uint64_t>& seeds) {
  const auto rollouts = mc_finish(prefix, a, std::move(policy), seeds);
  const ExpPolicy& pi = prefix.episode.environment().config.exp.policy;
  const FeedbackSet fb = collect_feedback(rollouts, cfg.feedback, propensity_for(cfg.feedback, pi));
  if (fb.samples.size() < 2)
    throw Error(Errc::AllFeedbackDropped, std::to_string(fb.dropped) + " of " + std::to_string(rollouts.size()) +
                                              " MC rollouts had no feedback");
  return distance(fb.values(), real, cfg.distance, kernel);
}

double evaluate(const WorldPolicy& policy, const TrainProblem& problem, const TrainConfig& cfg, int rollouts) {
  const Environment env = Environment::world(problem.env, policy);
  std::vector<Rollout> rs;
  rs.reserve(static_cast<std::size_t>(rollouts));
  for (int j = 0; j < rollouts; ++j)
    rs.push_back(run_rollout(env, problem.env.exp.policy, problem.env.exp.horizon,
                             derive_seed(cfg.seed, kEvaluation, static_cast<std::uint64_t>(j))));
  const FeedbackSet fb = collect_feedback(rs, cfg.feedback, propensity_for(cfg.feedback, problem.env.exp.policy));
  if (fb.samples.size() < 2) return std::nan("");
  return distance(fb.values(), problem.real_feedbacks, cfg.distance, training_kernel(cfg, problem.real_feedbacks));
}

Eigen::VectorXd sibling_gradient(const WorldPolicy& policy, const WorldState& s, const std::vector<WorldAction>& actions,
                                 const std::vector<std::optional<double>>& q, bool baseline) {
  double base = 0.0;
  if (baseline) {
    int n = 0;
    for (const auto& v : q)
      if (v) {
        base += *v;
        ++n;
      }
    base = n > 0 ? base / n : 0.0;
  }
  const auto b = static_cast<double>(actions.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(policy.theta().size());
  for (std::size_t k = 0; k < actions.size(); ++k) {
    if (!q[k]) continue;
    const Eigen::VectorXd term = (*q[k] - base) * policy.log_prob_gradient(s, actions[k]) / b;
    if (!term.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite gradient at k=" << k << ", Q=" << *q[k];
      throw Error(Errc::NaNGradient, msg.str());
    }
    g += term;
  }
  return g;
}

GradStep grad_step(const WorldPolicy& policy, const TrainProblem& problem, const TrainConfig& cfg, int i) {
  const auto iter = static_cast<std::uint64_t>(i);
  auto shared = std::make_shared<const WorldPolicy>(policy);
  const Environment env{problem.env, WorldEnv{shared}};
  const KernelSpec kernel = training_kernel(cfg, problem.real_feedbacks);
  Episode main(env, problem.env.exp.policy, derive_seed(cfg.seed, kMainRollout, iter));
  Rng branch(derive_seed(cfg.seed, kBranch, iter));
  const std::uint64_t mc_root = derive_seed(cfg.seed, kMonteCarlo, iter);

  GradStep out{policy, Eigen::VectorXd::Zero(policy.theta().size()), 0};
  for (int t = 1; t <= cfg.truncation; ++t) {
    if (main.run_until(StopAt{t, StopAt::kLastDecision}) != RunStatus::Paused) continue;
    const WorldState s = main.pending_state();
    const RolloutPrefix prefix{main.rollout(), s, t, main.pending_index(), main};

    std::vector<WorldAction> actions;
    for (int k = 0; k < cfg.actions_per_step; ++k) actions.push_back(policy.sample(s, branch));
    std::vector<std::optional<double>> q(actions.size());
    for (int k = 0; k < cfg.actions_per_step; ++k) {
      std::vector<std::uint64_t> seeds;
      const std::uint64_t sibling = cfg.common_random_numbers ? 0 : static_cast<std::uint64_t>(k) + 1;
      for (int n = 0; n < cfg.mc_rollouts; ++n)
        seeds.push_back(derive_seed(mc_root, static_cast<std::uint64_t>(t) * 1000 + sibling, static_cast<std::uint64_t>(n)));
      try {
        q[static_cast<std::size_t>(k)] = q_value(prefix, actions[static_cast<std::size_t>(k)], shared,
                                                 problem.real_feedbacks, cfg, kernel, seeds);
      } catch (const Error& e) {
        if (e.code() != Errc::AllFeedbackDropped) throw;
        ++out.dropped_terms;
      }
    }
    try {
      out.gradient += sibling_gradient(policy, s, actions, q, cfg.baseline);
    } catch (const Error& e) {
      if (e.code() != Errc::NaNGradient) throw;
      throw Error(Errc::NaNGradient, "iteration " + std::to_string(i) + ", t=" + std::to_string(t) + ": " + e.what());
    }
    main.resume();
  }
  out.policy.theta() -= cfg.rate_at(i) * out.gradient;
  return out;
}

// ---------------------------------------------------------------------------

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace, std::uint64_t seed, bool with_seconds) {
  os << csv_metadata_line(seed) << '\n' << "iteration,d_f,grad_norm,r,dropped_terms" << (with_seconds ? ",seconds" : "")
     << '\n';
  for (const auto& r : trace) {
    os << r.iteration << ',' << format_double(r.d_f) << ',' << format_double(r.grad_norm) << ','
       << format_double(r.rate) << ',' << r.dropped_terms;
    if (with_seconds) os << ',' << format_double(r.seconds);
    os << '\n';
  }
  if (!os) throw Error(Errc::IoError, "failed to write trace CSV");
}

std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::ParseError, "empty trace CSV");
  parse_csv_metadata_line(line);
  if (!std::getline(is, line)) throw Error(Errc::ParseError, "trace CSV without header");
  const auto header = split_csv(line);
  const bool with_seconds = header.size() == 6;
  std::vector<TraceRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw Error(Errc::ParseError, "bad trace row: " + line);
    try {
      TraceRow r;
      r.iteration = std::stoi(f[0]);
      r.d_f = std::stod(f[1]);
      r.grad_norm = std::stod(f[2]);
      r.rate = std::stod(f[3]);
      r.dropped_terms = std::stoi(f[4]);
      if (with_seconds) r.seconds = std::stod(f[5]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "bad trace row: " + line);
    }
  }
  return out;
}

namespace {

namespace fs = std::filesystem;

std::string policy_file(const fs::path& dir, int iteration) {
  return (dir / ("policy_" + std::to_string(iteration) + ".bin")).string();
}

void save_checkpoint(const fs::path& dir, const TrainConfig& cfg, const WorldPolicy& policy, int iteration,
                     double initial_d_f, const std::vector<TraceRow>& trace, bool record_wall_time) {
  fs::create_directories(dir);
  {
    std::ofstream os(policy_file(dir, iteration), std::ios::binary);
    write_policy(os, policy, cfg.seed);
  }
  {
    std::ofstream os(dir / "train_config.json");
    os << train_config_to_json(cfg);
  }
  {
    std::ofstream os(dir / "trace.csv");
    write_trace_csv(os, trace, cfg.seed, false);
  }
  if (record_wall_time) {
    std::ofstream os(dir / "trace_timing.csv");
    write_trace_csv(os, trace, cfg.seed, true);
  }
  // Written last: a checkpoint exists once its state file does.
  const nlohmann::json state{{"iteration", iteration}, {"initial_d_f", initial_d_f}};
  std::ofstream os(dir / "state.json");
  os << state.dump() << '\n';
  if (!os) throw Error(Errc::IoError, "failed to write checkpoint in " + dir.string());
}

struct Resumed {
  int iteration = 0;
  double initial_d_f = 0.0;
  WorldPolicy policy;
  std::vector<TraceRow> trace;
};

std::optional<Resumed> load_checkpoint(const fs::path& dir, const TrainConfig& cfg) {
  if (!fs::exists(dir / "state.json")) return std::nullopt;
  std::ifstream cfg_in(dir / "train_config.json");
  std::stringstream ss;
  ss << cfg_in.rdbuf();
  TrainConfig saved = train_config_from_json(ss.str());
  saved.iterations = cfg.iterations;  // extending a finished run is allowed
  if (!(saved == cfg))
    throw Error(Errc::ConfigError, "checkpoint in " + dir.string() + " was written with a different training config");
  std::ifstream state_in(dir / "state.json");
  nlohmann::json state;
  try {
    state = nlohmann::json::parse(state_in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("bad checkpoint state: ") + e.what());
  }
  Resumed r;
  r.iteration = state.at("iteration").get<int>();
  r.initial_d_f = state.at("initial_d_f").get<double>();
  std::ifstream pin(policy_file(dir, r.iteration), std::ios::binary);
  if (!pin) throw Error(Errc::IoError, "missing checkpoint policy for iteration " + std::to_string(r.iteration));
  r.policy = read_policy(pin);
  std::ifstream tin(dir / "trace.csv");
  r.trace = read_trace_csv(tin);
  if (static_cast<int>(r.trace.size()) != r.iteration) throw Error(Errc::ParseError, "checkpoint trace length mismatch");
  if (fs::exists(dir / "trace_timing.csv")) {
    std::ifstream timing(dir / "trace_timing.csv");
    const auto timed = read_trace_csv(timing);
    for (std::size_t k = 0; k < timed.size() && k < r.trace.size(); ++k) r.trace[k].seconds = timed[k].seconds;
  }
  return r;
}

}  // namespace

TrainResult train(const WorldPolicy& init, const TrainProblem& problem, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate(problem.env.exp.horizon);
  problem.env.validate();
  if (problem.real_feedbacks.size() < 2) throw Error(Errc::TooFewSamples, "need at least two real feedbacks");
  if (!(init.shape() == problem.env.policy_shape)) throw Error(Errc::ConfigError, "initial policy shape mismatch");

  TrainResult result{init, 0.0, {}};
  int start = 0;
  const fs::path dir = hooks.checkpoint_dir;
  std::optional<Resumed> resumed;
  if (!dir.empty()) resumed = load_checkpoint(dir, cfg);
  if (resumed) {
    start = resumed->iteration;
    result.policy = std::move(resumed->policy);
    result.initial_d_f = resumed->initial_d_f;
    result.trace = std::move(resumed->trace);
  } else {
    result.initial_d_f = evaluate(init, problem, cfg, cfg.eval_rollouts);
    if (!dir.empty()) save_checkpoint(dir, cfg, init, 0, result.initial_d_f, {}, hooks.record_wall_time);
    if (hooks.on_checkpoint) hooks.on_checkpoint(0, init);
  }

  for (int i = start; i < cfg.iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    GradStep step = grad_step(result.policy, problem, cfg, i);
    result.policy = std::move(step.policy);
    TraceRow row;
    row.iteration = i + 1;
    row.grad_norm = step.gradient.norm();
    row.rate = cfg.rate_at(i);
    row.dropped_terms = step.dropped_terms;
    row.d_f = evaluate(result.policy, problem, cfg, cfg.eval_rollouts);
    if (hooks.record_wall_time)
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(row);
    if ((i + 1) % cfg.checkpoint_every == 0 || i + 1 == cfg.iterations) {
      if (!dir.empty())
        save_checkpoint(dir, cfg, result.policy, i + 1, result.initial_d_f, result.trace, hooks.record_wall_time);
      if (hooks.on_checkpoint) hooks.on_checkpoint(i + 1, result.policy);
    }
  }
  return result;
}

GridResult grid_search(const WorldPolicy& init, const TrainProblem& problem, const TrainConfig& cfg,
                       const std::vector<int>& truncations, const std::vector<int>& actions_per_step,
                       const std::function<void(const GridCell&, const TrainResult&)>& on_cell) {
  if (truncations.empty() || actions_per_step.empty()) throw Error(Errc::ConfigError, "empty grid");
  GridResult out;
  for (int t0 : truncations)
    for (int b : actions_per_step) {
      TrainConfig c = cfg;
      c.truncation = t0;
      c.actions_per_step = b;
      const TrainResult r = train(init, problem, c);
      GridCell cell{t0, b, r.trace.empty() ? r.initial_d_f : r.trace.back().d_f};
      if (on_cell) on_cell(cell, r);
      // NaN never wins; ties keep the earlier cell.
      if (out.cells.empty() || cell.final_d_f < out.best.final_d_f || std::isnan(out.best.final_d_f)) out.best = cell;
      out.cells.push_back(cell);
    }
  return out;
}

}  // namespace icsim
