// Command-line front end: rollouts, feedback, separability, train, facts-export.
//
// Exit codes: 0 ok, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "icsim/experiments.hpp"
#include "icsim/rollout_io.hpp"

namespace fs = std::filesystem;
using namespace icsim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  return in;
}

WorldPolicy load_policy(const std::string& file, const ExperimentConfig& cfg) {
  if (file.empty()) return initial_world_policy(cfg);
  auto in = open_in(file);
  WorldPolicy p = read_policy(in);
  if (!(p.shape() == cfg.env.policy_shape)) throw Error(Errc::ConfigError, "policy shape differs from config");
  return p;
}

Environment pick_env(const std::string& which, const std::string& policy_file, const ExperimentConfig& cfg) {
  if (which == "real") return real_environment(cfg);
  if (which == "world") return world_environment(cfg, load_policy(policy_file, cfg));
  throw Error(Errc::ConfigError, "--env must be real or world");
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
};

// ---------------------------------------------------------------------------

struct RolloutsCmd {
  std::string env = "real";
  std::string policy;
  int count = 100;
  std::string out = "rollouts";

  void run(const ExperimentConfig& cfg) const {
    if (count < 0) throw Error(Errc::ConfigError, "--count must be non-negative");
    const Environment e = pick_env(env, policy, cfg);
    const auto stream = e.tag() == EnvTag::Real ? kRealRollouts : kWorldRollouts;
    const fs::path dir = out;
    fs::create_directories(dir);
    auto log = open_out(dir / "rollouts.jsonl");
    auto manifest = open_out(dir / "manifest.csv");
    manifest << csv_metadata_line(cfg.seed) << "\nindex,seed,env,steps,complete\n";
    int treated = 0;
    for (int i = 0; i < count; ++i) {
      const Rollout r = run_rollout(e, cfg.env.exp.policy, cfg.env.exp.horizon, rollout_seed(cfg.seed, stream, i));
      write_rollout_jsonl(log, r);
      manifest << i << ',' << r.seed << ',' << to_string(r.env) << ',' << r.steps.size() << ','
               << (r.complete ? 1 : 0) << '\n';
      for (const auto& s : r.steps) treated += s.a == ExpAction::Market;
    }
    if (!log || !manifest) throw Error(Errc::IoError, "failed writing rollouts");
    std::cout << "wrote " << count << " " << env << " rollouts to " << dir.string() << " (" << treated
              << " market orders)\n";
  }
};

struct FeedbackCmd {
  std::string in;
  std::string out = "feedback.csv";

  void run(const ExperimentConfig& cfg) const {
    auto is = open_in(in);
    const auto rollouts = read_rollouts_jsonl(is);
    const FeedbackSet set = collect_feedback(rollouts, cfg.feedback, config_propensity(cfg));
    auto os = open_out(out);
    write_feedback_csv(os, set, cfg.feedback, cfg.seed);
    std::cout << "feedback " << to_string(cfg.feedback.kind) << ": " << set.samples.size() << " kept, "
              << set.dropped << " dropped\n";
  }
};

struct SeparabilityCmd {
  std::string policy;
  std::vector<std::string> kinds;
  std::string out = "envelope.csv";

  void run(const ExperimentConfig& cfg) const {
    const WorldPolicy wp = load_policy(policy, cfg);
    std::vector<FeedbackKind> ks;
    for (const auto& k : kinds) ks.push_back(feedback_kind_from_string(k));
    if (ks.empty()) ks.push_back(cfg.feedback.kind);
    std::vector<EnvelopeTable> tables;
    std::vector<FeedbackKind> labels;
    for (FeedbackKind k : ks) {
      FeedbackSpec spec = cfg.feedback;
      spec.kind = k;
      SeparabilityResult r = run_separability(cfg, wp, spec);
      tables.push_back(std::move(r.world_vs_real));
      tables.push_back(std::move(r.real_vs_real));
      labels.push_back(k);
      labels.push_back(k);
    }
    auto os = open_out(out);
    os << csv_metadata_line(cfg.seed) << "\nd_hat,feedback_kind,N,mean,q5,q95,comparison\n";
    for (std::size_t i = 0; i < tables.size(); ++i)
      for (const auto& row : tables[i].rows)
        os << to_string(cfg.distance) << ',' << to_string(labels[i]) << ',' << row.n << ',' << format_double(row.mean)
           << ',' << format_double(row.q5) << ',' << format_double(row.q95) << ',' << tables[i].comparison << '\n';
    if (!os) throw Error(Errc::IoError, "failed writing " + out);
    std::cout << "wrote " << tables.size() << " envelope tables to " << out << '\n';
  }
};

void write_facts(const fs::path& path, const Environment& env, const ExperimentConfig& cfg, int index) {
  const auto rows = facts_rollout(env, cfg.env.exp.policy, rollout_seed(cfg.seed, kFactsExport, index));
  auto os = open_out(path);
  write_snapshot_csv(os, rows, cfg.seed, cfg.env.market.export_levels);
}

struct TrainCmd {
  std::string out = "train";
  std::string real_feedback;
  bool self_calibration = false;
  bool no_timing = false;

  void run(const ExperimentConfig& cfg) const {
    WorldPolicy init;
    TrainProblem problem;
    if (self_calibration) {
      SelfCalibration sc = icsim::self_calibration(cfg);
      init = std::move(sc.init);
      problem = std::move(sc.problem);
    } else {
      init = initial_world_policy(cfg);
      if (real_feedback.empty()) {
        problem = real_train_problem(cfg);
      } else {
        auto is = open_in(real_feedback);
        const FeedbackCsv csv = read_feedback_csv(is);
        problem.env = cfg.env;
        problem.real_feedbacks.resize(static_cast<Eigen::Index>(csv.samples.size()));
        for (std::size_t i = 0; i < csv.samples.size(); ++i)
          problem.real_feedbacks[static_cast<Eigen::Index>(i)] = csv.samples[i].value;
      }
    }
    TrainConfig tc = cfg.train;
    const fs::path dir = out;
    fs::create_directories(dir / "facts");
    TrainHooks hooks;
    hooks.checkpoint_dir = (dir / "checkpoints").string();
    hooks.record_wall_time = !no_timing;
    hooks.on_checkpoint = [&](int iteration, const WorldPolicy& p) {
      write_facts(dir / "facts" / ("epoch_" + std::to_string(iteration) + ".csv"), world_environment(cfg, p), cfg,
                  iteration);
    };
    const TrainResult r = train(init, problem, tc, hooks);
    {
      auto os = open_out(dir / "trace.csv");
      write_trace_csv(os, r.trace, cfg.seed, false);
      auto pol = open_out(dir / "policy_final.bin");
      write_policy(pol, r.policy, cfg.seed);
    }
    // Rebuilt from the files on disk so a resumed run still lists every checkpoint.
    std::set<int> epochs;
    for (const auto& entry : fs::directory_iterator(dir / "facts")) {
      const std::string name = entry.path().filename().string();
      int it = 0;
      if (std::sscanf(name.c_str(), "epoch_%d.csv", &it) == 1 && it <= tc.iterations) epochs.insert(it);
    }
    auto manifest = open_out(dir / "facts" / "manifest.csv");
    manifest << csv_metadata_line(cfg.seed) << "\niteration,file\n";
    for (int it : epochs) manifest << it << ",epoch_" << it << ".csv\n";
    const double last = r.trace.empty() ? r.initial_d_f : r.trace.back().d_f;
    std::cout << "trained " << r.trace.size() << " iterations; D_f " << format_double(r.initial_d_f) << " -> "
              << format_double(last) << '\n';
  }
};

struct FactsCmd {
  std::string env = "real";
  std::string policy;
  int index = 0;
  std::string out = "facts.csv";

  void run(const ExperimentConfig& cfg) const {
    write_facts(out, pick_env(env, policy, cfg), cfg, index);
    std::cout << "wrote " << out << '\n';
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limit-order-book simulator with an interactive-agent environment metric"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("-c,--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("-s,--set", opt.sets, "override a config key, e.g. --set train.b=5")->take_all();

  RolloutsCmd rollouts;
  auto* c_roll = app.add_subcommand("rollouts", "write seeded rollouts as JSON lines plus a manifest");
  c_roll->add_option("--env", rollouts.env, "real or world")->capture_default_str();
  c_roll->add_option("--policy", rollouts.policy, "world policy file (default: world_init)");
  c_roll->add_option("-n,--count", rollouts.count, "number of rollouts")->capture_default_str();
  c_roll->add_option("-o,--out", rollouts.out, "output directory")->capture_default_str();

  FeedbackCmd feedback;
  auto* c_fb = app.add_subcommand("feedback", "compute per-rollout feedback from a rollout log");
  c_fb->add_option("-i,--in", feedback.in, "rollouts.jsonl")->required();
  c_fb->add_option("-o,--out", feedback.out, "feedback CSV")->capture_default_str();

  SeparabilityCmd sep;
  auto* c_sep = app.add_subcommand("separability", "bootstrap envelopes of world-vs-real and real-vs-real");
  c_sep->add_option("--policy", sep.policy, "world policy file (default: world_init)");
  c_sep->add_option("-k,--kind", sep.kinds, "feedback kinds (default: config feedback)");
  c_sep->add_option("-o,--out", sep.out, "envelope CSV")->capture_default_str();

  TrainCmd trainc;
  auto* c_train = app.add_subcommand("train", "calibrate the world policy against real feedbacks");
  c_train->add_option("-o,--out", trainc.out, "output directory")->capture_default_str();
  c_train->add_option("--real-feedback", trainc.real_feedback, "feedback CSV of the real market");
  c_train->add_flag("--self-calibration", trainc.self_calibration,
                    "use a reference world policy as the real market");
  c_train->add_flag("--no-timing", trainc.no_timing, "omit wall time from the checkpointed timing trace");

  FactsCmd facts;
  auto* c_facts = app.add_subcommand("facts-export", "per-event book and stylized-fact CSV of one rollout");
  c_facts->add_option("--env", facts.env, "real or world")->capture_default_str();
  c_facts->add_option("--policy", facts.policy, "world policy file (default: world_init)");
  c_facts->add_option("--index", facts.index, "rollout index in the export stream")->capture_default_str();
  c_facts->add_option("-o,--out", facts.out, "CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const ExperimentConfig cfg = load_config(opt.config, opt.sets);
    if (c_roll->parsed()) rollouts.run(cfg);
    if (c_fb->parsed()) feedback.run(cfg);
    if (c_sep->parsed()) sep.run(cfg);
    if (c_train->parsed()) trainc.run(cfg);
    if (c_facts->parsed()) facts.run(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::ConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
