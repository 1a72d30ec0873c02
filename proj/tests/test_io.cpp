#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "icsim/config.hpp"
#include "icsim/experiments.hpp"
#include "icsim/rollout_io.hpp"

using namespace icsim;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::IoError;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config json round trip") {
  ExperimentConfig cfg;
  cfg.seed = 12;
  cfg.env.exp.policy = ExpPolicy::epsilon_market(0.3);
  cfg.feedback.estimator = Estimator::Ipw;
  cfg.train.truncation = 3;
  cfg.kernel = KernelSpec::gaussian(0.25);
  cfg.separability.ns = {2, 5};
  CHECK(config_from_json(config_to_json(cfg)) == cfg);
  CHECK(config_from_json("{}") == ExperimentConfig{});
}

TEST_CASE("config errors") {
  CHECK(code_of([] { config_from_json(R"({"trian": {}})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json(R"({"train": {"b": "three"}})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json(R"({"train": {"truncation": 99}})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json("{not json"); }) == Errc::ConfigError);
  CHECK(code_of([] { load_config("/nonexistent/icsim.json"); }) == Errc::ConfigError);
}

TEST_CASE("overrides") {
  const std::string base = config_to_json(ExperimentConfig{});
  const ExperimentConfig c = config_from_json(apply_override(base, "train.N=7"));
  CHECK(c.train.mc_rollouts == 7);
  const ExperimentConfig d = load_config("", {"seed=5", "feedback.kind=EpisodeReward"});
  CHECK(d.seed == 5);
  CHECK(d.feedback.kind == FeedbackKind::EpisodeReward);
  CHECK(code_of([&] { apply_override(base, "no_equals_sign"); }) == Errc::ConfigError);
  CHECK(code_of([] { load_config("", {"train.nope=1"}); }) == Errc::ConfigError);
}

TEST_CASE("train config json round trip") {
  TrainConfig t;
  t.learning_rate = 0.125;
  t.baseline = true;
  t.seed = 99;
  CHECK(train_config_from_json(train_config_to_json(t)) == t);
}

TEST_CASE("rollout jsonl round trip") {
  ExperimentConfig cfg;
  const Environment real = real_environment(cfg);
  const Environment world = world_environment(cfg, initial_world_policy(cfg));
  std::vector<Rollout> rs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    rs.push_back(run_rollout(real, cfg.env.exp.policy, cfg.env.exp.horizon, s));
    rs.push_back(run_rollout(world, cfg.env.exp.policy, cfg.env.exp.horizon, s));
  }
  std::stringstream ss;
  for (const auto& r : rs) write_rollout_jsonl(ss, r);
  const auto back = read_rollouts_jsonl(ss);
  REQUIRE(back.size() == rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) CHECK(back[i] == rs[i]);
  std::stringstream bad("{\"seed\": 1}\n");
  CHECK(code_of([&] { read_rollouts_jsonl(bad); }) == Errc::ParseError);
}

TEST_CASE("trace csv round trip, with and without timing") {
  const std::vector<TraceRow> rows{{1, 0.5, 2.0, 1e-9, 0, 0.25}, {2, std::nan(""), 1.0 / 3.0, 5e-10, 2, 0.5}};
  for (bool timing : {true, false}) {
    std::stringstream ss;
    write_trace_csv(ss, rows, 4, timing);
    const auto back = read_trace_csv(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].d_f == 0.5);
    CHECK(std::isnan(back[1].d_f));
    CHECK(back[1].grad_norm == 1.0 / 3.0);
    CHECK(back[1].rate == 5e-10);
    CHECK(back[1].dropped_terms == 2);
    CHECK(back[1].seconds == (timing ? 0.5 : 0.0));
  }
}

TEST_CASE("metadata line") {
  const std::string line = csv_metadata_line(123);
  CHECK(line == "# schema-version=1 seed=123");
  CHECK(parse_csv_metadata_line(line) == 123);
  CHECK(code_of([] { parse_csv_metadata_line("seed,value"); }) == Errc::ParseError);
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("snapshot csv has one row per book event and a fixed column count") {
  ExperimentConfig cfg;
  const auto rows = facts_rollout(real_environment(cfg), cfg.env.exp.policy, 3);
  REQUIRE_FALSE(rows.empty());
  std::ostringstream os;
  write_snapshot_csv(os, rows, 3, cfg.env.market.export_levels);
  const auto lines = lines_of(os.str());
  REQUIRE(lines.size() == rows.size() + 2);
  CHECK(parse_csv_metadata_line(lines[0]) == 3);
  CHECK(lines[1].rfind("event_clock,t,mid,", 0) == 0);
  const auto width = split_csv(lines[1]).size();
  for (std::size_t i = 2; i < lines.size(); ++i) REQUIRE(split_csv(lines[i]).size() == width);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].event_clock > rows[i - 1].event_clock);
}

TEST_CASE("rollout seeds are derived per stream and index") {
  CHECK(rollout_seed(1, kRealRollouts, 0) == rollout_seed(1, kRealRollouts, 0));
  CHECK(rollout_seed(1, kRealRollouts, 0) != rollout_seed(1, kRealRollouts, 1));
  CHECK(rollout_seed(1, kRealRollouts, 0) != rollout_seed(1, kWorldRollouts, 0));
  CHECK(rollout_seed(1, kRealRollouts, 0) != rollout_seed(2, kRealRollouts, 0));
}
