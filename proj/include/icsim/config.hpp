#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icsim/env.hpp"
#include "icsim/feedback.hpp"
#include "icsim/metric.hpp"
#include "icsim/trainer.hpp"

namespace icsim {

/// How the initial world policy is obtained: a policy file, or random
/// parameters with the given scale and seed.
struct WorldInit {
  std::string policy_file;
  double scale = 0.1;
  std::uint64_t seed = 1;

  friend bool operator==(const WorldInit&, const WorldInit&) = default;
};

struct SeparabilityConfig {
  int pool_size = 200;
  std::vector<int> ns = kDefaultEnvelopeNs;
  int reps = 50;

  friend bool operator==(const SeparabilityConfig&, const SeparabilityConfig&) = default;
};

/// Self-calibration: the "real" market is a frozen reference world policy
/// (the world_init policy) and training starts from a copy whose side head
/// favours bids by `bid_bias` logits.
struct CalibrationConfig {
  double bid_bias = 2.0;

  friend bool operator==(const CalibrationConfig&, const CalibrationConfig&) = default;
};

/// The complete description of an experiment; every command reads one.
struct ExperimentConfig {
  EnvConfig env;
  BgPopulationConfig population;  // background flow of the real market
  FeedbackSpec feedback;
  DistanceKind distance = DistanceKind::MMD;
  KernelSpec kernel = KernelSpec::gaussian();
  TrainConfig train;
  WorldInit world_init;
  SeparabilityConfig separability;
  CalibrationConfig calibration;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses a JSON document over the defaults. Unknown keys and ill-typed
/// values raise ConfigError.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

/// Applies `key=value` (dotted path, JSON-or-string value) to a JSON document.
std::string apply_override(const std::string& json_text, const std::string& assignment);

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace icsim
