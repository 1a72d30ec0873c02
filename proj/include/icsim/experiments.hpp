#pragma once

#include <cstdint>
#include <vector>

#include "icsim/config.hpp"

namespace icsim {

/// Random streams of experiment-level seeds (see derive_seed).
enum ExperimentStream : std::uint64_t {
  kRealRollouts = 11,
  kWorldRollouts = 12,
  kRealRolloutsB = 13,
  kBootstrap = 14,
  kFactsExport = 15,
};

Environment real_environment(const ExperimentConfig& cfg);
Environment world_environment(const ExperimentConfig& cfg, const WorldPolicy& policy);

/// Seed of the i-th rollout of a stream under the master seed.
std::uint64_t rollout_seed(std::uint64_t master, ExperimentStream stream, int i);

std::vector<Rollout> collect_rollouts(const Environment& env, const ExpPolicy& pi, int horizon, int count,
                                      std::uint64_t master, ExperimentStream stream);

/// Initial world policy from a file or the random initializer.
WorldPolicy initial_world_policy(const ExperimentConfig& cfg);

/// Propensity source matching the feedback estimator: exact for the
/// configured exp policy.
Propensity config_propensity(const ExperimentConfig& cfg);

struct SeparabilityResult {
  FeedbackSet world;
  FeedbackSet real_a;
  FeedbackSet real_b;
  EnvelopeTable world_vs_real;
  EnvelopeTable real_vs_real;
};

/// Builds three pools (world, two disjoint real batches) and the two
/// bootstrap envelopes of the separability study.
SeparabilityResult run_separability(const ExperimentConfig& cfg, const WorldPolicy& world_policy,
                                    const FeedbackSpec& spec);

/// One rollout of `env` with per-event book snapshots (stylized-fact export).
std::vector<SnapshotRow> facts_rollout(Environment env, const ExpPolicy& pi, std::uint64_t seed);

/// Real feedbacks for training: N' rollouts of the real population.
TrainProblem real_train_problem(const ExperimentConfig& cfg);

struct SelfCalibration {
  WorldPolicy reference;  // generates the "real" feedbacks
  WorldPolicy init;       // perturbed starting point
  TrainProblem problem;
};

SelfCalibration self_calibration(const ExperimentConfig& cfg);

}  // namespace icsim
