#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icsim/env.hpp"
#include "icsim/feedback.hpp"
#include "icsim/metric.hpp"

namespace icsim {

struct TrainConfig {
  int mc_rollouts = 5;       // N
  int real_count = 100;      // N'
  int actions_per_step = 3;  // b
  int truncation = 5;        // T0
  double learning_rate = 1e-9;
  int halve_every = 10;
  int iterations = 100;
  int eval_rollouts = 5;     // held-out world rollouts per evaluation
  FeedbackSpec feedback;
  DistanceKind distance = DistanceKind::MMD;
  KernelSpec kernel = KernelSpec::gaussian();
  bool fixed_bandwidth = true;         // resolve a median bandwidth once from the real feedbacks
  bool baseline = false;               // subtract the per-step mean Q of the b siblings
  bool common_random_numbers = false;  // siblings share their MC seeds
  int checkpoint_every = 10;
  std::uint64_t seed = 0;

  /// Learning rate in effect at 0-based iteration i.
  double rate_at(int i) const;
  void validate(int horizon) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TraceRow {
  int iteration = 0;       // 1-based: the row describes the policy after this many updates
  double d_f = 0.0;        // NaN when evaluation feedbacks were all dropped
  double grad_norm = 0.0;
  double rate = 0.0;       // learning rate used by this update
  int dropped_terms = 0;   // (t, k) terms skipped for lack of feedback
  double seconds = 0.0;    // wall time of the update and evaluation

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct TrainResult {
  WorldPolicy policy;
  double initial_d_f = 0.0;
  std::vector<TraceRow> trace;
};

/// Everything the trainer needs about the world and the offline real data.
struct TrainProblem {
  EnvConfig env;              // includes the exp policy
  Eigen::VectorXd real_feedbacks;
};

/// Kernel used for Q and evaluation: with `fixed_bandwidth` the median
/// heuristic is resolved once over the real feedbacks.
KernelSpec training_kernel(const TrainConfig& cfg, const Eigen::VectorXd& real);

/// Q of forcing `a` at the prefix: d̂ between the feedbacks of N MC
/// completions and the real feedbacks. Throws AllFeedbackDropped when fewer
/// than two completions yield a feedback.
double q_value(const RolloutPrefix& prefix, const WorldAction& a, std::shared_ptr<const WorldPolicy> policy,
               const Eigen::VectorXd& real, const TrainConfig& cfg, const KernelSpec& kernel,
               const std::vector<std::uint64_t>& seeds);

/// D_f of `policy` on the held-out evaluation seeds.
double evaluate(const WorldPolicy& policy, const TrainProblem& problem, const TrainConfig& cfg, int rollouts);

/// Score-function term of one decision: (1/b) Σ_k (Q_k - baseline) ∇ log p(A_k | s).
/// Siblings without a Q contribute nothing; the baseline is the mean of the
/// available Q values when enabled. Throws NaNGradient naming k.
Eigen::VectorXd sibling_gradient(const WorldPolicy& policy, const WorldState& s, const std::vector<WorldAction>& actions,
                                 const std::vector<std::optional<double>>& q, bool baseline);

struct GradStep {
  WorldPolicy policy;
  Eigen::VectorXd gradient;
  int dropped_terms = 0;
};

/// One iteration of the score-function update at 0-based iteration `i`.
/// Throws NaNGradient naming the offending (t, k).
GradStep grad_step(const WorldPolicy& policy, const TrainProblem& problem, const TrainConfig& cfg, int i);

struct TrainHooks {
  std::string checkpoint_dir;  // empty: no checkpoints, no resume
  bool record_wall_time = true;
  std::function<void(int iteration, const WorldPolicy&)> on_checkpoint;
};

TrainResult train(const WorldPolicy& init, const TrainProblem& problem, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Trace CSV: iteration, d_f, grad_norm, r, dropped_terms, seconds.
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace, std::uint64_t seed, bool with_seconds);
std::vector<TraceRow> read_trace_csv(std::istream& is);

struct GridCell {
  int truncation = 0;
  int actions_per_step = 0;
  double final_d_f = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  GridCell best;
};

/// Trains once per (T0, b) pair and keeps the smallest final evaluation D_f.
GridResult grid_search(const WorldPolicy& init, const TrainProblem& problem, const TrainConfig& cfg,
                       const std::vector<int>& truncations, const std::vector<int>& actions_per_step,
                       const std::function<void(const GridCell&, const TrainResult&)>& on_cell = {});

}  // namespace icsim
