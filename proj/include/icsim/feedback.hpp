#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icsim/env.hpp"

namespace icsim {

enum class FeedbackKind : std::uint8_t {
  EpisodeReward,
  Mkt2NextReturn,
  Mkt2NextPriceImpact,
  Mkt2NextSpread,
  Mkt2NextImbalance,
  Mkt2NextDirection,
  Mkt2Reward,
};

enum class Estimator : std::uint8_t { Naive, Ipw };

/// AsPrinted divides the weighted sum by the treated count; SelfNormalized
/// divides by the summed weights, which keeps constant-propensity estimates
/// on the outcome scale.
enum class IpwForm : std::uint8_t { SelfNormalized, AsPrinted };

std::string to_string(FeedbackKind k);
std::string to_string(Estimator e);
std::string to_string(IpwForm f);
FeedbackKind feedback_kind_from_string(const std::string& s);
Estimator estimator_from_string(const std::string& s);
IpwForm ipw_form_from_string(const std::string& s);

bool is_causal(FeedbackKind k);

/// Picks the per-step outcome s_t of a causal feedback. Empty when the fact
/// is unavailable (one-sided book); such steps are skipped.
struct OutcomeSelector {
  FeedbackKind kind = FeedbackKind::Mkt2NextReturn;
  int imbalance_level = 0;  // Mkt2NextImbalance: n, or 0 for all levels

  std::optional<double> operator()(const ExpStep& step) const;
};

using Propensity = std::function<double(const ExpAgentState&)>;

/// Exact market-order probability of a known exp policy.
Propensity exact_propensity(const ExpPolicy& pi);

struct FeedbackSpec {
  FeedbackKind kind = FeedbackKind::Mkt2NextReturn;
  int imbalance_level = 0;
  Estimator estimator = Estimator::Naive;
  double ps_threshold = 0.05;
  IpwForm ipw_form = IpwForm::SelfNormalized;

  OutcomeSelector outcome() const { return OutcomeSelector{kind, imbalance_level}; }
  void validate() const;

  friend bool operator==(const FeedbackSpec&, const FeedbackSpec&) = default;
};

struct FeedbackSample {
  double value = 0.0;
  int n_treated = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const FeedbackSample&, const FeedbackSample&) = default;
};

FeedbackSample episode_reward(const Rollout& r);
FeedbackSample naive_effect(const Rollout& r, const OutcomeSelector& outcome);
FeedbackSample ipw_effect(const Rollout& r, const OutcomeSelector& outcome, const Propensity& e, double ps_threshold,
                          IpwForm form = IpwForm::SelfNormalized);
FeedbackSample mkt_to_reward(const Rollout& r, Estimator est = Estimator::Naive, const Propensity& e = {},
                             double ps_threshold = 0.05, IpwForm form = IpwForm::SelfNormalized);

/// Dispatches on `spec`; `e` is required for the IPW estimator.
FeedbackSample compute_feedback(const Rollout& r, const FeedbackSpec& spec, const Propensity& e = {});

struct FeedbackSet {
  std::vector<FeedbackSample> samples;
  int dropped = 0;  // rollouts without a usable treated step

  Eigen::VectorXd values() const;
};

FeedbackSet collect_feedback(const std::vector<Rollout>& rollouts, const FeedbackSpec& spec,
                             const Propensity& e = {});

// ---------------------------------------------------------------------------
// Propensity model
// ---------------------------------------------------------------------------

/// Features of an exp state used by the propensity model.
Eigen::VectorXd propensity_features(const ExpAgentState& s);

struct LogisticPropensity {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  Eigen::VectorXd weights;
  double bias = 0.0;
  bool separable = false;  // classes were perfectly separated; rely on clipping
  int iterations = 0;

  double operator()(const ExpAgentState& s) const;
};

struct PropensityRecord {
  ExpAgentState state;
  bool treated = false;
};

std::vector<PropensityRecord> propensity_history(const std::vector<Rollout>& rollouts);

/// Logistic regression by full-batch gradient descent on standardized
/// features. Stops when the loss changes by less than 1e-8 or after
/// `max_iterations`. Throws Separable when only one class is present.
LogisticPropensity fit_propensity(const std::vector<PropensityRecord>& history, int max_iterations = 10000);

// ---------------------------------------------------------------------------
// Feedback CSV
// ---------------------------------------------------------------------------

void write_feedback_csv(std::ostream& os, const FeedbackSet& set, const FeedbackSpec& spec, std::uint64_t seed);

struct FeedbackCsv {
  std::uint64_t seed = 0;
  std::vector<FeedbackSample> samples;
  std::string kind;
  std::string estimator;
};

FeedbackCsv read_feedback_csv(std::istream& is);

}  // namespace icsim
