#include "icsim/feedback.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace icsim {

std::string to_string(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::EpisodeReward: return "EpisodeReward";
    case FeedbackKind::Mkt2NextReturn: return "Mkt2NextReturn";
    case FeedbackKind::Mkt2NextPriceImpact: return "Mkt2NextPriceImpact";
    case FeedbackKind::Mkt2NextSpread: return "Mkt2NextSpread";
    case FeedbackKind::Mkt2NextImbalance: return "Mkt2NextImbalance";
    case FeedbackKind::Mkt2NextDirection: return "Mkt2NextDirection";
    case FeedbackKind::Mkt2Reward: return "Mkt2Reward";
  }
  return "?";
}

std::string to_string(Estimator e) { return e == Estimator::Naive ? "naive" : "ipw"; }
std::string to_string(IpwForm f) { return f == IpwForm::SelfNormalized ? "self_normalized" : "as_printed"; }

FeedbackKind feedback_kind_from_string(const std::string& s) {
  for (auto k : {FeedbackKind::EpisodeReward, FeedbackKind::Mkt2NextReturn, FeedbackKind::Mkt2NextPriceImpact,
                 FeedbackKind::Mkt2NextSpread, FeedbackKind::Mkt2NextImbalance, FeedbackKind::Mkt2NextDirection,
                 FeedbackKind::Mkt2Reward})
    if (to_string(k) == s) return k;
  throw Error(Errc::ParseError, "unknown feedback kind: " + s);
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "naive") return Estimator::Naive;
  if (s == "ipw") return Estimator::Ipw;
  throw Error(Errc::ParseError, "unknown estimator: " + s);
}

IpwForm ipw_form_from_string(const std::string& s) {
  if (s == "self_normalized") return IpwForm::SelfNormalized;
  if (s == "as_printed") return IpwForm::AsPrinted;
  throw Error(Errc::ParseError, "unknown IPW form: " + s);
}

bool is_causal(FeedbackKind k) { return k != FeedbackKind::EpisodeReward; }

std::optional<double> OutcomeSelector::operator()(const ExpStep& step) const {
  const StylizedFacts& f = step.facts_after;
  switch (kind) {
    case FeedbackKind::EpisodeReward:
    case FeedbackKind::Mkt2Reward: return step.reward;
    case FeedbackKind::Mkt2NextReturn: return f.log_return;
    case FeedbackKind::Mkt2NextPriceImpact: return f.price_impact;
    case FeedbackKind::Mkt2NextSpread: return f.spread;
    case FeedbackKind::Mkt2NextImbalance: return f.imbalance_at(imbalance_level);
    case FeedbackKind::Mkt2NextDirection:
      if (!f.mid) return std::nullopt;
      return static_cast<double>(f.direction);
  }
  return std::nullopt;
}

Propensity exact_propensity(const ExpPolicy& pi) {
  return [pi](const ExpAgentState& s) { return propensity(pi, s); };
}

void FeedbackSpec::validate() const {
  if (!(ps_threshold > 0.0 && ps_threshold <= 0.5))
    throw Error(Errc::ConfigError, "propensity clipping threshold must lie in (0, 0.5]");
  if (imbalance_level < 0) throw Error(Errc::ConfigError, "imbalance level must be >= 0");
}

FeedbackSample episode_reward(const Rollout& r) {
  if (!r.complete) throw Error(Errc::IncompleteRollout, "episode reward needs a complete rollout");
  double total = 0.0;
  for (const auto& s : r.steps) total += s.reward;
  return FeedbackSample{total, 0, r.seed};
}

namespace {

// Treated steps whose outcome is defined, with their outcomes.
std::vector<std::pair<const ExpStep*, double>> treated_outcomes(const Rollout& r, const OutcomeSelector& outcome) {
  std::vector<std::pair<const ExpStep*, double>> out;
  for (const auto& s : r.steps) {
    if (s.a != ExpAction::Market) continue;
    if (auto y = outcome(s)) out.emplace_back(&s, *y);
  }
  if (out.empty()) throw Error(Errc::NoTreatedSteps, "rollout " + std::to_string(r.seed) + " has no treated step");
  return out;
}

}  // namespace

FeedbackSample naive_effect(const Rollout& r, const OutcomeSelector& outcome) {
  const auto treated = treated_outcomes(r, outcome);
  double sum = 0.0;
  for (const auto& [step, y] : treated) sum += y;
  return FeedbackSample{sum / static_cast<double>(treated.size()), static_cast<int>(treated.size()), r.seed};
}

FeedbackSample ipw_effect(const Rollout& r, const OutcomeSelector& outcome, const Propensity& e, double ps_threshold,
                          IpwForm form) {
  if (!e) throw Error(Errc::ConfigError, "IPW needs a propensity source");
  const auto treated = treated_outcomes(r, outcome);
  double weighted = 0.0;
  double weights = 0.0;
  for (const auto& [step, y] : treated) {
    const double p = e(step->s_prev);
    if (!(p > 0.0))
      throw Error(Errc::DegeneratePropensity,
                  "zero propensity at treated step " + std::to_string(step->t) + " of rollout " + std::to_string(r.seed));
    const double w = 1.0 / std::max(p, ps_threshold);
    weighted += w * y;
    weights += w;
  }
  const double n = static_cast<double>(treated.size());
  const double value = form == IpwForm::AsPrinted ? weighted / n : weighted / weights;
  return FeedbackSample{value, static_cast<int>(treated.size()), r.seed};
}

FeedbackSample mkt_to_reward(const Rollout& r, Estimator est, const Propensity& e, double ps_threshold, IpwForm form) {
  const OutcomeSelector reward{FeedbackKind::Mkt2Reward};
  return est == Estimator::Naive ? naive_effect(r, reward) : ipw_effect(r, reward, e, ps_threshold, form);
}

FeedbackSample compute_feedback(const Rollout& r, const FeedbackSpec& spec, const Propensity& e) {
  if (spec.kind == FeedbackKind::EpisodeReward) return episode_reward(r);
  if (spec.estimator == Estimator::Naive) return naive_effect(r, spec.outcome());
  return ipw_effect(r, spec.outcome(), e, spec.ps_threshold, spec.ipw_form);
}

Eigen::VectorXd FeedbackSet::values() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) v[static_cast<Eigen::Index>(i)] = samples[i].value;
  return v;
}

FeedbackSet collect_feedback(const std::vector<Rollout>& rollouts, const FeedbackSpec& spec, const Propensity& e) {
  FeedbackSet out;
  for (const auto& r : rollouts) {
    try {
      out.samples.push_back(compute_feedback(r, spec, e));
    } catch (const Error& err) {
      if (err.code() != Errc::NoTreatedSteps) throw;
      ++out.dropped;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd propensity_features(const ExpAgentState& s) {
  Eigen::VectorXd x(7);
  x << s.elapsed_frac, s.remaining_frac, s.market.imbalance5, s.market.imbalance_all, s.market.spread,
      s.market.price_impact, static_cast<double>(s.market.direction);
  return x;
}

double LogisticPropensity::operator()(const ExpAgentState& s) const {
  const Eigen::VectorXd z = (propensity_features(s) - mean).cwiseQuotient(scale);
  return 1.0 / (1.0 + std::exp(-(weights.dot(z) + bias)));
}

std::vector<PropensityRecord> propensity_history(const std::vector<Rollout>& rollouts) {
  std::vector<PropensityRecord> out;
  for (const auto& r : rollouts)
    for (const auto& s : r.steps) out.push_back(PropensityRecord{s.s_prev, s.a == ExpAction::Market});
  return out;
}

LogisticPropensity fit_propensity(const std::vector<PropensityRecord>& history, int max_iterations) {
  const auto n = static_cast<Eigen::Index>(history.size());
  Eigen::Index treated = 0;
  for (const auto& h : history) treated += h.treated;
  if (treated == 0 || treated == n)
    throw Error(Errc::Separable, "propensity history holds a single treatment class");

  const Eigen::Index d = propensity_features(history.front().state).size();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = propensity_features(history[static_cast<std::size_t>(i)].state).transpose();
    y[i] = history[static_cast<std::size_t>(i)].treated ? 1.0 : 0.0;
  }
  LogisticPropensity m;
  m.mean = x.colwise().mean().transpose();
  x.rowwise() -= m.mean.transpose();
  m.scale = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < d; ++j)
    if (m.scale[j] < 1e-12) m.scale[j] = 1.0;
  x = x * m.scale.cwiseInverse().asDiagonal();

  // Standardized columns bound the loss curvature by (d + 1) / 4.
  const double lr = 2.0 / static_cast<double>(d + 1);
  m.weights = Eigen::VectorXd::Zero(d);
  auto loss_of = [&](const Eigen::VectorXd& z) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double zi = z[i];
      l += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - y[i] * zi;
    }
    return l / static_cast<double>(n);
  };
  Eigen::VectorXd z = Eigen::VectorXd::Constant(n, m.bias);
  double loss = loss_of(z);
  for (m.iterations = 0; m.iterations < max_iterations; ++m.iterations) {
    const Eigen::VectorXd p = (1.0 + (-z.array()).exp()).inverse().matrix();
    const Eigen::VectorXd g = p - y;
    m.weights -= lr * (x.transpose() * g) / static_cast<double>(n);
    m.bias -= lr * g.mean();
    z = (x * m.weights).array() + m.bias;
    const double next = loss_of(z);
    const bool done = std::abs(loss - next) < 1e-8;
    loss = next;
    if (done) break;
  }
  double min_treated = INFINITY;
  double max_untreated = -INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] > 0.5)
      min_treated = std::min(min_treated, z[i]);
    else
      max_untreated = std::max(max_untreated, z[i]);
  }
  m.separable = min_treated > max_untreated;
  return m;
}

// ---------------------------------------------------------------------------

namespace {
std::string feedback_label(const FeedbackSpec& spec) {
  std::string s = to_string(spec.kind);
  if (spec.kind == FeedbackKind::Mkt2NextImbalance) s += spec.imbalance_level == 0 ? "All" : std::to_string(spec.imbalance_level);
  return s;
}
}  // namespace

void write_feedback_csv(std::ostream& os, const FeedbackSet& set, const FeedbackSpec& spec, std::uint64_t seed) {
  os << csv_metadata_line(seed) << '\n' << "kind,estimator,value,n_treated,seed\n";
  const std::string kind = feedback_label(spec);
  const std::string est = spec.kind == FeedbackKind::EpisodeReward ? "none" : to_string(spec.estimator);
  for (const auto& s : set.samples)
    os << kind << ',' << est << ',' << format_double(s.value) << ',' << s.n_treated << ',' << s.seed << '\n';
  if (!os) throw Error(Errc::IoError, "failed to write feedback CSV");
}

FeedbackCsv read_feedback_csv(std::istream& is) {
  FeedbackCsv out;
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::ParseError, "empty feedback CSV");
  out.seed = parse_csv_metadata_line(line);
  if (!std::getline(is, line) || split_csv(line) != std::vector<std::string>{"kind", "estimator", "value", "n_treated", "seed"})
    throw Error(Errc::ParseError, "unexpected feedback CSV header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw Error(Errc::ParseError, "feedback CSV row needs 5 fields: " + line);
    try {
      out.kind = f[0];
      out.estimator = f[1];
      out.samples.push_back(FeedbackSample{std::stod(f[2]), std::stoi(f[3]), std::stoull(f[4])});
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "bad feedback CSV row: " + line);
    }
  }
  return out;
}

}  // namespace icsim
