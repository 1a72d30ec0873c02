#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "icsim/common.hpp"

namespace icsim {

enum class WorldKind : int { Limit = 0, Market = 1, Cancel = 2, Hold = 3 };

/// One background decision. Fields irrelevant to `kind` are canonicalized to
/// zero so every action has a single encoding.
struct WorldAction {
  WorldKind kind = WorldKind::Hold;
  int side = 0;          // 0 buy, 1 sell
  int price_offset = 0;  // limit only: ticks from the reference mid, in [-K, K]
  int size_bucket = 0;   // limit and market
  int cancel_slot = 0;

  WorldAction canonical() const;

  static WorldAction hold() { return {}; }
  static WorldAction market(int side, int size_bucket = 0) {
    return WorldAction{WorldKind::Market, side, 0, size_bucket, 0};
  }
  static WorldAction limit(int side, int offset, int size_bucket) {
    return WorldAction{WorldKind::Limit, side, offset, size_bucket, 0};
  }
  static WorldAction cancel(int slot) { return WorldAction{WorldKind::Cancel, 0, 0, 0, slot}; }

  friend bool operator==(const WorldAction&, const WorldAction&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(kind, side, price_offset, size_bucket, cancel_slot);
  }
};

/// Observation of the world policy: flattened feature vector plus the number
/// of the acting agent's resting orders (masks the cancel head).
struct WorldState {
  std::vector<double> features;
  int n_resting = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(features, n_resting);
  }
};

struct WorldPolicyShape {
  int state_dim = 36;
  int hidden = 16;
  int price_half_range = 3;  // K: offsets in [-K, K]
  int size_buckets = 3;
  int cancel_slots = 4;

  int kind_count() const { return 4; }
  int side_count() const { return 2; }
  int price_count() const { return 2 * price_half_range + 1; }
  std::array<int, 5> head_sizes() const {
    return {kind_count(), side_count(), price_count(), size_buckets, cancel_slots};
  }
  Eigen::Index parameter_count() const;

  friend bool operator==(const WorldPolicyShape&, const WorldPolicyShape&) = default;
};

/// Stochastic background policy p_theta(A|S): tanh hidden layer feeding five
/// independent softmax heads (kind, side, price offset, size, cancel slot).
///
/// Parameter layout in the flat vector: W1 (hidden x state_dim, column-major),
/// b1, then for each head its weight matrix (classes x hidden) and bias.
template <typename Scalar>
class WorldPolicyT {
public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Heads {
    std::array<Vector, 5> probs;  // masked and normalized
    Vector hidden;
  };

  WorldPolicyT() = default;
  explicit WorldPolicyT(WorldPolicyShape shape)
      : shape_(shape), theta_(Vector::Zero(shape.parameter_count())) {}
  WorldPolicyT(WorldPolicyShape shape, Vector theta) : shape_(shape), theta_(std::move(theta)) {
    if (theta_.size() != shape_.parameter_count())
      throw Error(Errc::ConfigError, "parameter vector does not match the policy shape");
  }

  static WorldPolicyT random(WorldPolicyShape shape, std::uint64_t seed, Scalar scale) {
    Rng rng(seed);
    Vector theta(shape.parameter_count());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = scale * static_cast<Scalar>(rng.normal());
    return WorldPolicyT(shape, std::move(theta));
  }

  const WorldPolicyShape& shape() const { return shape_; }
  const Vector& theta() const { return theta_; }
  Vector& theta() { return theta_; }

  /// Offset of head `h` weights inside theta (bias follows the weights).
  Eigen::Index head_offset(int h) const {
    Eigen::Index off = Eigen::Index(shape_.hidden) * (shape_.state_dim + 1);
    const auto sizes = shape_.head_sizes();
    for (int i = 0; i < h; ++i) off += Eigen::Index(sizes[i]) * (shape_.hidden + 1);
    return off;
  }

  /// Head biases are the natural handles for calibrating marginal behavior.
  auto head_bias(int h) {
    const int c = shape_.head_sizes()[h];
    return theta_.segment(head_offset(h) + Eigen::Index(c) * shape_.hidden, c);
  }

  Heads heads(const WorldState& s) const {
    check_state(s);
    const auto x = Eigen::Map<const Eigen::VectorXd>(s.features.data(), shape_.state_dim).template cast<Scalar>();
    Heads out;
    out.hidden = (w1() * x + b1()).array().tanh().matrix();
    const auto sizes = shape_.head_sizes();
    for (int h = 0; h < 5; ++h) {
      Vector logits = head_w(h) * out.hidden + head_b(h);
      out.probs[h] = masked_softmax(logits, legal_mask(h, sizes[h], s.n_resting));
    }
    return out;
  }

  /// Log-probability of the canonical form of `a`; throws IllegalAction when
  /// `a` cannot be taken in `s`.
  Scalar log_prob(const WorldState& s, const WorldAction& a) const {
    const auto c = checked(s, a);
    const Heads hd = heads(s);
    Scalar lp(0);
    for (const auto& [h, cls] : used_heads(c)) lp += std::log(hd.probs[h][cls]);
    return lp;
  }

  /// Exact gradient of log_prob with respect to theta.
  Vector log_prob_gradient(const WorldState& s, const WorldAction& a) const {
    const auto c = checked(s, a);
    const Heads hd = heads(s);
    const auto x = Eigen::Map<const Eigen::VectorXd>(s.features.data(), shape_.state_dim).template cast<Scalar>();
    Vector grad = Vector::Zero(theta_.size());
    Vector d_hidden = Vector::Zero(shape_.hidden);
    const auto sizes = shape_.head_sizes();
    for (const auto& [h, cls] : used_heads(c)) {
      Vector g = -hd.probs[h];
      g[cls] += Scalar(1);
      const Eigen::Index off = head_offset(h);
      Eigen::Map<Matrix>(grad.data() + off, sizes[h], shape_.hidden) += g * hd.hidden.transpose();
      grad.segment(off + Eigen::Index(sizes[h]) * shape_.hidden, sizes[h]) += g;
      d_hidden += head_w(h).transpose() * g;
    }
    const Vector d_pre = d_hidden.cwiseProduct((Scalar(1) - hd.hidden.array().square()).matrix());
    Eigen::Map<Matrix>(grad.data(), shape_.hidden, shape_.state_dim) = d_pre * x.transpose();
    grad.segment(Eigen::Index(shape_.hidden) * shape_.state_dim, shape_.hidden) = d_pre;
    return grad;
  }

  /// Draws every head with one uniform each (fixed draw count per call), then
  /// canonicalizes. The kind head is already renormalized over legal kinds.
  WorldAction sample(const WorldState& s, Rng& rng) const {
    const Heads hd = heads(s);
    std::array<int, 5> pick{};
    for (int h = 0; h < 5; ++h) pick[h] = inverse_cdf(hd.probs[h], rng.uniform());
    WorldAction a;
    a.kind = static_cast<WorldKind>(pick[0]);
    a.side = pick[1];
    a.price_offset = pick[2] - shape_.price_half_range;
    a.size_bucket = pick[3];
    a.cancel_slot = pick[4];
    return a.canonical();
  }

  /// Every canonical action legal in `s` (for normalization checks).
  std::vector<WorldAction> enumerate_actions(const WorldState& s) const {
    std::vector<WorldAction> out;
    out.push_back(WorldAction::hold());
    for (int side = 0; side < 2; ++side)
      for (int sz = 0; sz < shape_.size_buckets; ++sz) out.push_back(WorldAction::market(side, sz));
    for (int side = 0; side < 2; ++side)
      for (int off = -shape_.price_half_range; off <= shape_.price_half_range; ++off)
        for (int sz = 0; sz < shape_.size_buckets; ++sz) out.push_back(WorldAction::limit(side, off, sz));
    const int slots = std::min(s.n_resting, shape_.cancel_slots);
    for (int k = 0; k < slots; ++k) out.push_back(WorldAction::cancel(k));
    return out;
  }

  friend bool operator==(const WorldPolicyT& a, const WorldPolicyT& b) {
    return a.shape_ == b.shape_ && a.theta_.size() == b.theta_.size() && a.theta_ == b.theta_;
  }

private:
  auto w1() const {
    return Eigen::Map<const Matrix>(theta_.data(), shape_.hidden, shape_.state_dim);
  }
  auto b1() const { return theta_.segment(Eigen::Index(shape_.hidden) * shape_.state_dim, shape_.hidden); }
  auto head_w(int h) const {
    return Eigen::Map<const Matrix>(theta_.data() + head_offset(h), shape_.head_sizes()[h], shape_.hidden);
  }
  auto head_b(int h) const {
    const int c = shape_.head_sizes()[h];
    return theta_.segment(head_offset(h) + Eigen::Index(c) * shape_.hidden, c);
  }

  // Legal classes of head h: the kind head drops cancel and the slot head
  // keeps only existing resting orders when the agent has fewer than C.
  static std::vector<bool> legal_mask(int h, int size, int n_resting) {
    std::vector<bool> mask(static_cast<std::size_t>(size), true);
    if (h == 0 && n_resting <= 0) mask[static_cast<std::size_t>(WorldKind::Cancel)] = false;
    if (h == 4 && n_resting > 0)
      for (int i = n_resting; i < size; ++i) mask[static_cast<std::size_t>(i)] = false;
    return mask;
  }

  static Vector masked_softmax(const Vector& logits, const std::vector<bool>& mask) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < logits.size(); ++i)
      if (mask[static_cast<std::size_t>(i)]) m = std::max(m, logits[i]);
    Vector p = Vector::Zero(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i)
      if (mask[static_cast<std::size_t>(i)]) p[i] = std::exp(logits[i] - m);
    return p / p.sum();
  }

  void check_state(const WorldState& s) const {
    if (static_cast<int>(s.features.size()) != shape_.state_dim)
      throw Error(Errc::ConfigError, "world state dimension does not match the policy");
  }

  WorldAction checked(const WorldState& s, const WorldAction& a) const {
    const WorldAction c = a.canonical();
    switch (c.kind) {
      case WorldKind::Cancel:
        if (s.n_resting <= 0) throw Error(Errc::IllegalAction, "cancel with no resting orders");
        if (c.cancel_slot < 0 || c.cancel_slot >= std::min(s.n_resting, shape_.cancel_slots))
          throw Error(Errc::IllegalAction, "cancel slot out of range");
        break;
      case WorldKind::Limit:
        if (c.price_offset < -shape_.price_half_range || c.price_offset > shape_.price_half_range)
          throw Error(Errc::IllegalAction, "price offset out of range");
        [[fallthrough]];
      case WorldKind::Market:
        if (c.size_bucket < 0 || c.size_bucket >= shape_.size_buckets)
          throw Error(Errc::IllegalAction, "size bucket out of range");
        if (c.side < 0 || c.side > 1) throw Error(Errc::IllegalAction, "side out of range");
        break;
      case WorldKind::Hold: break;
    }
    return c;
  }

  std::vector<std::pair<int, int>> used_heads(const WorldAction& c) const {
    std::vector<std::pair<int, int>> used{{0, static_cast<int>(c.kind)}};
    if (c.kind == WorldKind::Limit || c.kind == WorldKind::Market) {
      used.emplace_back(1, c.side);
      used.emplace_back(3, c.size_bucket);
    }
    if (c.kind == WorldKind::Limit) used.emplace_back(2, c.price_offset + shape_.price_half_range);
    if (c.kind == WorldKind::Cancel) used.emplace_back(4, c.cancel_slot);
    return used;
  }

  static int inverse_cdf(const Vector& p, double u) {
    Scalar acc(0);
    int last = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] <= Scalar(0)) continue;
      last = static_cast<int>(i);
      acc += p[i];
      if (u < acc) return last;
    }
    return last;
  }

  WorldPolicyShape shape_;
  Vector theta_;
};

using WorldPolicy = WorldPolicyT<double>;

void write_policy(std::ostream& os, const WorldPolicy& policy, std::uint64_t seed);
WorldPolicy read_policy(std::istream& is, std::uint64_t* seed = nullptr);

}  // namespace icsim
