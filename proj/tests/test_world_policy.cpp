#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "icsim/world_policy.hpp"

using namespace icsim;

namespace {

WorldState random_state(const WorldPolicyShape& shape, Rng& rng, int n_resting) {
  WorldState s;
  s.features.resize(static_cast<std::size_t>(shape.state_dim));
  for (auto& x : s.features) x = rng.normal();
  s.n_resting = n_resting;
  return s;
}

std::string key(const WorldAction& a) {
  std::ostringstream os;
  os << static_cast<int>(a.kind) << ':' << a.side << ':' << a.price_offset << ':' << a.size_bucket << ':'
     << a.cancel_slot;
  return os.str();
}

}  // namespace

TEST_CASE("zero parameters give uniform heads") {
  const WorldPolicyShape shape;
  const WorldPolicy p(shape);
  Rng rng(1);
  const WorldState s = random_state(shape, rng, 2);
  CHECK(p.log_prob(s, WorldAction::limit(1, -2, 1)) ==
        doctest::Approx(-std::log(4.0) - std::log(2.0) - std::log(7.0) - std::log(3.0)));
  CHECK(p.log_prob(s, WorldAction::cancel(1)) == doctest::Approx(-std::log(4.0) - std::log(2.0)));
  CHECK(p.log_prob(s, WorldAction::hold()) == doctest::Approx(-std::log(4.0)));
  // Without resting orders cancel is masked out of the kind head.
  const WorldState bare = random_state(shape, rng, 0);
  CHECK(p.log_prob(bare, WorldAction::hold()) == doctest::Approx(-std::log(3.0)));
  CHECK_THROWS_AS(p.log_prob(bare, WorldAction::cancel(0)), Error);
  CHECK_THROWS_AS(p.log_prob(s, WorldAction::cancel(3)), Error);  // only two resting orders
}

TEST_CASE("probabilities of all canonical actions sum to one") {
  const WorldPolicyShape shape;
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const WorldPolicy p = WorldPolicy::random(shape, 100 + static_cast<std::uint64_t>(trial), 0.5);
    const WorldState s = random_state(shape, rng, trial % 6);
    double total = 0.0;
    for (const auto& a : p.enumerate_actions(s)) total += std::exp(p.log_prob(s, a));
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("analytic score matches central finite differences") {
  const WorldPolicyShape shape{.state_dim = 8, .hidden = 5};
  Rng rng(3);
  WorldPolicy p = WorldPolicy::random(shape, 7, 0.7);
  const WorldState s = random_state(shape, rng, 3);
  for (const WorldAction& a : {WorldAction::limit(0, 2, 1), WorldAction::market(1, 2), WorldAction::cancel(2),
                               WorldAction::hold()}) {
    const Eigen::VectorXd g = p.log_prob_gradient(s, a);
    Eigen::VectorXd fd(g.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double keep = p.theta()[i];
      p.theta()[i] = keep + h;
      const double up = p.log_prob(s, a);
      p.theta()[i] = keep - h;
      const double down = p.log_prob(s, a);
      p.theta()[i] = keep;
      fd[i] = (up - down) / (2 * h);
    }
    CHECK((g - fd).norm() / std::max(1e-12, fd.norm()) < 1e-4);
  }
}

TEST_CASE("sampling frequencies agree with the density") {
  const WorldPolicyShape shape;
  Rng rng(4);
  const WorldPolicy p = WorldPolicy::random(shape, 9, 0.4);
  const WorldState s = random_state(shape, rng, 2);
  std::map<std::string, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[key(p.sample(s, rng))];
  // Pearson chi-square over all canonical actions; 3-sigma band on its mean.
  double chi2 = 0.0;
  const auto actions = p.enumerate_actions(s);
  for (const auto& a : actions) {
    const double expected = n * std::exp(p.log_prob(s, a));
    const double diff = counts[key(a)] - expected;
    chi2 += diff * diff / expected;
  }
  const double dof = static_cast<double>(actions.size() - 1);
  CHECK(chi2 < dof + 3 * std::sqrt(2 * dof));
}

TEST_CASE("zero parameters sample kinds uniformly") {
  const WorldPolicyShape shape;
  const WorldPolicy p(shape);
  Rng rng(5);
  const WorldState s = random_state(shape, rng, 1);
  std::array<int, 4> kinds{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++kinds[static_cast<std::size_t>(p.sample(s, rng).kind)];
  const double sd = std::sqrt(n * 0.25 * 0.75);
  for (int k : kinds) CHECK(std::abs(k - n / 4.0) < 3 * sd);
}

TEST_CASE("a saturated head always wins and fixed streams repeat") {
  const WorldPolicyShape shape;
  WorldPolicy p(shape);
  p.head_bias(0)[static_cast<int>(WorldKind::Market)] = 20.0;
  Rng rng(6);
  const WorldState s = random_state(shape, rng, 0);
  for (int i = 0; i < 10000; ++i) REQUIRE(p.sample(s, rng).kind == WorldKind::Market);
  Rng a(8);
  Rng b(8);
  CHECK(p.sample(s, a) == p.sample(s, b));
}

TEST_CASE("samples are canonical") {
  const WorldPolicyShape shape;
  const WorldPolicy p = WorldPolicy::random(shape, 1, 1.0);
  Rng rng(7);
  const WorldState s = random_state(shape, rng, 2);
  for (int i = 0; i < 1000; ++i) {
    const WorldAction a = p.sample(s, rng);
    CHECK(a == a.canonical());
    if (a.kind == WorldKind::Hold) CHECK(a == WorldAction::hold());
  }
}

TEST_CASE("policy binary round trip") {
  const WorldPolicyShape shape{.state_dim = 12, .hidden = 4};
  const WorldPolicy p = WorldPolicy::random(shape, 3, 0.3);
  std::stringstream ss;
  write_policy(ss, p, 77);
  std::uint64_t seed = 0;
  const WorldPolicy q = read_policy(ss, &seed);
  CHECK(q == p);
  CHECK(seed == 77);
  std::stringstream bad("not a policy");
  CHECK_THROWS_AS(read_policy(bad), Error);
}
