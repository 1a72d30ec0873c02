#include <doctest.h>

#include <cmath>
#include <sstream>

#include "icsim/metric.hpp"

using namespace icsim;

namespace {

Eigen::MatrixXd col(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Eigen::MatrixXd random_set(Rng& rng, Eigen::Index n, Eigen::Index d, double shift = 0.0) {
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal() + shift;
  return m;
}

// Straight transcription of the three-term U-statistic, with an arbitrary kernel.
template <class K>
double u_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, K k) {
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if (i != j) xx += k(x.row(i), x.row(j));
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      if (i != j) yy += k(y.row(i), y.row(j));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) xy += k(x.row(i), y.row(j));
  return xx / (n * (n - 1)) + yy / (m * (m - 1)) - 2.0 * xy / (n * m);
}

}  // namespace

TEST_CASE("mmd on {0,1} against itself with unit bandwidth") {
  const auto s = col({0.0, 1.0});
  CHECK(mmd_u(s, s, KernelSpec::gaussian(1.0)) == doctest::Approx(std::exp(-0.5) - 1.0).epsilon(1e-12));
  CHECK(std::exp(-0.5) - 1.0 == doctest::Approx(-0.39347).epsilon(1e-4));
}

TEST_CASE("constant sets give zero") {
  const auto a = col({2.0, 2.0, 2.0});
  CHECK(mmd_u(a, a, KernelSpec::gaussian()) == 0.0);
  CHECK(energy_distance(a, a) == 0.0);
  CHECK(emd_1d(a, a) == 0.0);
}

TEST_CASE("emd examples") {
  CHECK(emd_1d(col({0.0}), col({1.0})) == 1.0);
  CHECK(emd_1d(col({0.0, 0.0}), col({0.0, 2.0})) == 1.0);
  CHECK_THROWS_AS(emd_1d(Eigen::MatrixXd(0, 1), col({1.0})), Error);
}

TEST_CASE("estimators match brute-force oracles") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 3;
    const auto x = random_set(rng, 2 + trial % 7, d);
    const auto y = random_set(rng, 2 + trial % 5, d, 0.5);
    const double sigma = 0.3 + 0.05 * trial;
    const double g = u_oracle(x, y, [&](const auto& a, const auto& b) {
      return std::exp(-(a - b).squaredNorm() / (2 * sigma * sigma));
    });
    CHECK(std::abs(mmd_u(x, y, KernelSpec::gaussian(sigma)) - g) < 1e-12);
    const double lin = u_oracle(x, y, [](const auto& a, const auto& b) { return a.dot(b); });
    CHECK(std::abs(mmd_u(x, y, KernelSpec::linear()) - lin) < 1e-12);
    const double ed = u_oracle(x, y, [](const auto& a, const auto& b) { return (a - b).squaredNorm(); });
    CHECK(std::abs(energy_distance(x, y) - ed) < 1e-12);
    CHECK(std::abs(energy_distance(x, y) + 2.0 * mmd_u(x, y, KernelSpec::linear())) < 1e-12);
  }
}

TEST_CASE("too few samples") {
  try {
    mmd_u(col({1.0}), col({1.0, 2.0}), KernelSpec::gaussian());
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewSamples);
  }
  CHECK_THROWS_AS(energy_distance(col({1.0, 2.0}), col({1.0})), Error);
}

TEST_CASE("symmetry, permutation invariance and the triangle inequality") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_set(rng, 6, 1);
    const auto y = random_set(rng, 4, 1, 1.0);
    const auto z = random_set(rng, 5, 1, -0.5);
    const KernelSpec k = KernelSpec::gaussian(0.8);
    CHECK(mmd_u(x, y, k) == doctest::Approx(mmd_u(y, x, k)).epsilon(1e-12));
    const Eigen::MatrixXd xr = x.colwise().reverse();
    CHECK(mmd_u(xr, y, k) == doctest::Approx(mmd_u(x, y, k)).epsilon(1e-12));
    CHECK(emd_1d(x, y) == doctest::Approx(emd_1d(y, x)).epsilon(1e-12));
    CHECK(emd_1d(x, y) >= 0.0);
    CHECK(emd_1d(x, z) <= emd_1d(x, y) + emd_1d(y, z) + 1e-12);
  }
}

TEST_CASE("median bandwidth is scale equivariant") {
  Rng rng(13);
  const auto x = random_set(rng, 9, 2);
  const auto y = random_set(rng, 7, 2, 1.0);
  const Eigen::MatrixXd x2 = 2.0 * x;
  const Eigen::MatrixXd y2 = 2.0 * y;
  CHECK(median_bandwidth(x2, y2) == doctest::Approx(2.0 * median_bandwidth(x, y)).epsilon(1e-12));
  CHECK(median_bandwidth(col({1.0, 2.0}), col({3.0})) == 1.0);
}

TEST_CASE("d_metric records sample sizes and is pure") {
  Rng rng(14);
  const Eigen::VectorXd w = random_set(rng, 5, 1);
  const Eigen::VectorXd r = random_set(rng, 100, 1);
  const MetricReport a = d_metric(w, r, DistanceKind::MMD, KernelSpec::gaussian());
  const MetricReport b = d_metric(w, r, DistanceKind::MMD, KernelSpec::gaussian());
  CHECK(a.value == b.value);
  CHECK(a.n_world == 5);
  CHECK(a.n_real == 100);
  CHECK_THROWS_AS(d_metric(Eigen::VectorXd(0), r, DistanceKind::MMD, KernelSpec::gaussian()), Error);
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.5) == 2.5);
  CHECK(quantile({1.0, 2.0}, 0.05) == doctest::Approx(1.05));
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
}

TEST_CASE("subsample indices are distinct and in range") {
  Rng rng(15);
  const auto idx = subsample_indices(20, 20, rng);
  std::vector<int> seen(20, 0);
  for (auto i : idx) ++seen[static_cast<std::size_t>(i)];
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("bootstrap envelopes") {
  Rng rng(16);
  const Eigen::VectorXd pool = random_set(rng, 200, 1);
  SUBCASE("same pool stays near zero") {
    const auto rows = bootstrap_envelope(pool, pool, kDefaultEnvelopeNs, 50, DistanceKind::MMD, KernelSpec::gaussian(), 3);
    REQUIRE(rows.size() == kDefaultEnvelopeNs.size());
    for (const auto& row : rows) {
      CHECK(row.q5 <= row.mean);
      CHECK(row.mean <= row.q95);
      CHECK(row.q5 <= 0.0);
      CHECK(row.q95 >= 0.0);
    }
    CHECK(std::abs(rows.back().mean) < 0.05);
  }
  SUBCASE("degenerate pools give a zero envelope") {
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(200, 1.5);
    for (const auto& row : bootstrap_envelope(c, c, {2, 5}, 10, DistanceKind::MMD, KernelSpec::gaussian(), 1))
      CHECK(row == EnvelopeRow{row.n, 0.0, 0.0, 0.0});
  }
  SUBCASE("recomputation with the same seed matches; a different seed does not") {
    const Eigen::VectorXd other = random_set(rng, 200, 1, 0.3);
    const auto a = bootstrap_envelope(pool, other, {3, 10}, 50, DistanceKind::ED, {}, 99);
    const auto b = bootstrap_envelope(pool, other, {3, 10}, 50, DistanceKind::ED, {}, 99);
    const auto c = bootstrap_envelope(pool, other, {3, 10}, 50, DistanceKind::ED, {}, 100);
    CHECK(a == b);
    CHECK_FALSE(a == c);
  }
  SUBCASE("single cell") {
    const auto rows = bootstrap_envelope(pool, pool, {2}, 1, DistanceKind::EMD, {}, 1);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].q5 == rows[0].q95);
  }
  SUBCASE("pool too small") {
    try {
      bootstrap_envelope(pool.head(10), pool, {20}, 5, DistanceKind::MMD, KernelSpec::gaussian(), 1);
      FAIL("expected PoolTooSmall");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::PoolTooSmall);
    }
  }
}

TEST_CASE("envelope csv layout") {
  std::ostringstream os;
  write_envelope_csv(os, {{"world_vs_real", {{5, 0.25, 0.125, 0.5}}}, {"real_vs_real", {{5, 0.0, -0.5, 0.5}}}},
                     DistanceKind::MMD, "Mkt2NextReturn", 7);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line.rfind('#', 0) == 0);
  std::getline(is, line);
  CHECK(line == "d_hat,feedback_kind,N,mean,q5,q95,comparison");
  std::getline(is, line);
  CHECK(line == "MMD,Mkt2NextReturn,5,0.25,0.125,0.5,world_vs_real");
  std::getline(is, line);
  CHECK(line == "MMD,Mkt2NextReturn,5,0,-0.5,0.5,real_vs_real");
}
