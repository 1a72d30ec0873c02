#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icsim/common.hpp"
#include "icsim/kde.hpp"

namespace icsim {

// Sample sets are matrices whose rows are points; scalar feedbacks are
// column vectors.

enum class KernelKind : std::uint8_t { Gaussian, Linear };

struct KernelSpec {
  KernelKind kind = KernelKind::Gaussian;
  std::optional<double> bandwidth;  // empty: median heuristic over the pooled samples

  static KernelSpec gaussian(std::optional<double> sigma = std::nullopt) { return {KernelKind::Gaussian, sigma}; }
  static KernelSpec linear() { return {KernelKind::Linear, std::nullopt}; }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

enum class DistanceKind : std::uint8_t { MMD, ED, EMD };

std::string to_string(DistanceKind k);
std::string to_string(KernelKind k);
DistanceKind distance_kind_from_string(const std::string& s);
KernelKind kernel_kind_from_string(const std::string& s);

/// Median pairwise distance of xs ∪ ys, floored at kBandwidthFloor.
template <typename DX, typename DY>
typename DX::Scalar median_bandwidth(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys) {
  using Scalar = typename DX::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> pooled(xs.rows() + ys.rows(), xs.cols());
  pooled << xs, ys;
  const Scalar m = median_pairwise_distance(pooled);
  return m > Scalar(kBandwidthFloor) ? m : Scalar(kBandwidthFloor);
}

namespace detail {

template <typename A, typename B, typename Scalar>
Scalar kernel(const A& a, const B& b, KernelKind kind, Scalar sigma) {
  if (kind == KernelKind::Linear) return a.dot(b);
  return std::exp(-(a - b).squaredNorm() / (Scalar(2) * sigma * sigma));
}

// Mean of k over ordered pairs i != j within one set.
template <typename D, typename Scalar>
Scalar within_mean(const Eigen::MatrixBase<D>& s, KernelKind kind, Scalar sigma) {
  const Eigen::Index n = s.rows();
  Scalar sum(0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += kernel(s.row(i), s.row(j), kind, sigma);
  return Scalar(2) * sum / (Scalar(n) * Scalar(n - 1));
}

template <typename DX, typename DY, typename Scalar>
Scalar cross_mean(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys, KernelKind kind, Scalar sigma) {
  Scalar sum(0);
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < ys.rows(); ++j) sum += kernel(xs.row(i), ys.row(j), kind, sigma);
  return sum / (Scalar(xs.rows()) * Scalar(ys.rows()));
}

template <typename DX, typename DY>
void check_pair(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys) {
  if (xs.rows() < 2 || ys.rows() < 2) throw Error(Errc::TooFewSamples, "U-statistics need at least two samples per set");
  if (xs.cols() != ys.cols()) throw Error(Errc::ConfigError, "sample dimension mismatch");
}

}  // namespace detail

/// Unbiased MMD^2 U-statistic (diagonal terms excluded). May be negative.
template <typename DX, typename DY>
typename DX::Scalar mmd_u(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys, const KernelSpec& k) {
  using Scalar = typename DX::Scalar;
  detail::check_pair(xs, ys);
  Scalar sigma(1);
  if (k.kind == KernelKind::Gaussian) {
    sigma = k.bandwidth ? Scalar(*k.bandwidth) : median_bandwidth(xs, ys);
    if (!(sigma > Scalar(0))) throw Error(Errc::ConfigError, "kernel bandwidth must be positive");
  }
  return detail::within_mean(xs, k.kind, sigma) - Scalar(2) * detail::cross_mean(xs, ys, k.kind, sigma) +
         detail::within_mean(ys, k.kind, sigma);
}

/// Squared-distance U-statistic with the sign pattern of the MMD estimator:
/// within-set means minus twice the cross mean. Equals -2 * mmd_u(linear).
template <typename DX, typename DY>
typename DX::Scalar energy_distance(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys) {
  using Scalar = typename DX::Scalar;
  detail::check_pair(xs, ys);
  auto within = [](const auto& s) {
    const Eigen::Index n = s.rows();
    Scalar sum(0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) sum += (s.row(i) - s.row(j)).squaredNorm();
    return Scalar(2) * sum / (Scalar(n) * Scalar(n - 1));
  };
  Scalar cross(0);
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < ys.rows(); ++j) cross += (xs.row(i) - ys.row(j)).squaredNorm();
  cross /= Scalar(xs.rows()) * Scalar(ys.rows());
  return within(xs) - Scalar(2) * cross + within(ys);
}

/// 1-D Wasserstein-1 distance: integral of |F_x - F_y| over the merged support.
template <typename DX, typename DY>
typename DX::Scalar emd_1d(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys) {
  using Scalar = typename DX::Scalar;
  if (xs.size() == 0 || ys.size() == 0) throw Error(Errc::Empty, "EMD needs nonempty sample sets");
  if (xs.cols() != 1 || ys.cols() != 1) throw Error(Errc::ConfigError, "EMD is defined for scalar samples only");
  std::vector<Scalar> a(static_cast<std::size_t>(xs.rows()));
  std::vector<Scalar> b(static_cast<std::size_t>(ys.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) a[static_cast<std::size_t>(i)] = xs(i, 0);
  for (Eigen::Index i = 0; i < ys.rows(); ++i) b[static_cast<std::size_t>(i)] = ys(i, 0);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<Scalar> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  Scalar total(0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    while (ia < a.size() && a[ia] <= all[k]) ++ia;
    while (ib < b.size() && b[ib] <= all[k]) ++ib;
    const Scalar fa = Scalar(ia) / Scalar(a.size());
    const Scalar fb = Scalar(ib) / Scalar(b.size());
    total += std::abs(fa - fb) * (all[k + 1] - all[k]);
  }
  return total;
}

template <typename DX, typename DY>
typename DX::Scalar distance(const Eigen::MatrixBase<DX>& xs, const Eigen::MatrixBase<DY>& ys, DistanceKind d,
                             const KernelSpec& k) {
  switch (d) {
    case DistanceKind::MMD: return mmd_u(xs, ys, k);
    case DistanceKind::ED: return energy_distance(xs, ys);
    case DistanceKind::EMD: return emd_1d(xs, ys);
  }
  return 0;
}

/// Linear-interpolation quantile (type 7) of unsorted values.
double quantile(std::vector<double> values, double q);

struct EnvelopeRow {
  int n = 0;
  double mean = 0.0;
  double q5 = 0.0;
  double q95 = 0.0;

  friend bool operator==(const EnvelopeRow&, const EnvelopeRow&) = default;
};

struct MetricReport {
  DistanceKind kind = DistanceKind::MMD;
  double value = 0.0;
  Eigen::Index n_world = 0;
  Eigen::Index n_real = 0;
  std::optional<EnvelopeRow> bootstrap;
};

/// D_f between world and real feedback sets.
MetricReport d_metric(const Eigen::VectorXd& world, const Eigen::VectorXd& real, DistanceKind d, const KernelSpec& k);

/// Draws `n` distinct indices of [0, pool) by a partial Fisher-Yates shuffle.
std::vector<Eigen::Index> subsample_indices(Eigen::Index pool, Eigen::Index n, Rng& rng);

inline const std::vector<int> kDefaultEnvelopeNs{2, 3, 5, 7, 10, 20, 30, 40, 50};

/// For each N: `reps` draws of N samples without replacement from each pool,
/// d̂ on every draw, then mean and 5%/95% quantiles.
std::vector<EnvelopeRow> bootstrap_envelope(const Eigen::VectorXd& pool_a, const Eigen::VectorXd& pool_b,
                                            const std::vector<int>& ns, int reps, DistanceKind d, const KernelSpec& k,
                                            std::uint64_t seed);

struct EnvelopeTable {
  std::string comparison;  // world_vs_real or real_vs_real
  std::vector<EnvelopeRow> rows;
};

void write_envelope_csv(std::ostream& os, const std::vector<EnvelopeTable>& tables, DistanceKind d,
                        const std::string& feedback_kind, std::uint64_t seed);

}  // namespace icsim
