#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "icsim/common.hpp"

namespace icsim {

inline constexpr double kBandwidthFloor = 1e-6;

/// Median of all pairwise Euclidean distances between rows of `samples`.
template <typename Derived>
typename Derived::Scalar median_pairwise_distance(const Eigen::MatrixBase<Derived>& samples) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> d;
  const Eigen::Index n = samples.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((samples.row(i) - samples.row(j)).norm());
  if (d.empty()) return Scalar(0);
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const Scalar upper = *mid;
  const Scalar lower = *std::max_element(d.begin(), mid);
  return (lower + upper) / Scalar(2);
}

/// Gaussian-kernel density estimate at `query`; rows of `samples` are points.
/// An empty `bandwidth` selects the median heuristic; a zero median (all
/// samples identical) falls back to kBandwidthFloor.
template <typename DerivedS, typename DerivedQ>
typename DerivedS::Scalar kde_log_density(const Eigen::MatrixBase<DerivedS>& samples,
                                          const Eigen::MatrixBase<DerivedQ>& query,
                                          std::optional<typename DerivedS::Scalar> bandwidth = std::nullopt) {
  using Scalar = typename DerivedS::Scalar;
  const Eigen::Index n = samples.rows();
  const Eigen::Index dim = samples.cols();
  if (n < 1) throw Error(Errc::TooFewSamples, "kde needs at least one sample");
  if (!bandwidth && n < 2) throw Error(Errc::TooFewSamples, "median bandwidth needs at least two samples");
  if (query.size() != dim) throw Error(Errc::ConfigError, "query dimension mismatch");
  Scalar h = bandwidth ? *bandwidth : median_pairwise_distance(samples);
  if (!(h > Scalar(0))) h = Scalar(kBandwidthFloor);

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_terms(n);
  for (Eigen::Index i = 0; i < n; ++i)
    log_terms[i] = -(samples.row(i) - query.transpose()).squaredNorm() / (Scalar(2) * h * h);
  const Scalar m = log_terms.maxCoeff();
  const Scalar lse = m + std::log((log_terms.array() - m).exp().sum());
  const Scalar log_norm = -Scalar(dim) * (std::log(h) + Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>));
  return lse - std::log(Scalar(n)) + log_norm;
}

/// Draws `n` actions from a generator A = G(z | S) with z ~ N(0, I_latent).
template <typename Generator>
Eigen::MatrixXd sample_generator(const Generator& g, Eigen::Index latent_dim, Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd out;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd z(latent_dim);
    for (Eigen::Index k = 0; k < latent_dim; ++k) z[k] = rng.normal();
    const Eigen::VectorXd a = g(z);
    if (i == 0) out.resize(n, a.size());
    out.row(i) = a.transpose();
  }
  return out;
}

}  // namespace icsim
