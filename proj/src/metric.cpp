#include "icsim/metric.hpp"

#include <numeric>
#include <ostream>

namespace icsim {

std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::MMD: return "MMD";
    case DistanceKind::ED: return "ED";
    case DistanceKind::EMD: return "EMD";
  }
  return "?";
}

std::string to_string(KernelKind k) { return k == KernelKind::Gaussian ? "gaussian" : "linear"; }

DistanceKind distance_kind_from_string(const std::string& s) {
  if (s == "MMD") return DistanceKind::MMD;
  if (s == "ED") return DistanceKind::ED;
  if (s == "EMD") return DistanceKind::EMD;
  throw Error(Errc::ParseError, "unknown distance: " + s);
}

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "gaussian") return KernelKind::Gaussian;
  if (s == "linear") return KernelKind::Linear;
  throw Error(Errc::ParseError, "unknown kernel: " + s);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(Errc::Empty, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MetricReport d_metric(const Eigen::VectorXd& world, const Eigen::VectorXd& real, DistanceKind d, const KernelSpec& k) {
  if (world.size() == 0 || real.size() == 0) throw Error(Errc::Empty, "metric needs nonempty feedback sets");
  MetricReport r;
  r.kind = d;
  r.value = distance(world, real, d, k);
  r.n_world = world.size();
  r.n_real = real.size();
  return r;
}

std::vector<Eigen::Index> subsample_indices(Eigen::Index pool, Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pool));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = rng.uniform_int(i, pool - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(n));
  return idx;
}

std::vector<EnvelopeRow> bootstrap_envelope(const Eigen::VectorXd& pool_a, const Eigen::VectorXd& pool_b,
                                            const std::vector<int>& ns, int reps, DistanceKind d, const KernelSpec& k,
                                            std::uint64_t seed) {
  if (reps < 1) throw Error(Errc::ConfigError, "bootstrap needs at least one repetition");
  for (int n : ns)
    if (n > pool_a.size() || n > pool_b.size())
      throw Error(Errc::PoolTooSmall, "pool smaller than N = " + std::to_string(n));
  Rng rng(seed);
  std::vector<EnvelopeRow> out;
  for (int n : ns) {
    std::vector<double> draws;
    draws.reserve(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
      const Eigen::VectorXd a = pool_a(subsample_indices(pool_a.size(), n, rng));
      const Eigen::VectorXd b = pool_b(subsample_indices(pool_b.size(), n, rng));
      draws.push_back(distance(a, b, d, k));
    }
    const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / reps;
    out.push_back(EnvelopeRow{n, mean, quantile(draws, 0.05), quantile(draws, 0.95)});
  }
  return out;
}

void write_envelope_csv(std::ostream& os, const std::vector<EnvelopeTable>& tables, DistanceKind d,
                        const std::string& feedback_kind, std::uint64_t seed) {
  os << csv_metadata_line(seed) << '\n' << "d_hat,feedback_kind,N,mean,q5,q95,comparison\n";
  for (const auto& t : tables)
    for (const auto& r : t.rows)
      os << to_string(d) << ',' << feedback_kind << ',' << r.n << ',' << format_double(r.mean) << ','
         << format_double(r.q5) << ',' << format_double(r.q95) << ',' << t.comparison << '\n';
  if (!os) throw Error(Errc::IoError, "failed to write envelope CSV");
}

}  // namespace icsim
