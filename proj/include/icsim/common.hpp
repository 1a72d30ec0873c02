#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icsim {

enum class Errc {
  InvalidOrder,
  UnknownTarget,
  SelfReference,
  EmptySide,
  NotLimit,
  IllegalAction,
  ConfigError,
  IndexBeyondRealizedTau,
  IllegalForcedAction,
  IncompleteRollout,
  NoTreatedSteps,
  DegeneratePropensity,
  Separable,
  TooFewSamples,
  Empty,
  PoolTooSmall,
  AllFeedbackDropped,
  NaNGradient,
  ParseError,
  IoError,
};

std::string_view to_string(Errc code);

/// Library-wide exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

/// Seeded engine used everywhere a draw is needed. The engine state is the
/// only stream cursor: distributions are constructed per draw so copying or
/// serializing the engine captures the whole random state.
class Rng {
public:
  using Engine = std::mt19937_64;

  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  std::int64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t next_u64() { return engine_(); }

  Engine& engine() { return engine_; }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
  Engine engine_;
};

/// Derives an independent child seed from (master, stream, index) with a
/// splitmix64 finalizer, so derived streams never depend on draw order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

/// Shortest text that parses back to the same double ("%.17g").
std::string format_double(double x);

/// First line of every CSV export.
std::string csv_metadata_line(std::uint64_t seed);

/// Parses a `# schema-version=1 seed=N` line; throws ParseError otherwise.
std::uint64_t parse_csv_metadata_line(const std::string& line);

/// Splits one CSV line on commas (exports never quote fields).
std::vector<std::string> split_csv(const std::string& line);

}  // namespace icsim
