#include "icsim/common.hpp"

#include <charconv>
#include <cstdio>

namespace icsim {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidOrder: return "InvalidOrder";
    case Errc::UnknownTarget: return "UnknownTarget";
    case Errc::SelfReference: return "SelfReference";
    case Errc::EmptySide: return "EmptySide";
    case Errc::NotLimit: return "NotLimit";
    case Errc::IllegalAction: return "IllegalAction";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IndexBeyondRealizedTau: return "IndexBeyondRealizedTau";
    case Errc::IllegalForcedAction: return "IllegalForcedAction";
    case Errc::IncompleteRollout: return "IncompleteRollout";
    case Errc::NoTreatedSteps: return "NoTreatedSteps";
    case Errc::DegeneratePropensity: return "DegeneratePropensity";
    case Errc::Separable: return "Separable";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::Empty: return "Empty";
    case Errc::PoolTooSmall: return "PoolTooSmall";
    case Errc::AllFeedbackDropped: return "AllFeedbackDropped";
    case Errc::NaNGradient: return "NaNGradient";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ stream) ^ index);
}

std::string format_double(double x) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {
constexpr int kCsvSchemaVersion = 1;
}

std::string csv_metadata_line(std::uint64_t seed) {
  return "# schema-version=" + std::to_string(kCsvSchemaVersion) + " seed=" + std::to_string(seed);
}

std::uint64_t parse_csv_metadata_line(const std::string& line) {
  const std::string prefix = "# schema-version=" + std::to_string(kCsvSchemaVersion) + " seed=";
  if (line.rfind(prefix, 0) != 0) throw Error(Errc::ParseError, "missing or unsupported CSV metadata line");
  std::uint64_t seed = 0;
  const char* first = line.data() + prefix.size();
  const char* last = line.data() + line.size();
  auto [ptr, ec] = std::from_chars(first, last, seed);
  if (ec != std::errc() || ptr != last) throw Error(Errc::ParseError, "bad seed in CSV metadata line");
  return seed;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace icsim
