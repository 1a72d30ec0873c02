#include "icsim/world_policy.hpp"

#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

namespace icsim {

WorldAction WorldAction::canonical() const {
  switch (kind) {
    case WorldKind::Limit: return WorldAction{kind, side, price_offset, size_bucket, 0};
    case WorldKind::Market: return WorldAction{kind, side, 0, size_bucket, 0};
    case WorldKind::Cancel: return WorldAction{kind, 0, 0, 0, cancel_slot};
    case WorldKind::Hold: return WorldAction{};
  }
  return WorldAction{};
}

Eigen::Index WorldPolicyShape::parameter_count() const {
  Eigen::Index n = Eigen::Index(hidden) * (state_dim + 1);
  for (int c : head_sizes()) n += Eigen::Index(c) * (hidden + 1);
  return n;
}

namespace {
constexpr int kPolicyFormatVersion = 1;
}

void write_policy(std::ostream& os, const WorldPolicy& policy, std::uint64_t seed) {
  const auto& sh = policy.shape();
  nlohmann::json header = {
      {"format", "icsim-world-policy"},
      {"version", kPolicyFormatVersion},
      {"seed", seed},
      {"shape",
       {{"state_dim", sh.state_dim},
        {"hidden", sh.hidden},
        {"price_half_range", sh.price_half_range},
        {"size_buckets", sh.size_buckets},
        {"cancel_slots", sh.cancel_slots}}},
      {"size", policy.theta().size()},
  };
  os << header.dump() << '\n';
  os.write(reinterpret_cast<const char*>(policy.theta().data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(policy.theta().size())));
  if (!os) throw Error(Errc::IoError, "failed to write policy");
}

WorldPolicy read_policy(std::istream& is, std::uint64_t* seed) {
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::ParseError, "missing policy header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("bad policy header: ") + e.what());
  }
  if (header.value("format", "") != "icsim-world-policy" || header.value("version", 0) != kPolicyFormatVersion)
    throw Error(Errc::ParseError, "unsupported policy format");
  WorldPolicyShape sh;
  const auto& js = header.at("shape");
  sh.state_dim = js.at("state_dim");
  sh.hidden = js.at("hidden");
  sh.price_half_range = js.at("price_half_range");
  sh.size_buckets = js.at("size_buckets");
  sh.cancel_slots = js.at("cancel_slots");
  const Eigen::Index n = header.at("size");
  if (n != sh.parameter_count()) throw Error(Errc::ParseError, "policy size does not match its shape");
  Eigen::VectorXd theta(n);
  is.read(reinterpret_cast<char*>(theta.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(n)));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(n)))
    throw Error(Errc::ParseError, "truncated policy payload");
  if (seed) *seed = header.at("seed");
  return WorldPolicy(sh, std::move(theta));
}

}  // namespace icsim
