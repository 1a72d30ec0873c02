#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icsim/env.hpp"

namespace icsim {

/// JSON Lines: one line per exp step, each repeating the rollout metadata
/// (seed, env, horizon, complete) so any line is self-describing.
void write_rollout_jsonl(std::ostream& os, const Rollout& r);

/// Reads every rollout in a JSONL stream. A new rollout starts whenever the
/// metadata changes or the step index does not increase.
std::vector<Rollout> read_rollouts_jsonl(std::istream& is);

/// Per-event book and fact export used for plotting.
void write_snapshot_csv(std::ostream& os, std::span<const SnapshotRow> rows, std::uint64_t seed, int export_levels);

}  // namespace icsim
