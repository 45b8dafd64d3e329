#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "patchmem/embedding.hpp"
#include "patchmem/memory.hpp"

namespace patchmem {

/// P1: same project, CWE and language. P2: other project, same CWE and language.
enum class Priority { P1 = 1, P2 = 2 };

std::string_view to_string(Priority p);

inline constexpr int kDefaultMinCandidates = 2;
inline constexpr int kDefaultTopN = 4;

struct Query {
  RetrievalKeys keys;
  int k_min = kDefaultMinCandidates;
  int top_n = kDefaultTopN;

  void validate() const;
};

struct RankedEntry {
  MemoryEntry entry;
  double similarity = 0.0;
  Priority priority = Priority::P1;
  CveTimestamp timestamp;
};

/// Two-tier priority retrieval.
///
/// Candidates always share the query's CWE and language and never its
/// instance id. P1 candidates (same project) must strictly predate the query;
/// P2 candidates join only when fewer than `k_min` P1 candidates survive.
/// Output is ordered by (priority, similarity desc, newer timestamp,
/// instance id) and truncated to `top_n`.
///
/// With `query_text_override` the override is embedded instead of the query
/// description, and L3 candidates are compared by their fail_patch.
std::vector<RankedEntry> retrieve(const MemoryStore& store, Tier tier, const Query& query,
                                  Embedder& embedder,
                                  std::optional<std::string_view> query_text_override = std::nullopt);

/// Timestamp used for the query side of the temporal filter. Ids without a
/// CVE segment sort after everything, so the filter admits every candidate.
CveTimestamp query_timestamp(std::string_view instance_id);

}  // namespace patchmem
