#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchmem/embedding.hpp"
#include "patchmem/timestamp.hpp"

namespace patchmem {

enum class Tier { L1, L2, L3 };

std::string_view to_string(Tier tier);
std::optional<Tier> parse_tier(std::string_view s);

/// Keys shared by all three tiers.
struct RetrievalKeys {
  std::string project;
  std::string cwe;  // "CWE-<digits>" or "CWE-UNKNOWN"
  std::string language;
  std::string instance_id;
  std::string description;

  bool operator==(const RetrievalKeys&) const = default;
};

bool is_valid_cwe(std::string_view cwe);

/// One memory record. Which payload fields are meaningful depends on `tier`:
///   L1: fix_patch
///   L2: fix_patch, rationale
///   L3: fail_patch, correction_delta, transition_insight (fix_patch optional)
struct MemoryEntry {
  Tier tier = Tier::L1;
  RetrievalKeys keys;
  std::string fix_patch;
  std::string rationale;
  std::string fail_patch;
  std::string correction_delta;
  std::string transition_insight;

  /// Throws Error(InvariantViolation) naming the first broken invariant.
  void validate() const;

  /// The patch text compared during deduplication.
  const std::string& patch_text() const {
    return tier == Tier::L3 ? fail_patch : fix_patch;
  }

  bool operator==(const MemoryEntry&) const = default;
};

enum class InsertOutcome { Inserted, Merged };

inline constexpr double kDedupThreshold = 0.95;

/// Three-tier experience store with a task counter driving recency pruning.
///
/// The retrieval log records, per entry, the task counter value at its last
/// retrieval (or insertion/merge). An entry is stale for a window `w` when
/// `task_counter - last_retrieved > w`, i.e. it was not touched during the
/// last `w` completed tasks.
///
/// Not synchronized; share it through SharedMemoryStore.
class MemoryStore {
 public:
  const std::vector<MemoryEntry>& tier(Tier t) const { return tiers_[index(t)]; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  const MemoryEntry* find(Tier t, std::string_view instance_id) const;

  /// Merges into an existing same-tier entry when both the description and
  /// patch cosine similarities exceed `threshold`, or when the instance id is
  /// already present; otherwise appends. Merging keeps the older entry and
  /// refreshes its recency.
  InsertOutcome insert(MemoryEntry entry, Embedder& embedder,
                       double threshold = kDedupThreshold);

  /// Removes L2/L3 entries not retrieved within the last `window` completed
  /// tasks. L1 is never pruned. Returns the number removed.
  std::size_t prune(std::int64_t window);

  void mark_retrieved(Tier t, std::string_view instance_id);
  void complete_task() { ++task_counter_; }
  std::int64_t task_counter() const { return task_counter_; }

  /// Tasks completed since the entry was last retrieved; nullopt if unknown.
  std::optional<std::int64_t> idle_tasks(Tier t, std::string_view instance_id) const;
  void set_idle_tasks(Tier t, std::string_view instance_id, std::int64_t idle);

  /// Parsed CVE timestamp, or a fallback after every real CVE timestamp in
  /// ingestion order.
  CveTimestamp timestamp_of(const MemoryEntry& entry) const;

  std::string to_jsonl() const;
  static MemoryStore from_jsonl(std::string_view jsonl);
  void save(const std::string& path) const;
  /// A missing file yields an empty store.
  static MemoryStore load(const std::string& path);

  /// Entry-wise equality, insensitive to order within a tier; ignores the
  /// retrieval log.
  bool same_entries(const MemoryStore& other) const;

 private:
  using EntryKey = std::pair<Tier, std::string>;

  static std::size_t index(Tier t) { return static_cast<std::size_t>(t); }
  void append(MemoryEntry entry, std::int64_t last_retrieved);

  std::array<std::vector<MemoryEntry>, 3> tiers_;
  std::map<EntryKey, std::int64_t> retrieval_log_;
  std::map<EntryKey, std::int64_t> fallback_seq_;
  std::int64_t task_counter_ = 0;
  std::int64_t next_fallback_seq_ = 0;
};

/// Single-writer / multi-reader wrapper around a store.
class SharedMemoryStore {
 public:
  SharedMemoryStore() = default;
  explicit SharedMemoryStore(MemoryStore store) : store_(std::move(store)) {}

  template <typename Fn>
  decltype(auto) read(Fn&& fn) const {
    std::shared_lock lock(mu_);
    return std::forward<Fn>(fn)(static_cast<const MemoryStore&>(store_));
  }

  template <typename Fn>
  decltype(auto) write(Fn&& fn) {
    std::unique_lock lock(mu_);
    return std::forward<Fn>(fn)(store_);
  }

  MemoryStore snapshot() const {
    std::shared_lock lock(mu_);
    return store_;
  }

 private:
  mutable std::shared_mutex mu_;
  MemoryStore store_;
};

// Consolidation of a successful repair session.

struct AttemptRecord {
  std::string patch;  // candidate diff against pristine; empty for EmptyPatch
  bool accepted = false;
};

struct SessionRecord {
  RetrievalKeys keys;
  bool succeeded = false;
  std::vector<AttemptRecord> attempts;  // chronological
  std::string rationale;                // empty: templated
  std::string correction_delta;         // post-application diff, last failure -> accepted
  std::string transition_insight;       // empty: templated from correction_delta

  /// Index of the last attempt that was verified and rejected (non-empty
  /// patch, not accepted), if any.
  std::optional<std::size_t> last_failed_verification() const;
  const AttemptRecord* accepted_attempt() const;
};

struct Consolidation {
  MemoryEntry l2;
  InsertOutcome l2_outcome = InsertOutcome::Inserted;
  std::optional<MemoryEntry> l3;
  std::optional<InsertOutcome> l3_outcome;
};

/// Template used when no model-written insight is available.
std::string templated_insight(std::string_view correction_delta);
std::string templated_rationale(const RetrievalKeys& keys, std::string_view accepted_patch);

/// Builds the L2 entry (and an L3 entry iff at least one candidate failed
/// verification before success) and inserts them.
/// Throws Error(InvalidSession) if the session did not succeed.
Consolidation consolidate_success(MemoryStore& store, Embedder& embedder,
                                  const SessionRecord& session);

}  // namespace patchmem
