#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace patchmem {

struct VisitedRange {
  std::string file;
  int line_start = 0;
  int line_end = 0;

  bool operator==(const VisitedRange&) const = default;
};

/// Character budgets of the three template fields.
struct CompressionBudget {
  std::size_t visited = 1200;
  std::size_t applied_hunks = 4000;
  std::size_t failure_log = 2600;

  /// Upper bound on CompressedContext::render().size().
  std::size_t total() const;
  /// Splits `total` across the fields. Throws Error(BadArguments) when it
  /// cannot hold the template headers plus a truncation marker per field.
  static CompressionBudget from_total(std::size_t total);
};

/// Hand-off summary from a failed attempt to the next one.
struct CompressedContext {
  std::vector<VisitedRange> visited;
  std::vector<std::string> applied_hunks;
  std::string failure_log;
  // Set when a field was shortened; the rendered text carries a marker too.
  bool visited_truncated = false;
  bool hunks_truncated = false;

  bool empty() const { return visited.empty() && applied_hunks.empty() && failure_log.empty(); }
  std::string render() const;
  nlohmann::json to_json() const;
};

struct SessionMetadata {
  std::vector<VisitedRange> visited;
  std::string applied_patch;  // unified diff of the failed attempt
};

inline constexpr const char* kVisitedHeader = "## visited files/line ranges\n";
inline constexpr const char* kHunksHeader = "## applied diff hunks\n";
inline constexpr const char* kFailureHeader = "## verification failure log\n";

/// Keeps the first ERROR:/FAILED/compiler-diagnostic line, up to 8 stack
/// frames and failing test names; the log tail when none of those exist.
std::string extract_failure(std::string_view raw_logs);

CompressedContext log_compress(std::string_view raw_logs, const SessionMetadata& metadata,
                               const CompressionBudget& budget = {});

}  // namespace patchmem
