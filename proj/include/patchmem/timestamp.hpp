#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace patchmem {

/// Time key derived from a CVE identifier: (year, sequence), ordered
/// lexicographically.
struct CveTimestamp {
  std::int64_t year = 0;
  std::int64_t sequence = 0;

  auto operator<=>(const CveTimestamp&) const = default;

  std::string to_string() const;
};

/// Year used for entries whose instance id carries no CVE segment. It sorts
/// after every real CVE year, with the ingestion order as the sequence.
inline constexpr std::int64_t kFallbackYear = 1'000'000;

/// Extracts the first `cve-YYYY-NNNN` segment (case-insensitive, 4-digit year,
/// at least one sequence digit).
std::optional<CveTimestamp> parse_timestamp(std::string_view instance_id);

}  // namespace patchmem
