#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "patchmem/embedding.hpp"
#include "patchmem/memory.hpp"

namespace patchmem {

/// "CWE-787", "cwe_787", "787" -> "CWE-787". Lists ("CWE-787;CWE-125")
/// keep the first element. Anything else, including "NVD-CWE-Other" and
/// the empty string, becomes "CWE-UNKNOWN".
std::string normalize_cwe(std::string_view raw);

struct CorpusRow {
  std::string project;
  std::string cwe;
  std::string language;
  std::string instance_id;
  std::string description;
  std::string fix_patch;

  /// L1 entry with the CWE normalized and language lower-cased. Throws
  /// Error(InvariantViolation) when the row does not make a valid entry.
  MemoryEntry to_entry() const;
};

inline const std::vector<std::string>& corpus_columns() {
  static const std::vector<std::string> cols{"project", "cwe", "language", "instance_id", "description", "fix_patch"};
  return cols;
}

struct CorpusRecord {
  int line = 0;  // first line of the record in the file
  CorpusRow row;
  std::string error;  // non-empty: the record could not be read
};

/// Reads CSV (header row) or JSON-lines. `columns` maps canonical names to
/// the file's header names; unmapped columns use their canonical name.
/// Throws Error(UnreadableCorpus) for unreadable files or a CSV header
/// lacking a required column.
std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path,
                                      const std::map<std::string, std::string>& columns = {});

/// RFC 4180 records with the line each starts on. Throws
/// Error(UnreadableCorpus) on an unterminated quote.
std::vector<std::pair<int, std::vector<std::string>>> parse_csv(std::string_view text);

struct IngestCounts {
  std::size_t inserted = 0;
  std::size_t merged = 0;
  std::size_t rejected = 0;
  std::vector<std::string> problems;  // "line N: reason"
};

IngestCounts ingest_corpus(const std::filesystem::path& path, MemoryStore& store, Embedder& embedder,
                           const std::map<std::string, std::string>& columns = {});

}  // namespace patchmem
