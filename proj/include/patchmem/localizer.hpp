#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchmem/cxx_scanner.hpp"

namespace patchmem {

struct StackFrame {
  std::string file;  // as printed in the report (usually absolute)
  int line = 0;
  std::string function;
};

/// Structured sanitizer report. frames[0] is the innermost frame.
struct CrashReport {
  std::vector<StackFrame> frames;
  std::string fault_kind;  // e.g. "heap-buffer-overflow"; empty if not stated
  std::string raw;
};

/// Extracts the first stack of an AddressSanitizer-style report
/// (`#N 0x... in func file:line[:col]`). Frames without a source location
/// are dropped. Returns nullopt when no located frame exists.
std::optional<CrashReport> parse_crash_report(std::string_view text);

struct SymbolSite {
  std::string file;  // repo-relative, '/' separated
  int line = 0;
  SiteKind kind = SiteKind::Use;
  std::string symbol;
  bool is_call = false;
  std::string param_of;  // owning function when the site is a parameter

  bool operator==(const SymbolSite&) const = default;
};

struct LocalizationObject {
  std::string file;
  int line_start = 0;
  int line_end = 0;
  int line = 0;  // the matched (critical) line
  std::string reason;
  int rank = 0;

  bool operator==(const LocalizationObject&) const = default;
};

/// A language front end: file extensions and a site extractor.
struct Grammar {
  std::string name;
  std::vector<std::string> extensions;  // lower-case, with leading '.'
  std::function<std::vector<cxx::ScannedSite>(std::string_view)> scan;
};

class GrammarRegistry {
 public:
  /// Registry with the C/C++ grammar.
  static GrammarRegistry with_defaults();

  void add(Grammar grammar);
  const Grammar* for_path(const std::filesystem::path& path) const;

 private:
  std::vector<Grammar> grammars_;
};

struct IndexOptions {
  bool parallel = true;
  std::uintmax_t max_file_bytes = 2 * 1024 * 1024;
  const GrammarRegistry* grammars = nullptr;  // null: defaults
};

/// Immutable symbol index of a repository snapshot.
class SymbolIndex {
 public:
  SymbolIndex() = default;

  /// All sites for `symbol`, sorted by (file, line, kind).
  std::vector<SymbolSite> sites_for(std::string_view symbol) const;
  std::size_t site_count() const;
  bool has_file(std::string_view file) const { return line_counts_.contains(std::string(file)); }
  int line_count(std::string_view file) const;
  std::vector<std::string> files() const;

  /// Files that failed to parse, with the reason; they contribute no sites.
  const std::vector<std::pair<std::string, std::string>>& diagnostics() const { return diagnostics_; }

  /// Adds one file's sites. Used by index_repository and by tests that build
  /// synthetic indexes.
  void add_file(const std::string& file, int line_count, const std::vector<SymbolSite>& sites);
  void add_diagnostic(std::string file, std::string reason);

  bool operator==(const SymbolIndex& other) const {
    return by_symbol_ == other.by_symbol_ && line_counts_ == other.line_counts_;
  }

 private:
  std::map<std::string, std::vector<SymbolSite>, std::less<>> by_symbol_;
  std::map<std::string, int, std::less<>> line_counts_;
  std::vector<std::pair<std::string, std::string>> diagnostics_;
};

/// Sites of one file: grammar scan when a grammar is registered for its
/// extension, lexical word matching (all uses) otherwise.
/// Throws Error(SyntaxError) from the grammar.
std::vector<SymbolSite> scan_file(const std::string& rel_path, std::string_view content,
                                  const GrammarRegistry& grammars);

/// Walks `root` (skipping .git, binary files and files over the size cap),
/// parsing files in parallel when requested. Throws Error(IndexFailure) when
/// root is unreadable.
SymbolIndex index_repository(const std::filesystem::path& root, const IndexOptions& options = {});

inline constexpr int kDefaultTopK = 5;
inline constexpr int kDefaultContextRadius = 10;

/// Index files that appear in the report's frames, mapped to the innermost
/// frame index mentioning them.
std::map<std::string, std::size_t> stack_files(const SymbolIndex& index, const CrashReport& report);

/// Structure-aware grep: all sites of `symbol` (plus call sites of functions
/// that take `symbol` as a parameter), ranked by
///   (in crash stack first, frame index, |line - frame line|,
///    definition before use, file, line)
/// and truncated to `k`. Without a report only the last three keys apply.
/// Throws Error(NoMatch) when the symbol has no sites.
std::vector<LocalizationObject> iter_grep(const SymbolIndex& index, std::string_view symbol,
                                          const std::optional<CrashReport>& report,
                                          int k = kDefaultTopK,
                                          int context_radius = kDefaultContextRadius);

}  // namespace patchmem
