#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace patchmem::diff {

struct Hunk {
  std::string file;  // new-side path without a/ b/ prefix; empty for bare hunks
  int old_start = 0;
  int old_count = 0;
  int new_start = 0;
  int new_count = 0;
  std::vector<std::string> lines;  // body lines including the ' ', '-', '+' marker

  std::string text() const;  // "@@ ... @@" header plus body
  std::vector<std::string> removed() const;
  std::vector<std::string> added() const;
};

struct FileDiff {
  std::string old_path;
  std::string new_path;
  std::vector<Hunk> hunks;
};

/// Parses unified-diff text (plain, git-style, or bare "@@" hunks).
/// Throws Error(InvariantViolation) when the text is not a well-formed diff
/// with at least one hunk.
std::vector<FileDiff> parse(std::string_view text);

bool is_unified_diff(std::string_view text) noexcept;

std::vector<Hunk> hunks(std::string_view text);

std::vector<std::string> touched_files(std::string_view text);

/// One-line summary of a side of a hunk: the first non-blank changed line.
std::string summarize(const std::vector<std::string>& side_lines);

}  // namespace patchmem::diff
