#include "patchmem/diff.hpp"

#include <charconv>
#include <set>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem::diff {
namespace {

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::InvariantViolation,
              "malformed unified diff at line " + std::to_string(line_no) + ": " + why);
}

std::string strip_path(std::string_view p) {
  p = text::trim(p);
  if (auto tab = p.find('\t'); tab != std::string_view::npos) p = p.substr(0, tab);
  if (p == "/dev/null") return std::string(p);
  if (p.starts_with("a/") || p.starts_with("b/")) p.remove_prefix(2);
  return std::string(p);
}

bool parse_range(std::string_view s, int& start, int& count) {
  auto comma = s.find(',');
  auto first = s.substr(0, comma);
  if (std::from_chars(first.data(), first.data() + first.size(), start).ec != std::errc{}) return false;
  count = 1;
  if (comma != std::string_view::npos) {
    auto second = s.substr(comma + 1);
    if (std::from_chars(second.data(), second.data() + second.size(), count).ec != std::errc{})
      return false;
  }
  return start >= 0 && count >= 0;
}

// "@@ -a,b +c,d @@ optional section"
bool parse_hunk_header(std::string_view line, Hunk& h) {
  if (!line.starts_with("@@ -")) return false;
  auto rest = line.substr(4);
  auto space = rest.find(' ');
  if (space == std::string_view::npos) return false;
  if (!parse_range(rest.substr(0, space), h.old_start, h.old_count)) return false;
  rest = rest.substr(space + 1);
  if (!rest.starts_with("+")) return false;
  rest.remove_prefix(1);
  space = rest.find(' ');
  if (space == std::string_view::npos) return false;
  if (!parse_range(rest.substr(0, space), h.new_start, h.new_count)) return false;
  return rest.substr(space + 1).starts_with("@@");
}

}  // namespace

std::string Hunk::text() const {
  std::string out = "@@ -" + std::to_string(old_start) + "," + std::to_string(old_count) + " +" +
                    std::to_string(new_start) + "," + std::to_string(new_count) + " @@\n";
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

std::vector<std::string> Hunk::removed() const {
  std::vector<std::string> out;
  for (const auto& l : lines)
    if (!l.empty() && l[0] == '-') out.push_back(l.substr(1));
  return out;
}

std::vector<std::string> Hunk::added() const {
  std::vector<std::string> out;
  for (const auto& l : lines)
    if (!l.empty() && l[0] == '+') out.push_back(l.substr(1));
  return out;
}

std::vector<FileDiff> parse(std::string_view input) {
  auto lines = text::split_lines(input);
  std::vector<FileDiff> files;
  std::size_t i = 0;
  std::size_t total_hunks = 0;
  while (i < lines.size()) {
    auto line = lines[i];
    if (line.starts_with("--- ") && i + 1 < lines.size() && lines[i + 1].starts_with("+++ ")) {
      FileDiff fd;
      fd.old_path = strip_path(line.substr(4));
      fd.new_path = strip_path(lines[i + 1].substr(4));
      files.push_back(std::move(fd));
      i += 2;
      continue;
    }
    if (line.starts_with("@@")) {
      Hunk h;
      if (!parse_hunk_header(line, h)) malformed(i + 1, "bad hunk header");
      if (files.empty()) files.emplace_back();
      auto& fd = files.back();
      h.file = fd.new_path == "/dev/null" ? fd.old_path : fd.new_path;
      int old_seen = 0;
      int new_seen = 0;
      ++i;
      while (old_seen < h.old_count || new_seen < h.new_count) {
        if (i >= lines.size()) malformed(i, "hunk truncated");
        auto body = lines[i];
        char tag = body.empty() ? ' ' : body[0];
        switch (tag) {
          case ' ': ++old_seen; ++new_seen; break;
          case '-': ++old_seen; break;
          case '+': ++new_seen; break;
          case '\\': break;
          default: malformed(i + 1, "unexpected line inside hunk");
        }
        if (old_seen > h.old_count || new_seen > h.new_count) malformed(i + 1, "hunk overflows its header counts");
        h.lines.emplace_back(body.empty() ? std::string(" ") : std::string(body));
        ++i;
      }
      while (i < lines.size() && lines[i].starts_with("\\")) h.lines.emplace_back(lines[i++]);
      fd.hunks.push_back(std::move(h));
      ++total_hunks;
      continue;
    }
    // Preamble: diff --git, index, mode lines, commit text.
    ++i;
  }
  if (total_hunks == 0) throw Error(ErrorCode::InvariantViolation, "unified diff has no hunks");
  return files;
}

bool is_unified_diff(std::string_view text) noexcept {
  try {
    parse(text);
    return true;
  } catch (...) {
    return false;
  }
}

std::vector<Hunk> hunks(std::string_view text) {
  std::vector<Hunk> out;
  for (auto& fd : parse(text))
    for (auto& h : fd.hunks) out.push_back(std::move(h));
  return out;
}

std::vector<std::string> touched_files(std::string_view text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& fd : parse(text)) {
    auto name = fd.new_path == "/dev/null" ? fd.old_path : fd.new_path;
    if (!name.empty() && seen.insert(name).second) out.push_back(name);
  }
  return out;
}

std::string summarize(const std::vector<std::string>& side_lines) {
  for (const auto& l : side_lines) {
    auto t = text::trim(l);
    if (!t.empty()) return std::string(t);
  }
  return "(nothing)";
}

}  // namespace patchmem::diff
