#include "patchmem/compress.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <map>

#include "patchmem/diff.hpp"
#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem {
namespace {

constexpr std::string_view kVisitedMarker = "- [more ranges omitted]\n";
constexpr std::string_view kHunksMarker = "[more hunks omitted]\n";
constexpr std::size_t kMinField = 64;

std::size_t header_size() {
  return std::strlen(kVisitedHeader) + std::strlen(kHunksHeader) + std::strlen(kFailureHeader);
}

std::string range_line(const VisitedRange& r) {
  return "- " + r.file + ":" + std::to_string(r.line_start) + "-" + std::to_string(r.line_end) + "\n";
}

std::string with_newline(std::string s) {
  if (!s.empty() && s.back() != '\n') s += '\n';
  return s;
}

bool is_frame(std::string_view line, int& index) {
  auto t = text::trim(line);
  if (t.size() < 2 || t[0] != '#' || !std::isdigit(static_cast<unsigned char>(t[1]))) return false;
  index = 0;
  std::size_t p = 1;
  while (p < t.size() && std::isdigit(static_cast<unsigned char>(t[p]))) index = index * 10 + (t[p++] - '0');
  return p < t.size() && t[p] == ' ';
}

bool is_key_line(std::string_view line) {
  return text::contains(line, "ERROR:") || text::contains(line, "FAILED") || text::contains(line, ": error:") ||
         text::contains(line, ": fatal error:") || text::contains(line, "runtime error:");
}

std::vector<VisitedRange> merge_ranges(std::vector<VisitedRange> in) {
  std::stable_sort(in.begin(), in.end(), [](const VisitedRange& a, const VisitedRange& b) {
    return std::tie(a.file, a.line_start) < std::tie(b.file, b.line_start);
  });
  std::vector<VisitedRange> out;
  for (auto& r : in) {
    if (r.file.empty()) continue;
    if (r.line_end < r.line_start) std::swap(r.line_start, r.line_end);
    if (!out.empty() && out.back().file == r.file && r.line_start <= out.back().line_end + 1) {
      out.back().line_end = std::max(out.back().line_end, r.line_end);
    } else {
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

std::size_t CompressionBudget::total() const { return header_size() + visited + applied_hunks + failure_log; }

CompressionBudget CompressionBudget::from_total(std::size_t total) {
  const auto fixed = header_size();
  if (total < fixed + 3 * kMinField)
    throw Error(ErrorCode::BadArguments,
                "compression budget " + std::to_string(total) + " is below the minimum " +
                    std::to_string(fixed + 3 * kMinField));
  // every field gets the floor; the remainder splits 15/50/35
  const auto rest = total - fixed - 3 * kMinField;
  CompressionBudget b;
  b.visited = kMinField + rest * 15 / 100;
  b.applied_hunks = kMinField + rest * 50 / 100;
  b.failure_log = total - fixed - b.visited - b.applied_hunks;
  return b;
}

std::string CompressedContext::render() const {
  std::string out = kVisitedHeader;
  for (const auto& r : visited) out += range_line(r);
  if (visited_truncated) out += kVisitedMarker;
  out += kHunksHeader;
  for (const auto& h : applied_hunks) out += with_newline(h);
  if (hunks_truncated) out += kHunksMarker;
  out += kFailureHeader;
  out += with_newline(failure_log);
  return out;
}

nlohmann::json CompressedContext::to_json() const {
  auto v = nlohmann::json::array();
  for (const auto& r : visited) v.push_back({{"file", r.file}, {"line_start", r.line_start}, {"line_end", r.line_end}});
  return {{"visited", v}, {"applied_hunks", applied_hunks}, {"failure_log", failure_log}};
}

std::string extract_failure(std::string_view raw_logs) {
  const auto lines = text::split_lines(raw_logs);
  std::string out;
  std::size_t key = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_key_line(lines[i])) {
      key = i;
      break;
    }
  }
  if (key < lines.size()) {
    out += text::trim(lines[key]);
    out += '\n';
  }
  std::size_t frames = 0;
  int previous = -1;
  for (std::size_t i = key < lines.size() ? key + 1 : 0; i < lines.size() && frames < 8; ++i) {
    int idx = 0;
    if (!is_frame(lines[i], idx)) {
      if (frames > 0) break;
      continue;
    }
    if (frames > 0 && idx <= previous) break;
    previous = idx;
    out += "  ";
    out += text::trim(lines[i]);
    out += '\n';
    ++frames;
  }
  std::size_t failing = 0;
  for (auto l : lines) {
    auto t = text::trim(l);
    if (t.starts_with("SUMMARY:") && text::contains(t, "Sanitizer")) {
      out += t;
      out += '\n';
    } else if ((t.starts_with("FAIL:") || t.starts_with("not ok")) && failing < 8) {
      out += t;
      out += '\n';
      ++failing;
    }
  }
  if (out.empty() && !lines.empty()) {
    // Nothing recognizable: the tail is usually where the failure is.
    std::size_t from = lines.size() > 20 ? lines.size() - 20 : 0;
    for (std::size_t i = from; i < lines.size(); ++i) {
      out += lines[i];
      out += '\n';
    }
  }
  return out;
}

CompressedContext log_compress(std::string_view raw_logs, const SessionMetadata& metadata,
                               const CompressionBudget& budget) {
  if (budget.visited < kMinField || budget.applied_hunks < kMinField || budget.failure_log < kMinField)
    throw Error(ErrorCode::BadArguments, "each compression field needs at least " + std::to_string(kMinField) + " chars");
  CompressedContext ctx;

  const auto ranges = merge_ranges(metadata.visited);
  std::size_t used = 0;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    auto line = range_line(ranges[i]);
    const bool last = i + 1 == ranges.size();
    if (used + line.size() + (last ? 0 : kVisitedMarker.size()) > budget.visited) {
      ctx.visited_truncated = true;
      break;
    }
    used += line.size();
    ctx.visited.push_back(ranges[i]);
  }

  std::vector<std::string> hunks;
  if (!text::trim(metadata.applied_patch).empty()) {
    try {
      for (const auto& h : diff::hunks(metadata.applied_patch))
        hunks.push_back((h.file.empty() ? std::string() : "### " + h.file + "\n") + h.text());
    } catch (const Error&) {
      hunks.push_back(with_newline(metadata.applied_patch));
    }
  }
  used = 0;
  for (std::size_t i = 0; i < hunks.size(); ++i) {
    const bool last = i + 1 == hunks.size();
    if (used + hunks[i].size() + (last ? 0 : kHunksMarker.size()) <= budget.applied_hunks) {
      used += hunks[i].size();
      ctx.applied_hunks.push_back(hunks[i]);
      continue;
    }
    ctx.hunks_truncated = true;
    const auto room = budget.applied_hunks - std::min(budget.applied_hunks, used + kHunksMarker.size());
    if (room > 40) ctx.applied_hunks.push_back(text::cap_head(hunks[i], room - 1));
    break;
  }

  auto failure = extract_failure(raw_logs);
  if (failure.size() > budget.failure_log) failure = text::cap_head(failure, budget.failure_log - 1);
  ctx.failure_log = std::move(failure);
  return ctx;
}

}  // namespace patchmem
