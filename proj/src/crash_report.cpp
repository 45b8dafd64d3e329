#include <cctype>
#include <charconv>

#include "patchmem/localizer.hpp"
#include "patchmem/text.hpp"

namespace patchmem {
namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

// "path:line" or "path:line:col"; returns false when no line number.
bool split_location(std::string_view loc, std::string& file, int& line) {
  auto last = loc.rfind(':');
  if (last == std::string_view::npos) return false;
  int a = 0;
  if (!parse_int(loc.substr(last + 1), a)) return false;
  auto head = loc.substr(0, last);
  auto prev = head.rfind(':');
  int b = 0;
  if (prev != std::string_view::npos && parse_int(head.substr(prev + 1), b)) {
    file = std::string(head.substr(0, prev));
    line = b;
  } else {
    file = std::string(head);
    line = a;
  }
  return !file.empty() && line > 0;
}

struct RawFrame {
  int index = -1;
  std::optional<StackFrame> frame;
};

// "#3 0x55d0c1 in func(args) /src/a.c:45:7"
std::optional<RawFrame> parse_frame_line(std::string_view line) {
  auto t = text::trim(line);
  if (!t.starts_with("#")) return std::nullopt;
  std::size_t p = 1;
  while (p < t.size() && std::isdigit(static_cast<unsigned char>(t[p]))) ++p;
  if (p == 1 || p >= t.size() || !std::isspace(static_cast<unsigned char>(t[p]))) return std::nullopt;
  RawFrame raw;
  parse_int(t.substr(1, p - 1), raw.index);
  auto rest = text::trim(t.substr(p));
  if (rest.starts_with("0x")) {
    auto sp = rest.find_first_of(" \t");
    rest = sp == std::string_view::npos ? std::string_view{} : text::trim(rest.substr(sp));
  }
  if (!rest.starts_with("in ")) return raw;
  rest = text::trim(rest.substr(3));
  auto sp = rest.find_last_of(" \t");
  if (sp == std::string_view::npos) return raw;
  auto location = rest.substr(sp + 1);
  if (location.starts_with("(")) return raw;  // "(module+0x1234)"
  StackFrame f;
  if (!split_location(location, f.file, f.line)) return raw;
  f.function = std::string(text::trim(rest.substr(0, sp)));
  raw.frame = std::move(f);
  return raw;
}

std::string fault_kind_of(std::string_view line) {
  auto pos = line.find("ERROR: ");
  if (pos == std::string_view::npos) return {};
  auto rest = line.substr(pos + 7);
  auto colon = rest.find(": ");
  if (colon == std::string_view::npos || !text::contains(rest.substr(0, colon), "Sanitizer")) return {};
  rest = text::trim(rest.substr(colon + 2));
  std::size_t e = 0;
  while (e < rest.size() && (std::isalnum(static_cast<unsigned char>(rest[e])) || rest[e] == '-' || rest[e] == '_'))
    ++e;
  auto kind = std::string(rest.substr(0, e));
  if (kind == "detected") return "memory-leak";
  return kind;
}

}  // namespace

std::optional<CrashReport> parse_crash_report(std::string_view report_text) {
  CrashReport report;
  report.raw = std::string(report_text);
  int previous = -1;
  bool in_stack = false;
  bool done = false;
  for (auto line : text::split_lines(report_text)) {
    if (report.fault_kind.empty()) report.fault_kind = fault_kind_of(line);
    if (done) continue;
    auto raw = parse_frame_line(line);
    if (!raw) {
      // A blank or prose line after frames ends the first stack.
      if (in_stack && !report.frames.empty()) done = true;
      continue;
    }
    if (in_stack && raw->index <= previous) {
      done = true;
      continue;
    }
    in_stack = true;
    previous = raw->index;
    if (raw->frame) report.frames.push_back(std::move(*raw->frame));
  }
  if (report.frames.empty()) return std::nullopt;
  return report;
}

}  // namespace patchmem
