#include "patchmem/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "patchmem/error.hpp"

namespace patchmem {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::InvalidSession: return "InvalidSession";
    case ErrorCode::CorruptMemoryFile: return "CorruptMemoryFile";
    case ErrorCode::EmbeddingUnavailable: return "EmbeddingUnavailable";
    case ErrorCode::IndexFailure: return "IndexFailure";
    case ErrorCode::NoMatch: return "NoMatch";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::OutsideWorkspace: return "OutsideWorkspace";
    case ErrorCode::BadPattern: return "BadPattern";
    case ErrorCode::AlreadyExists: return "AlreadyExists";
    case ErrorCode::AmbiguousMatch: return "AmbiguousMatch";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::SessionDead: return "SessionDead";
    case ErrorCode::SnapshotMissing: return "SnapshotMissing";
    case ErrorCode::OracleTimeout: return "OracleTimeout";
    case ErrorCode::BuildToolMissing: return "BuildToolMissing";
    case ErrorCode::InvalidOracle: return "InvalidOracle";
    case ErrorCode::GatewayExhausted: return "GatewayExhausted";
    case ErrorCode::MalformedToolCall: return "MalformedToolCall";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::LocalizationFailure: return "LocalizationFailure";
    case ErrorCode::EmptyPatch: return "EmptyPatch";
    case ErrorCode::UnreadableCorpus: return "UnreadableCorpus";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::BadArguments: return "BadArguments";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SyntaxError: return "SyntaxError";
  }
  return "Unknown";
}

namespace text {

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.starts_with(prefix); }
bool ends_with(std::string_view s, std::string_view suffix) { return s.ends_with(suffix); }
bool contains(std::string_view s, std::string_view needle) {
  return s.find(needle) != std::string_view::npos;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::string_view s) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%016llx",
                static_cast<unsigned long long>(fnv1a(s)),
                static_cast<unsigned long long>(fnv1a(s, 0x84222325cbf29ce4ULL)));
  return buf;
}

std::string cap_head_tail(std::string_view s, std::size_t max_chars) {
  if (s.size() <= max_chars) return std::string(s);
  std::string marker = "\n[... " + std::to_string(s.size()) + " chars, truncated ...]\n";
  if (marker.size() >= max_chars) return std::string(s.substr(0, max_chars));
  std::size_t keep = max_chars - marker.size();
  std::size_t head = keep / 2;
  std::size_t tail = keep - head;
  std::string out;
  out.reserve(max_chars);
  out.append(s.substr(0, head));
  out.append(marker);
  out.append(s.substr(s.size() - tail));
  return out;
}

std::string cap_head(std::string_view s, std::size_t max_chars) {
  if (s.size() <= max_chars) return std::string(s);
  static constexpr std::string_view kMarker = "\n[truncated]";
  if (kMarker.size() >= max_chars) return std::string(s.substr(0, max_chars));
  std::string out(s.substr(0, max_chars - kMarker.size()));
  out.append(kMarker);
  return out;
}

std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string_view::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

bool looks_binary(std::string_view bytes) {
  auto probe = bytes.substr(0, std::min<std::size_t>(bytes.size(), 8192));
  return probe.find('\0') != std::string_view::npos;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

}  // namespace text
}  // namespace patchmem
