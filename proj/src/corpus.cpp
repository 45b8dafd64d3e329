#include "patchmem/corpus.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem {

std::string normalize_cwe(std::string_view raw) {
  auto s = text::trim(raw);
  auto cut = s.find_first_of(";,| ");
  if (cut != std::string_view::npos) s = s.substr(0, cut);
  auto lower = text::to_lower(s);
  std::string_view digits = lower;
  if (digits.starts_with("cwe")) {
    digits.remove_prefix(3);
    if (!digits.empty() && (digits[0] == '-' || digits[0] == '_' || digits[0] == ':')) digits.remove_prefix(1);
  }
  if (digits.empty() || digits.size() > 9) return "CWE-UNKNOWN";
  for (char c : digits)
    if (!std::isdigit(static_cast<unsigned char>(c))) return "CWE-UNKNOWN";
  return "CWE-" + std::string(digits);
}

MemoryEntry CorpusRow::to_entry() const {
  MemoryEntry e;
  e.tier = Tier::L1;
  e.keys.project = std::string(text::trim(project));
  e.keys.cwe = normalize_cwe(cwe);
  e.keys.language = text::to_lower(text::trim(language));
  e.keys.instance_id = std::string(text::trim(instance_id));
  e.keys.description = std::string(text::trim(description));
  e.fix_patch = fix_patch;
  if (e.keys.project.empty()) throw Error(ErrorCode::InvariantViolation, "project is empty");
  if (e.keys.language.empty()) throw Error(ErrorCode::InvariantViolation, "language is empty");
  e.validate();
  return e;
}

std::vector<std::pair<int, std::vector<std::string>>> parse_csv(std::string_view s) {
  std::vector<std::pair<int, std::vector<std::string>>> out;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  int line = 1;
  int record_line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    bool blank = record.size() == 1 && record[0].empty();
    if (!blank) out.emplace_back(record_line, std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') {
      // handled by '\n'
    } else if (c == '\n') {
      end_record();
      ++line;
      record_line = line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::UnreadableCorpus, "unterminated quoted field starting on line " + std::to_string(record_line));
  if (field_started || !record.empty()) end_record();
  return out;
}

namespace {

std::string header_for(const std::map<std::string, std::string>& columns, const std::string& canonical) {
  auto it = columns.find(canonical);
  return it == columns.end() ? canonical : it->second;
}

void assign(CorpusRow& row, const std::string& canonical, std::string value) {
  if (canonical == "project") row.project = std::move(value);
  else if (canonical == "cwe") row.cwe = std::move(value);
  else if (canonical == "language") row.language = std::move(value);
  else if (canonical == "instance_id") row.instance_id = std::move(value);
  else if (canonical == "description") row.description = std::move(value);
  else if (canonical == "fix_patch") row.fix_patch = std::move(value);
}

bool is_jsonl(const std::filesystem::path& path, std::string_view content) {
  auto ext = text::to_lower(path.extension().string());
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return true;
  if (ext == ".csv") return false;
  auto t = text::trim(content);
  return !t.empty() && t[0] == '{';
}

}  // namespace

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path,
                                      const std::map<std::string, std::string>& columns) {
  std::string content;
  try {
    content = text::read_file(path.string());
  } catch (const Error& e) {
    throw Error(ErrorCode::UnreadableCorpus, "cannot read corpus " + path.string() + ": " + e.what());
  }
  std::vector<CorpusRecord> out;
  if (text::trim(content).empty()) return out;

  if (is_jsonl(path, content)) {
    int lineno = 0;
    for (auto line : text::split_lines(content)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      CorpusRecord rec;
      rec.line = lineno;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        rec.error = "not a JSON object";
      } else {
        for (const auto& col : corpus_columns()) {
          auto key = header_for(columns, col);
          if (!j.contains(key) || j[key].is_null()) continue;
          if (j[key].is_string()) assign(rec.row, col, j[key].get<std::string>());
          else if (j[key].is_number()) assign(rec.row, col, j[key].dump());
          else rec.error = "column '" + key + "' is not a string";
        }
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

  auto records = parse_csv(content);
  if (records.empty()) return out;
  const auto& header = records.front().second;
  std::map<std::string, std::size_t> pos;
  for (const auto& col : corpus_columns()) {
    auto name = header_for(columns, col);
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return text::trim(h) == name; });
    if (it == header.end())
      throw Error(ErrorCode::UnreadableCorpus, "corpus header lacks column '" + name + "' (for " + col + ")");
    pos[col] = static_cast<std::size_t>(it - header.begin());
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    CorpusRecord rec;
    rec.line = records[r].first;
    const auto& fields = records[r].second;
    if (fields.size() != header.size()) {
      rec.error = "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size());
    } else {
      for (const auto& [col, p] : pos) assign(rec.row, col, fields[p]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

IngestCounts ingest_corpus(const std::filesystem::path& path, MemoryStore& store, Embedder& embedder,
                           const std::map<std::string, std::string>& columns) {
  IngestCounts counts;
  for (const auto& rec : read_corpus(path, columns)) {
    if (!rec.error.empty()) {
      ++counts.rejected;
      counts.problems.push_back("line " + std::to_string(rec.line) + ": " + rec.error);
      continue;
    }
    try {
      auto outcome = store.insert(rec.row.to_entry(), embedder);
      if (outcome == InsertOutcome::Inserted) ++counts.inserted;
      else ++counts.merged;
    } catch (const Error& e) {
      ++counts.rejected;
      counts.problems.push_back("line " + std::to_string(rec.line) + ": " + e.what());
    }
  }
  return counts;
}

}  // namespace patchmem
