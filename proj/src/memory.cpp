#include "patchmem/memory.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <json.hpp>

#include "patchmem/diff.hpp"
#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem {

using nlohmann::json;

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::L1: return "L1";
    case Tier::L2: return "L2";
    case Tier::L3: return "L3";
  }
  return "?";
}

std::optional<Tier> parse_tier(std::string_view s) {
  if (s == "L1") return Tier::L1;
  if (s == "L2") return Tier::L2;
  if (s == "L3") return Tier::L3;
  return std::nullopt;
}

bool is_valid_cwe(std::string_view cwe) {
  if (cwe == "CWE-UNKNOWN") return true;
  if (!cwe.starts_with("CWE-") || cwe.size() == 4) return false;
  return std::all_of(cwe.begin() + 4, cwe.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

namespace {

[[noreturn]] void violation(const MemoryEntry& e, const std::string& what) {
  throw Error(ErrorCode::InvariantViolation,
              std::string(to_string(e.tier)) + " entry '" + e.keys.instance_id + "': " + what);
}

}  // namespace

void MemoryEntry::validate() const {
  if (keys.instance_id.empty()) violation(*this, "instance_id is empty");
  if (!is_valid_cwe(keys.cwe)) violation(*this, "cwe '" + keys.cwe + "' is not CWE-<digits> or CWE-UNKNOWN");
  if (keys.description.empty()) violation(*this, "description is empty");
  switch (tier) {
    case Tier::L2:
      if (text::trim(rationale).empty()) violation(*this, "rationale is empty");
      [[fallthrough]];
    case Tier::L1:
      if (fix_patch.empty()) violation(*this, "fix_patch is empty");
      if (!diff::is_unified_diff(fix_patch)) violation(*this, "fix_patch is not a unified diff");
      break;
    case Tier::L3:
      if (!diff::is_unified_diff(fail_patch)) violation(*this, "fail_patch is not a unified diff");
      if (!diff::is_unified_diff(correction_delta)) violation(*this, "correction_delta is not a unified diff");
      if (fail_patch == correction_delta) violation(*this, "fail_patch equals correction_delta");
      break;
  }
}

std::size_t MemoryStore::size() const {
  return tiers_[0].size() + tiers_[1].size() + tiers_[2].size();
}

const MemoryEntry* MemoryStore::find(Tier t, std::string_view instance_id) const {
  for (const auto& e : tier(t))
    if (e.keys.instance_id == instance_id) return &e;
  return nullptr;
}

void MemoryStore::append(MemoryEntry entry, std::int64_t last_retrieved) {
  EntryKey key{entry.tier, entry.keys.instance_id};
  retrieval_log_[key] = last_retrieved;
  if (!parse_timestamp(entry.keys.instance_id)) fallback_seq_[key] = next_fallback_seq_++;
  tiers_[index(entry.tier)].push_back(std::move(entry));
}

InsertOutcome MemoryStore::insert(MemoryEntry entry, Embedder& embedder, double threshold) {
  entry.validate();
  auto& bucket = tiers_[index(entry.tier)];

  if (find(entry.tier, entry.keys.instance_id) != nullptr) {
    retrieval_log_[{entry.tier, entry.keys.instance_id}] = task_counter_;
    return InsertOutcome::Merged;
  }

  if (!bucket.empty()) {
    std::vector<std::string> descriptions;
    descriptions.reserve(bucket.size());
    for (const auto& e : bucket) descriptions.push_back(e.keys.description);
    auto desc_scores = score_texts(embedder, entry.keys.description, descriptions);

    std::vector<std::size_t> close;
    std::vector<std::string> patches;
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      if (desc_scores.scores[i] > threshold) {
        close.push_back(i);
        patches.push_back(bucket[i].patch_text());
      }
    }
    if (!close.empty()) {
      auto patch_scores = score_texts(embedder, entry.patch_text(), patches);
      for (std::size_t j = 0; j < close.size(); ++j) {
        if (patch_scores.scores[j] > threshold) {
          const auto& kept = bucket[close[j]];
          retrieval_log_[{kept.tier, kept.keys.instance_id}] = task_counter_;
          return InsertOutcome::Merged;
        }
      }
    }
  }

  append(std::move(entry), task_counter_);
  return InsertOutcome::Inserted;
}

std::size_t MemoryStore::prune(std::int64_t window) {
  if (window < 1) throw Error(ErrorCode::BadArguments, "prune window must be >= 1");
  std::size_t removed = 0;
  for (Tier t : {Tier::L2, Tier::L3}) {
    auto& bucket = tiers_[index(t)];
    auto stale = [&](const MemoryEntry& e) {
      EntryKey key{t, e.keys.instance_id};
      auto it = retrieval_log_.find(key);
      std::int64_t last = it == retrieval_log_.end() ? 0 : it->second;
      return task_counter_ - last > window;
    };
    auto keep_end = std::stable_partition(bucket.begin(), bucket.end(),
                                          [&](const MemoryEntry& e) { return !stale(e); });
    for (auto it = keep_end; it != bucket.end(); ++it) {
      EntryKey key{t, it->keys.instance_id};
      retrieval_log_.erase(key);
      fallback_seq_.erase(key);
      ++removed;
    }
    bucket.erase(keep_end, bucket.end());
  }
  return removed;
}

void MemoryStore::mark_retrieved(Tier t, std::string_view instance_id) {
  EntryKey key{t, std::string(instance_id)};
  if (auto it = retrieval_log_.find(key); it != retrieval_log_.end()) it->second = task_counter_;
}

std::optional<std::int64_t> MemoryStore::idle_tasks(Tier t, std::string_view instance_id) const {
  auto it = retrieval_log_.find({t, std::string(instance_id)});
  if (it == retrieval_log_.end()) return std::nullopt;
  return task_counter_ - it->second;
}

void MemoryStore::set_idle_tasks(Tier t, std::string_view instance_id, std::int64_t idle) {
  auto it = retrieval_log_.find({t, std::string(instance_id)});
  if (it == retrieval_log_.end())
    throw Error(ErrorCode::NotFound, "no " + std::string(to_string(t)) + " entry " + std::string(instance_id));
  it->second = task_counter_ - idle;
}

CveTimestamp MemoryStore::timestamp_of(const MemoryEntry& entry) const {
  if (auto ts = parse_timestamp(entry.keys.instance_id)) return *ts;
  auto it = fallback_seq_.find({entry.tier, entry.keys.instance_id});
  return CveTimestamp{kFallbackYear, it == fallback_seq_.end() ? next_fallback_seq_ : it->second};
}

std::string MemoryStore::to_jsonl() const {
  std::string out;
  for (const auto& bucket : tiers_) {
    for (const auto& e : bucket) {
      json j = {{"tier", to_string(e.tier)},
                {"project", e.keys.project},
                {"cwe", e.keys.cwe},
                {"language", e.keys.language},
                {"instance_id", e.keys.instance_id},
                {"description", e.keys.description},
                {"fix_patch", e.fix_patch}};
      if (e.tier == Tier::L2) j["rationale"] = e.rationale;
      if (e.tier == Tier::L3) {
        j["fail_patch"] = e.fail_patch;
        j["correction_delta"] = e.correction_delta;
        j["transition_insight"] = e.transition_insight;
      }
      if (auto idle = idle_tasks(e.tier, e.keys.instance_id)) j["idle_tasks"] = *idle;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

MemoryStore MemoryStore::from_jsonl(std::string_view jsonl) {
  MemoryStore store;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(jsonl)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto corrupt = [&](const std::string& why) {
      return Error(ErrorCode::CorruptMemoryFile, "memory line " + std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw corrupt(e.what());
    }
    if (!j.is_object()) throw corrupt("not a JSON object");
    auto str = [&](const char* field) -> std::string {
      auto it = j.find(field);
      if (it == j.end() || it->is_null()) return {};
      if (!it->is_string()) throw corrupt(std::string("field '") + field + "' is not a string");
      return it->get<std::string>();
    };
    auto tier = parse_tier(str("tier"));
    if (!tier) throw corrupt("unknown tier '" + str("tier") + "'");
    MemoryEntry e;
    e.tier = *tier;
    e.keys = {str("project"), str("cwe"), str("language"), str("instance_id"), str("description")};
    e.fix_patch = str("fix_patch");
    e.rationale = str("rationale");
    e.fail_patch = str("fail_patch");
    e.correction_delta = str("correction_delta");
    e.transition_insight = str("transition_insight");
    try {
      e.validate();
    } catch (const Error& err) {
      throw corrupt(err.what());
    }
    if (store.find(e.tier, e.keys.instance_id) != nullptr)
      throw corrupt("duplicate instance_id '" + e.keys.instance_id + "' in tier " + std::string(to_string(e.tier)));
    std::int64_t idle = 0;
    if (auto it = j.find("idle_tasks"); it != j.end()) {
      if (!it->is_number_integer()) throw corrupt("idle_tasks is not an integer");
      idle = it->get<std::int64_t>();
    }
    store.append(std::move(e), -idle);
  }
  return store;
}

void MemoryStore::save(const std::string& path) const {
  auto tmp = path + ".tmp";
  text::write_file(tmp, to_jsonl());
  std::filesystem::rename(tmp, path);
}

MemoryStore MemoryStore::load(const std::string& path) {
  if (!std::filesystem::exists(path)) return {};
  return from_jsonl(text::read_file(path));
}

bool MemoryStore::same_entries(const MemoryStore& other) const {
  for (std::size_t t = 0; t < tiers_.size(); ++t) {
    auto a = tiers_[t];
    auto b = other.tiers_[t];
    if (a.size() != b.size()) return false;
    auto by_id = [](const MemoryEntry& x, const MemoryEntry& y) {
      return x.keys.instance_id < y.keys.instance_id;
    };
    std::sort(a.begin(), a.end(), by_id);
    std::sort(b.begin(), b.end(), by_id);
    if (a != b) return false;
  }
  return true;
}

std::optional<std::size_t> SessionRecord::last_failed_verification() const {
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < attempts.size(); ++i)
    if (!attempts[i].accepted && !attempts[i].patch.empty()) last = i;
  return last;
}

const AttemptRecord* SessionRecord::accepted_attempt() const {
  for (const auto& a : attempts)
    if (a.accepted) return &a;
  return nullptr;
}

std::string templated_insight(std::string_view correction_delta) {
  std::string out;
  std::vector<diff::Hunk> hunks;
  try {
    hunks = diff::hunks(correction_delta);
  } catch (const Error&) {
    return "replaced the failed candidate with the accepted patch";
  }
  for (const auto& h : hunks) {
    if (!out.empty()) out += "; ";
    out += "replaced " + diff::summarize(h.removed()) + " with " + diff::summarize(h.added());
    if (!h.file.empty()) out += " in " + h.file;
  }
  return out;
}

std::string templated_rationale(const RetrievalKeys& keys, std::string_view accepted_patch) {
  std::string files;
  std::string guard = "(no added lines)";
  try {
    for (const auto& f : diff::touched_files(accepted_patch)) files += (files.empty() ? "" : ", ") + f;
    for (const auto& h : diff::hunks(accepted_patch)) {
      auto added = h.added();
      if (!added.empty()) {
        guard = diff::summarize(added);
        break;
      }
    }
  } catch (const Error&) {
  }
  if (files.empty()) files = "the affected code";
  return "Fix for " + keys.cwe + " in " + keys.project + " touching " + files +
         " mitigated the proof-of-concept without regressions; key change: " + guard;
}

Consolidation consolidate_success(MemoryStore& store, Embedder& embedder,
                                  const SessionRecord& session) {
  const auto* accepted = session.accepted_attempt();
  if (!session.succeeded || accepted == nullptr || accepted->patch.empty())
    throw Error(ErrorCode::InvalidSession,
                "session for '" + session.keys.instance_id + "' did not end in an accepted patch");

  Consolidation out;
  out.l2.tier = Tier::L2;
  out.l2.keys = session.keys;
  out.l2.fix_patch = accepted->patch;
  out.l2.rationale = text::trim(session.rationale).empty()
                         ? templated_rationale(session.keys, accepted->patch)
                         : session.rationale;

  if (auto failed = session.last_failed_verification()) {
    if (session.correction_delta.empty())
      throw Error(ErrorCode::InvalidSession, "session has a failed attempt but no correction delta");
    MemoryEntry l3;
    l3.tier = Tier::L3;
    l3.keys = session.keys;
    l3.fix_patch = accepted->patch;
    l3.fail_patch = session.attempts[*failed].patch;
    l3.correction_delta = session.correction_delta;
    l3.transition_insight = text::trim(session.transition_insight).empty()
                                ? templated_insight(session.correction_delta)
                                : session.transition_insight;
    out.l3 = std::move(l3);
  }

  out.l2.validate();
  if (out.l3) out.l3->validate();
  out.l2_outcome = store.insert(out.l2, embedder);
  if (out.l3) out.l3_outcome = store.insert(*out.l3, embedder);
  return out;
}

}  // namespace patchmem
