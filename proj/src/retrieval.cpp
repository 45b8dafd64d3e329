#include "patchmem/retrieval.hpp"

#include <algorithm>
#include <limits>

#include "patchmem/error.hpp"

namespace patchmem {

std::string_view to_string(Priority p) { return p == Priority::P1 ? "P1" : "P2"; }

void Query::validate() const {
  if (k_min < 1) throw Error(ErrorCode::BadArguments, "k_min must be >= 1");
  if (top_n < k_min) throw Error(ErrorCode::BadArguments, "top_n must be >= k_min");
}

CveTimestamp query_timestamp(std::string_view instance_id) {
  if (auto ts = parse_timestamp(instance_id)) return *ts;
  return {kFallbackYear, std::numeric_limits<std::int64_t>::max()};
}

std::vector<RankedEntry> retrieve(const MemoryStore& store, Tier tier, const Query& query,
                                  Embedder& embedder,
                                  std::optional<std::string_view> query_text_override) {
  query.validate();
  const auto q_ts = query_timestamp(query.keys.instance_id);

  std::vector<RankedEntry> p1;
  std::vector<RankedEntry> p2;
  for (const auto& e : store.tier(tier)) {
    if (e.keys.instance_id == query.keys.instance_id) continue;
    if (e.keys.cwe != query.keys.cwe || e.keys.language != query.keys.language) continue;
    auto ts = store.timestamp_of(e);
    if (e.keys.project == query.keys.project) {
      if (ts < q_ts) p1.push_back({e, 0.0, Priority::P1, ts});
    } else {
      p2.push_back({e, 0.0, Priority::P2, ts});
    }
  }

  std::vector<RankedEntry> pool = std::move(p1);
  if (pool.size() < static_cast<std::size_t>(query.k_min))
    pool.insert(pool.end(), std::make_move_iterator(p2.begin()), std::make_move_iterator(p2.end()));
  if (pool.empty()) return pool;

  const bool by_fail_patch = tier == Tier::L3 && query_text_override.has_value();
  std::string_view query_text = query_text_override.value_or(query.keys.description);
  std::vector<std::string> texts;
  texts.reserve(pool.size());
  for (const auto& r : pool) texts.push_back(by_fail_patch ? r.entry.fail_patch : r.entry.keys.description);
  auto scored = score_texts(embedder, query_text, texts);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].similarity = scored.scores[i];

  std::sort(pool.begin(), pool.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
    return a.entry.keys.instance_id < b.entry.keys.instance_id;
  });
  if (pool.size() > static_cast<std::size_t>(query.top_n)) pool.resize(static_cast<std::size_t>(query.top_n));
  return pool;
}

}  // namespace patchmem
