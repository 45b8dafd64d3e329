#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "patchmem/error.hpp"
#include "patchmem/memory.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using namespace patchmem;

TEST_CASE("entry invariants") {
  auto ok = gen::entry(Tier::L1, "CVE-2020-1", "p", "CWE-787", "c", "desc");
  CHECK_NOTHROW(ok.validate());
  auto e = ok;
  e.keys.cwe = "787";
  CHECK_THROWS_AS(e.validate(), Error);
  e = ok;
  e.fix_patch = "not a diff";
  CHECK_THROWS_AS(e.validate(), Error);
  e = ok;
  e.keys.description.clear();
  CHECK_THROWS_AS(e.validate(), Error);
  e = gen::entry(Tier::L2, "x", "p", "CWE-UNKNOWN", "c", "d");
  e.rationale = "  ";
  CHECK_THROWS_AS(e.validate(), Error);
  e = gen::entry(Tier::L3, "x", "p", "CWE-1", "c", "d");
  CHECK_NOTHROW(e.validate());
  e.correction_delta = e.fail_patch;
  CHECK_THROWS_AS(e.validate(), Error);
  CHECK(is_valid_cwe("CWE-UNKNOWN"));
  CHECK_FALSE(is_valid_cwe("CWE-"));
  CHECK_FALSE(is_valid_cwe("CWE-12a"));
}

TEST_CASE("same instance id always merges") {
  MemoryStore s;
  HashingEmbedder emb(64);
  CHECK(s.insert(gen::entry(Tier::L1, "id-1", "p", "CWE-1", "c", "alpha beta"), emb) == InsertOutcome::Inserted);
  CHECK(s.insert(gen::entry(Tier::L1, "id-1", "q", "CWE-2", "c", "totally different", "zz"), emb) ==
        InsertOutcome::Merged);
  CHECK(s.tier(Tier::L1).size() == 1);
  CHECK(s.tier(Tier::L1)[0].keys.project == "p");  // the older entry is kept
  // other tiers are independent
  CHECK(s.insert(gen::entry(Tier::L2, "id-1", "p", "CWE-1", "c", "alpha beta"), emb) == InsertOutcome::Inserted);
}

TEST_CASE("dedup merges iff both similarities exceed the threshold") {
  std::mt19937_64 rng(17);
  const std::size_t dim = 256;
  HashingEmbedder emb(dim);
  int merged = 0, inserted = 0;
  for (int trial = 0; trial < 400; ++trial) {
    auto base_desc = gen::words(rng, 40);
    auto base_body = gen::words(rng, 40);
    auto mutate = [&](std::string s) {
      auto toks = oracle::words(s);
      int m = static_cast<int>(rng() % 5);
      for (int i = 0; i < m; ++i) toks[rng() % toks.size()] = "m" + std::to_string(rng() % 100000);
      std::string out;
      for (auto& t : toks) out += (out.empty() ? "" : " ") + t;
      return out;
    };
    auto desc2 = mutate(base_desc);
    auto body2 = mutate(base_body);
    auto a = gen::entry(Tier::L1, "a", "p", "CWE-1", "c", base_desc, base_body);
    auto b = gen::entry(Tier::L1, "b", "p", "CWE-1", "c", desc2, body2);
    double ds = oracle::dot(oracle::embed(a.keys.description, dim), oracle::embed(b.keys.description, dim));
    double ps = oracle::dot(oracle::embed(a.fix_patch, dim), oracle::embed(b.fix_patch, dim));
    if (std::abs(ds - 0.95) < 1e-9 || std::abs(ps - 0.95) < 1e-9) continue;
    MemoryStore s;
    s.insert(a, emb);
    auto out = s.insert(b, emb);
    bool expect = ds > 0.95 && ps > 0.95;
    INFO("desc " << ds << " patch " << ps);
    CHECK((out == InsertOutcome::Merged) == expect);
    (expect ? merged : inserted)++;
  }
  CHECK(merged > 20);
  CHECK(inserted > 20);
}

TEST_CASE("prune matches a brute-force recency filter") {
  std::mt19937_64 rng(23);
  HashingEmbedder emb(64);
  for (int round = 0; round < 40; ++round) {
    MemoryStore s;
    std::map<std::pair<int, std::string>, std::int64_t> last;  // (tier, id) -> counter at last touch
    std::int64_t counter = 0;
    std::vector<std::pair<Tier, std::string>> ids;
    for (int step = 0; step < 200; ++step) {
      int op = static_cast<int>(rng() % 10);
      if (op < 4) {
        Tier t = static_cast<Tier>(rng() % 3);
        std::string id = "e" + std::to_string(rng() % 40);
        auto e = gen::entry(t, id, "p", "CWE-1", "c", gen::words(rng, 12), gen::words(rng, 8));
        s.insert(e, emb);
        last[{static_cast<int>(t), id}] = counter;
        ids.emplace_back(t, id);
      } else if (op < 6 && !ids.empty()) {
        auto [t, id] = ids[rng() % ids.size()];
        s.mark_retrieved(t, id);
        if (last.count({static_cast<int>(t), id})) last[{static_cast<int>(t), id}] = counter;
      } else if (op < 9) {
        s.complete_task();
        ++counter;
      } else {
        std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 6);
        s.prune(w);
        for (auto it = last.begin(); it != last.end();)
          it = (it->first.first != 0 && counter - it->second > w) ? last.erase(it) : std::next(it);
      }
    }
    std::set<std::pair<int, std::string>> have;
    for (Tier t : {Tier::L1, Tier::L2, Tier::L3})
      for (const auto& e : s.tier(t)) have.insert({static_cast<int>(t), e.keys.instance_id});
    std::set<std::pair<int, std::string>> want;
    for (const auto& [k, _] : last) want.insert(k);
    CHECK(have == want);
    for (const auto& [k, v] : last) CHECK(*s.idle_tasks(static_cast<Tier>(k.first), k.second) == counter - v);
  }
  MemoryStore s;
  CHECK_THROWS_AS(s.prune(0), Error);
}

TEST_CASE("JSON lines round trip keeps entries and idle counts") {
  std::mt19937_64 rng(29);
  HashingEmbedder emb(64);
  MemoryStore s;
  for (int i = 0; i < 30; ++i) {
    Tier t = static_cast<Tier>(i % 3);
    s.insert(gen::entry(t, (i % 2 ? "CVE-2020-" : "gh-") + std::to_string(i), "p" + std::to_string(i % 4), "CWE-787",
                        "c", gen::words(rng, 10) + " \"quoted\"\n\ttab", gen::words(rng, 5)),
             emb);
    if (i % 5 == 0) s.complete_task();
  }
  auto text = s.to_jsonl();
  auto back = MemoryStore::from_jsonl(text);
  CHECK(back.same_entries(s));
  for (Tier t : {Tier::L1, Tier::L2, Tier::L3})
    for (const auto& e : s.tier(t)) CHECK(back.idle_tasks(t, e.keys.instance_id) == s.idle_tasks(t, e.keys.instance_id));
  CHECK(back.to_jsonl() == text);

  testing_support::TempDir tmp;
  auto path = (tmp / "mem.jsonl").string();
  s.save(path);
  CHECK(MemoryStore::load(path).same_entries(s));
  CHECK(MemoryStore::load((tmp / "absent.jsonl").string()).empty());
}

TEST_CASE("corrupt memory files are rejected with a line number") {
  auto good = gen::entry(Tier::L1, "a", "p", "CWE-1", "c", "d");
  MemoryStore s;
  HashingEmbedder emb(8);
  s.insert(good, emb);
  auto line = s.to_jsonl();
  for (const std::string& bad : {std::string("{not json"), std::string("[1,2]"), std::string(R"({"tier":"L9"})"),
                                 line + line, std::string(R"({"tier":"L1","instance_id":"x","cwe":"CWE-1","description":"d","fix_patch":"nope"})")}) {
    try {
      MemoryStore::from_jsonl(bad);
      FAIL("accepted: " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CorruptMemoryFile);
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
}

TEST_CASE("fallback timestamps follow ingestion order after real CVEs") {
  MemoryStore s;
  HashingEmbedder emb(32);
  s.insert(gen::entry(Tier::L1, "proj-1", "p", "CWE-1", "c", "one"), emb);
  s.insert(gen::entry(Tier::L1, "CVE-2099-1", "p", "CWE-1", "c", "two"), emb);
  s.insert(gen::entry(Tier::L2, "proj-2", "p", "CWE-1", "c", "three"), emb);
  auto t1 = s.timestamp_of(*s.find(Tier::L1, "proj-1"));
  auto t2 = s.timestamp_of(*s.find(Tier::L1, "CVE-2099-1"));
  auto t3 = s.timestamp_of(*s.find(Tier::L2, "proj-2"));
  CHECK(t2 < t1);
  CHECK(t1 < t3);
  CHECK(t1.year == kFallbackYear);
}

TEST_CASE("consolidation") {
  HashingEmbedder emb(64);
  RetrievalKeys keys{"echotool", "CWE-122", "c", "echotool-CVE-2024-0001", "overflow in safe_copy"};
  const auto bad = gen::patch_for("utils.c", "memcpy(d, s, n);", "if (n > 16) n = 16; memcpy(d, s, n);");
  const auto good = gen::patch_for("utils.c", "memcpy(d, s, n);", "if (n > CAP) n = CAP; memcpy(d, s, n);");
  const auto delta = gen::patch_for("utils.c", "if (n > 16) n = 16; memcpy(d, s, n);", "if (n > CAP) n = CAP; memcpy(d, s, n);");

  SUBCASE("success first writes L2 only") {
    MemoryStore s;
    SessionRecord r{keys, true, {{good, true}}, "", "", ""};
    auto c = consolidate_success(s, emb, r);
    CHECK_FALSE(c.l3);
    CHECK(s.tier(Tier::L2).size() == 1);
    CHECK(s.tier(Tier::L3).empty());
    CHECK(s.tier(Tier::L2)[0].fix_patch == good);
    CHECK(s.tier(Tier::L2)[0].rationale.find("CWE-122") != std::string::npos);
  }
  SUBCASE("an empty patch attempt does not count as a failed verification") {
    MemoryStore s;
    SessionRecord r{keys, true, {{"", false}, {good, true}}, "", "", ""};
    CHECK_FALSE(consolidate_success(s, emb, r).l3);
  }
  SUBCASE("fail then success writes L2 and L3") {
    MemoryStore s;
    SessionRecord r{keys, true, {{bad, false}, {"", false}, {good, true}}, "custom rationale", delta, ""};
    auto c = consolidate_success(s, emb, r);
    REQUIRE(c.l3);
    CHECK(s.tier(Tier::L3).size() == 1);
    CHECK(s.tier(Tier::L3)[0].fail_patch == bad);
    CHECK(s.tier(Tier::L3)[0].correction_delta == delta);
    CHECK(s.tier(Tier::L3)[0].transition_insight.find("replaced") != std::string::npos);
    CHECK(s.tier(Tier::L2)[0].rationale == "custom rationale");
  }
  SUBCASE("failed sessions are refused") {
    MemoryStore s;
    SessionRecord r{keys, false, {{bad, false}}, "", "", ""};
    CHECK_THROWS_AS(consolidate_success(s, emb, r), Error);
    SessionRecord no_delta{keys, true, {{bad, false}, {good, true}}, "", "", ""};
    CHECK_THROWS_AS(consolidate_success(s, emb, no_delta), Error);
  }
}
