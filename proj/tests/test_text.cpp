#include <doctest.h>

#include <random>

#include "patchmem/diff.hpp"
#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

using namespace patchmem;

TEST_CASE("split_lines drops CR and the trailing empty line") {
  auto l = text::split_lines("a\r\nb\n\nc");
  REQUIRE(l.size() == 4);
  CHECK(l[0] == "a");
  CHECK(l[2] == "");
  CHECK(l[3] == "c");
  CHECK(text::split_lines("x\n").size() == 1);
  CHECK(text::split_lines("").empty());
}

TEST_CASE("tokenize lower-cases identifier runs") {
  auto t = text::tokenize("Heap-Buffer overflow in safe_copy(len=64)");
  CHECK(t == std::vector<std::string>{"heap", "buffer", "overflow", "in", "safe_copy", "len", "64"});
}

TEST_CASE("fnv1a matches published vectors") {
  CHECK(text::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(text::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(text::fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("caps never exceed their limit and keep both ends") {
  std::mt19937 rng(7);
  for (int i = 0; i < 300; ++i) {
    std::string s(rng() % 5000, 'x');
    for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
    std::size_t cap = rng() % 3000;
    auto ht = text::cap_head_tail(s, cap);
    auto h = text::cap_head(s, cap);
    CHECK(ht.size() <= std::max(cap, std::size_t{0}));
    CHECK(h.size() <= cap);
    if (s.size() <= cap) {
      CHECK(ht == s);
      CHECK(h == s);
    } else if (cap > 100) {
      CHECK(s.starts_with(ht.substr(0, 10)));
      CHECK(s.ends_with(ht.substr(ht.size() - 10)));
      CHECK(h.ends_with("[truncated]"));
    }
  }
}

TEST_CASE("count_occurrences counts overlaps") {
  CHECK(text::count_occurrences("aaaa", "aa") == 3);
  CHECK(text::count_occurrences("abc", "") == 0);
}

TEST_CASE("diff parsing") {
  const std::string git =
      "diff --git a/src/x.c b/src/x.c\n"
      "index 111..222 100644\n"
      "--- a/src/x.c\n"
      "+++ b/src/x.c\n"
      "@@ -1,3 +1,4 @@ int f()\n"
      " a\n"
      "-b\n"
      "+B\n"
      "+  guard();\n"
      " c\n"
      "diff --git a/y.h b/y.h\n"
      "--- a/y.h\n"
      "+++ b/y.h\n"
      "@@ -10 +10 @@\n"
      "-old\n"
      "+new\n";

  SUBCASE("files and hunks") {
    auto files = diff::parse(git);
    REQUIRE(files.size() == 2);
    CHECK(files[0].new_path == "src/x.c");
    REQUIRE(files[0].hunks.size() == 1);
    const auto& h = files[0].hunks[0];
    CHECK(h.old_start == 1);
    CHECK(h.old_count == 3);
    CHECK(h.new_count == 4);
    CHECK(h.removed() == std::vector<std::string>{"b"});
    CHECK(h.added() == std::vector<std::string>{"B", "  guard();"});
    CHECK(files[1].hunks[0].old_count == 1);
    CHECK(diff::touched_files(git) == std::vector<std::string>{"src/x.c", "y.h"});
    CHECK(diff::hunks(git).size() == 2);
  }

  SUBCASE("well-formedness") {
    CHECK(diff::is_unified_diff(git));
    CHECK(diff::is_unified_diff("@@ -1 +1 @@\n-a\n+b\n"));
    CHECK_FALSE(diff::is_unified_diff("just prose"));
    CHECK_FALSE(diff::is_unified_diff(""));
    CHECK_FALSE(diff::is_unified_diff("--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n-a\n+b\n"));  // short body
    CHECK_THROWS_AS(diff::parse("nothing here"), Error);
  }

  SUBCASE("summarize skips blank lines") {
    CHECK(diff::summarize({"", "   ", "  if (n > cap) n = cap;"}) == "if (n > cap) n = cap;");
  }
}
