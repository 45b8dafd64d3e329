#include <doctest.h>

#include <algorithm>
#include <random>

#include "patchmem/error.hpp"
#include "patchmem/localizer.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using namespace patchmem;
namespace ts = testing_support;

namespace {

bool has_site(const std::vector<cxx::ScannedSite>& sites, const std::string& sym, int line, SiteKind kind,
              const std::string& param_of = "") {
  return std::any_of(sites.begin(), sites.end(), [&](const cxx::ScannedSite& s) {
    return s.symbol == sym && s.line == line && s.kind == kind && s.param_of == param_of;
  });
}

const char* kAsan = R"(=================================================================
==42==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x6020 at pc 0x1 bp 0x2 sp 0x3
WRITE of size 200 at 0x6020 thread T0
    #0 0x7f43 in __interceptor_memcpy ../../../../src/libsanitizer/sanitizer_common/sanitizer_common_interceptors.inc:827
    #1 0x5559 in safe_copy /work/echo/utils.c:45
    #2 0x555a in main /work/echo/main.c:102:5
    #3 0x7f43 in __libc_start_main (/lib/x86_64-linux-gnu/libc.so.6+0x29d8f)
    #4 0x5559 in _start (/work/echo/app+0x2364)

0x507000000141 is located 0 bytes to the right of 65-byte region
allocated by thread T0 here:
    #0 0x7f43 in __interceptor_malloc ../../../../src/libsanitizer/asan/asan_malloc_linux.cpp:145
    #1 0x5559 in main /work/echo/main.c:91
SUMMARY: AddressSanitizer: heap-buffer-overflow in __interceptor_memcpy
)";

}  // namespace

TEST_CASE("scanner classifies definitions and uses") {
  const char* src =
      "#define CAP 64\n"                                  // 1
      "struct box { int size; char *data; };\n"           // 2
      "static int clamp(int n, int cap);\n"               // 3
      "int clamp(int n, int cap)\n"                       // 4
      "{\n"                                               // 5
      "    int r = n > cap ? cap : n;\n"                  // 6
      "    return r;\n"                                   // 7
      "}\n"                                               // 8
      "void use(struct box *b) { b->size = clamp(b->size, CAP); }\n";  // 9
  auto sites = cxx::scan(src);
  CHECK(has_site(sites, "CAP", 1, SiteKind::Definition));
  CHECK(has_site(sites, "box", 2, SiteKind::Definition));
  CHECK(has_site(sites, "size", 2, SiteKind::Definition));
  CHECK(has_site(sites, "clamp", 4, SiteKind::Definition));
  CHECK(has_site(sites, "n", 4, SiteKind::Definition, "clamp"));
  CHECK(has_site(sites, "cap", 4, SiteKind::Definition, "clamp"));
  CHECK(has_site(sites, "r", 6, SiteKind::Definition));
  CHECK(has_site(sites, "n", 6, SiteKind::Use));
  CHECK(has_site(sites, "r", 7, SiteKind::Use));
  CHECK(has_site(sites, "size", 9, SiteKind::Use));
  CHECK(has_site(sites, "CAP", 9, SiteKind::Use));
  // prototype parameter names are not indexed
  CHECK_FALSE(std::any_of(sites.begin(), sites.end(), [](const auto& s) { return s.symbol == "n" && s.line == 3; }));
  auto call = std::find_if(sites.begin(), sites.end(), [](const auto& s) { return s.symbol == "clamp" && s.line == 9; });
  REQUIRE(call != sites.end());
  CHECK(call->is_call);
  CHECK(call->kind == SiteKind::Use);
  // keywords never become sites
  CHECK_FALSE(std::any_of(sites.begin(), sites.end(), [](const auto& s) { return s.symbol == "return"; }));
}

TEST_CASE("scanner ignores comments and literals and reports syntax errors") {
  auto sites = cxx::scan("int x; /* len */ // len\nconst char *s = \"len\"; char c = 'l';\n");
  CHECK_FALSE(std::any_of(sites.begin(), sites.end(), [](const auto& s) { return s.symbol == "len"; }));
  CHECK_THROWS_AS(cxx::scan("int f() { /* open"), Error);
  CHECK_THROWS_AS(cxx::scan("int f() { return 1; "), Error);
  CHECK_THROWS_AS(cxx::scan("const char* s = \"abc\n"), Error);
}

TEST_CASE("lexical fallback marks every word as a use") {
  auto sites = cxx::scan_lexical("len = 3\nfoo(len)\n");
  CHECK(sites.size() == 3);
  for (const auto& s : sites) CHECK(s.kind == SiteKind::Use);
}

TEST_CASE("crash report parsing keeps the first located stack") {
  auto r = parse_crash_report(kAsan);
  REQUIRE(r);
  CHECK(r->fault_kind == "heap-buffer-overflow");
  REQUIRE(r->frames.size() == 3);
  CHECK(r->frames[0].function == "__interceptor_memcpy");
  CHECK(r->frames[1].file == "/work/echo/utils.c");
  CHECK(r->frames[1].line == 45);
  CHECK(r->frames[2].line == 102);
  CHECK(r->frames[2].function == "main");
  CHECK_FALSE(parse_crash_report("no frames here\n"));
  auto leak = parse_crash_report("==1==ERROR: LeakSanitizer: detected memory leaks\n    #0 0x1 in f a.c:3\n");
  REQUIRE(leak);
  CHECK(leak->fault_kind == "memory-leak");
}

TEST_CASE("iter_grep on the overflow fixture") {
  auto index = index_repository(ts::fixture_dir() / "repo");
  auto report = parse_crash_report(kAsan);
  auto hits = iter_grep(index, "len", report);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].file == "utils.c");
  CHECK(hits[0].line == 45);
  CHECK(hits[1].file == "utils.c");
  CHECK(hits[1].line == 40);
  CHECK(hits[2].file == "main.c");
  CHECK(hits[2].line == 102);
  CHECK(hits[0].line_start == 35);
  CHECK(hits[0].line_end == std::min(55, index.line_count("utils.c")));
  CHECK(hits[0].rank == 1);

  // without a report only definition-first then path order applies
  auto plain = iter_grep(index, "len", std::nullopt);
  REQUIRE(plain.size() == 3);
  CHECK(plain[0].line == 40);
  CHECK(iter_grep(index, "len", report, 1).size() == 1);
  CHECK_THROWS_AS(iter_grep(index, "no_such_symbol", report), Error);
  CHECK_THROWS_AS(iter_grep(index, "len", report, 0), Error);
}

TEST_CASE("index_repository is the same serial and parallel") {
  IndexOptions serial;
  serial.parallel = false;
  auto a = index_repository(ts::fixture_dir() / "repo", serial);
  auto b = index_repository(ts::fixture_dir() / "repo");
  CHECK(a == b);
  CHECK(a.has_file("utils.h"));
  CHECK(a.has_file("poc.sh"));  // no grammar: lexical sites
  CHECK_THROWS_AS(index_repository("/definitely/not/here"), Error);
}

TEST_CASE("unparsable files are reported, not fatal") {
  ts::TempDir tmp;
  ts::spit(tmp / "good.c", "int ok(int len)\n{\n    return len;\n}\n");
  ts::spit(tmp / "bad.c", "int broken( { \n");
  ts::spit(tmp / "blob.bin", std::string("\0\1\2len", 6));
  auto index = index_repository(tmp.path());
  CHECK(index.diagnostics().size() == 1);
  CHECK(index.diagnostics()[0].first == "bad.c");
  CHECK_FALSE(index.has_file("blob.bin"));
  CHECK(iter_grep(index, "len", std::nullopt).size() == 2);
}

TEST_CASE("iter_grep equals the brute-force ranking on random indexes") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> symbols{"len", "buf", "f", "g", "h"};
  for (int round = 0; round < 300; ++round) {
    std::vector<std::string> files{"a.c", "src/b.c", "src/lib/c.h", "d.cpp"};
    files.resize(1 + rng() % files.size());
    std::vector<oracle::Site> all;
    SymbolIndex index;
    for (const auto& f : files) {
      std::vector<SymbolSite> sites;
      int n = static_cast<int>(rng() % 25);
      for (int i = 0; i < n; ++i) {
        SymbolSite s;
        s.file = f;
        s.line = 1 + static_cast<int>(rng() % 60);
        s.symbol = symbols[rng() % symbols.size()];
        bool fn = s.symbol == "f" || s.symbol == "g" || s.symbol == "h";
        s.kind = rng() % 3 == 0 ? SiteKind::Definition : SiteKind::Use;
        if (s.kind == SiteKind::Use && fn) s.is_call = rng() % 2;
        if (s.kind == SiteKind::Definition && !fn && rng() % 2) s.param_of = symbols[2 + rng() % 3];
        sites.push_back(s);
        all.push_back({s.file, s.line, s.kind == SiteKind::Definition, s.symbol, s.is_call, s.param_of});
      }
      index.add_file(f, 60, sites);
    }
    std::set<std::string> file_set(files.begin(), files.end());
    std::vector<oracle::Frame> frames;
    CrashReport report;
    int nf = static_cast<int>(rng() % 5);
    for (int i = 0; i < nf; ++i) {
      std::string f;
      switch (rng() % 4) {
        case 0: f = files[rng() % files.size()]; break;
        case 1: f = "/abs/work/" + files[rng() % files.size()]; break;
        case 2: f = "c.h"; break;
        default: f = "/usr/include/other.h"; break;
      }
      int line = 1 + static_cast<int>(rng() % 60);
      frames.push_back({f, line});
      report.frames.push_back({f, line, "fn" + std::to_string(i)});
    }
    int k = 1 + static_cast<int>(rng() % 8);
    for (const auto& sym : {std::string("len"), std::string("buf")}) {
      auto want = oracle::iter_grep(all, file_set, sym, frames, k);
      std::optional<CrashReport> rep;
      if (nf > 0) rep = report;
      if (want.empty()) {
        CHECK_THROWS_AS(iter_grep(index, sym, rep, k), Error);
        continue;
      }
      auto got = iter_grep(index, sym, rep, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].file == want[i].file);
        CHECK(got[i].line == want[i].line);
        CHECK(got[i].rank == static_cast<int>(i) + 1);
        CHECK(got[i].line_start == std::max(1, got[i].line - 10));
        CHECK(got[i].line_end == std::min(60, got[i].line + 10));
      }
    }
  }
}
