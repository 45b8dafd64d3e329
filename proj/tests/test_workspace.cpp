#include <doctest.h>

#include <random>

#include "patchmem/error.hpp"
#include "patchmem/workspace.hpp"
#include "support/testing.hpp"

using namespace patchmem;
namespace ts = testing_support;

TEST_CASE("workspace requires a git top level") {
  ts::TempDir tmp;
  CHECK_THROWS_AS(Workspace{tmp.path()}, Error);
  auto repo = ts::fixture_repo(tmp);
  CHECK_THROWS_AS(Workspace{repo / "tests"}, Error);
  CHECK_NOTHROW(Workspace{repo});
}

TEST_CASE("view numbers lines and lists directories") {
  ts::TempDir tmp;
  Workspace ws(ts::fixture_repo(tmp));
  auto r = ws.view("utils.c", std::make_pair(44, 46));
  REQUIRE(r.ok);
  CHECK(r.output == "    44\t    }\n    45\t    memcpy(dst, src, len);\n    46\t}\n");
  CHECK(ws.view("utils.c", std::make_pair(40, 9999)).ok);
  CHECK(ws.view("utils.c", std::make_pair(500, 600)).output.starts_with("[no lines"));
  auto dir = ws.view(".");
  CHECK(dir.output.find("tests/\n") != std::string::npos);
  CHECK(dir.output.find("tests/run_tests.sh\n") != std::string::npos);
  CHECK(dir.output.find(".git/") == std::string::npos);
  CHECK(dir.output.find(".gitignore\n") != std::string::npos);
  CHECK(ws.view("missing.c").error_kind == ErrorCode::NotFound);
  CHECK(ws.view("../../etc/passwd").error_kind == ErrorCode::OutsideWorkspace);
  CHECK(ws.view("/etc/passwd").error_kind == ErrorCode::OutsideWorkspace);
}

TEST_CASE("search reports matches with context and limits") {
  ts::TempDir tmp;
  Workspace ws(ts::fixture_repo(tmp));
  auto r = ws.search("memcpy\\(");
  REQUIRE(r.ok);
  CHECK(r.output.find("utils.c:45:    memcpy(dst, src, len);") != std::string::npos);
  CHECK(r.output.find("utils.c-44-") != std::string::npos);
  CHECK(ws.search("zzz_no_such_text").output == "No matches.");
  CHECK(ws.search("(unclosed").error_kind == ErrorCode::BadPattern);
  auto many = ws.search("[a-z]");
  CHECK(many.output.find("[showing 5 of ") != std::string::npos);
  auto scoped = ws.search("BUF_SIZE", "utils.h");
  CHECK(scoped.output.find("utils.h:") != std::string::npos);
  CHECK(scoped.output.find("main.c") == std::string::npos);
}

TEST_CASE("edits, snapshots, rollback and submit") {
  ts::TempDir tmp;
  auto repo = ts::fixture_repo(tmp);
  Workspace ws(repo);
  const auto before = ts::tree_hashes(repo);

  CHECK(ws.str_replace("utils.c", "memcpy(dst, src, len);", "memcpy(dst, src, len < 64 ? len : 64);").ok);
  CHECK(ws.str_replace("utils.c", "no such text", "x").error_kind == ErrorCode::NoMatch);
  CHECK(ws.str_replace("utils.c", "    ", "\t").error_kind == ErrorCode::AmbiguousMatch);
  CHECK(ws.str_replace("utils.c", "", "x").error_kind == ErrorCode::NoMatch);
  CHECK(ws.create("new/dir/file.txt", "hello\n").ok);
  CHECK(ws.create("utils.c", "x").error_kind == ErrorCode::AlreadyExists);
  CHECK(ws.create("../escape.txt", "x").error_kind == ErrorCode::OutsideWorkspace);

  auto diff = ws.submit();
  // the same diff as git itself reports against the committed tree
  ts::sh("git add -A", repo);
  auto git_diff = ts::sh("git diff --cached --no-color --no-renames", repo).output;
  ts::sh("git reset -q", repo);
  CHECK(diff == git_diff);
  CHECK(diff.find("+    memcpy(dst, src, len < 64 ? len : 64);") != std::string::npos);
  CHECK(diff.find("new/dir/file.txt") != std::string::npos);

  auto mid = ws.snapshot();
  CHECK(ws.bash("echo extra > scratch.txt && rm tests/run_tests.sh").ok);
  ws.rollback(mid);
  CHECK(std::filesystem::exists(repo / "tests/run_tests.sh"));
  CHECK_FALSE(std::filesystem::exists(repo / "scratch.txt"));
  CHECK(std::filesystem::exists(repo / "new/dir/file.txt"));

  ws.rollback(ws.original_snapshot());
  CHECK(ts::tree_hashes(repo) == before);
  CHECK_FALSE(std::filesystem::exists(repo / "new"));
  CHECK(ws.submit().empty());
  CHECK_THROWS_AS(ws.rollback("0123456789abcdef0123456789abcdef01234567"), Error);

  // the checkout's own index is untouched
  CHECK(ts::sh("git status --porcelain", repo).output.empty());
}

TEST_CASE("diff between snapshots") {
  ts::TempDir tmp;
  Workspace ws(ts::fixture_repo(tmp));
  ws.str_replace("utils.h", "#define BUF_SIZE 64", "#define BUF_SIZE 16");
  auto a = ws.snapshot();
  ws.str_replace("utils.h", "#define BUF_SIZE 16", "#define BUF_SIZE 32");
  auto b = ws.snapshot();
  auto d = ws.diff(a, b);
  CHECK(d.find("-#define BUF_SIZE 16") != std::string::npos);
  CHECK(d.find("+#define BUF_SIZE 32") != std::string::npos);
  CHECK(ws.diff(a, a).empty());
}

TEST_CASE("bash tool") {
  ts::TempDir tmp;
  WorkspaceOptions o;
  o.bash_timeout = std::chrono::milliseconds(300);
  Workspace ws(ts::fixture_repo(tmp), o);
  CHECK(ws.bash("cd tests && pwd").output.find("/tests") != std::string::npos);
  CHECK(ws.bash("pwd").output.find("/tests") != std::string::npos);
  CHECK(ws.bash("exit_code_test() { return 4; }; exit_code_test").output.find("[exit status 4]") != std::string::npos);
  CHECK(ws.bash("sleep 5").error_kind == ErrorCode::Timeout);
  CHECK(ws.bash("", true).output == "shell restarted");
  CHECK(ws.bash("pwd").output.find("/tests") == std::string::npos);
}

TEST_CASE("tool call decoding") {
  auto j = nlohmann::json::parse(R"({"id":"c1","name":"view","args":{"path":"a.c","start_line":3,"flag":true}})");
  auto c = ToolCall::from_json(j);
  CHECK(c.id == "c1");
  CHECK(c.arg("start_line") == "3");
  CHECK(c.arg("flag") == "true");
  CHECK_FALSE(c.arg("missing"));
  CHECK(ToolCall::from_json(c.to_json()) == c);
  for (const char* bad : {R"({"args":{}})", R"({"name":5})", R"({"name":"view","args":[1]})",
                          R"({"name":"view","args":{"x":{"y":1}}})", R"([1])"}) {
    try {
      ToolCall::from_json(nlohmann::json::parse(bad));
      FAIL("accepted " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedToolCall);
    }
  }
  ToolCall unknown{"", "rm_rf", {}};
  CHECK_THROWS_AS(unknown.validate(), Error);
}
