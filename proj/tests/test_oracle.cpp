#include <doctest.h>

#include "patchmem/error.hpp"
#include "patchmem/oracle.hpp"
#include "patchmem/workspace.hpp"
#include "support/testing.hpp"

using namespace patchmem;
namespace ts = testing_support;

namespace {

OracleSpec fixture_spec() {
  OracleSpec s;
  s.build_command = "make -s -B app";
  s.poc_command = "sh ./poc.sh";
  s.regression_command = "sh ./tests/run_tests.sh";
  return s;
}

const char* kGoodGuard = "    if (len > BUF_SIZE) {\n        len = BUF_SIZE;\n    }\n    memcpy(dst, src, len);";
const char* kBadGuard = "    if (len > 16) {\n        len = 16;\n    }\n    memcpy(dst, src, len);";

}  // namespace

TEST_CASE("sanitizer fault detection") {
  CHECK(has_sanitizer_fault("==1==ERROR: AddressSanitizer: heap-use-after-free"));
  CHECK(has_sanitizer_fault("SUMMARY: UndefinedBehaviorSanitizer: undefined-behavior a.c:3"));
  CHECK(has_sanitizer_fault("a.c:3:5: runtime error: signed integer overflow"));
  CHECK_FALSE(has_sanitizer_fault("ERROR: test suite failed"));
  CHECK_FALSE(has_sanitizer_fault("SUMMARY: 3 tests passed"));
  CHECK_FALSE(has_sanitizer_fault("all good"));
  ProcessResult ok{0, false, "clean", {}};
  ProcessResult asan{0, false, "==1==ERROR: AddressSanitizer: x", {}};
  ProcessResult bad{1, false, "", {}};
  ProcessResult slow{0, true, "", {}};
  CHECK(passes(PassPredicate::ExitZero, ok));
  CHECK(passes(PassPredicate::ExitZero, asan));
  CHECK_FALSE(passes(PassPredicate::NoSanitizerFault, asan));
  CHECK_FALSE(passes(PassPredicate::ExitZero, bad));
  CHECK_FALSE(passes(PassPredicate::ExitZero, slow));
}

TEST_CASE("regression output parsing") {
  auto r = parse_test_results("PASS: a\nFAIL: b\nXFAIL: c\nXPASS: d\nSKIP: e\nERROR: f\nok 1 - g\nnot ok 2 - h\nok 3\n"
                              "PASS: a\nnoise\nPASS:\n");
  CHECK(r.size() == 9);
  CHECK(r["a"]);
  CHECK_FALSE(r["b"]);
  CHECK(r["c"]);
  CHECK_FALSE(r["d"]);
  CHECK(r["e"]);
  CHECK_FALSE(r["f"]);
  CHECK(r["g"]);
  CHECK_FALSE(r["h"]);
  CHECK(r["3"]);
  auto twice = parse_test_results("PASS: x\nFAIL: x\n");
  CHECK_FALSE(twice["x"]);
  CHECK(parse_test_results("nothing\n").empty());
}

TEST_CASE("predicate names") {
  CHECK(parse_pass_predicate("exit_zero") == PassPredicate::ExitZero);
  CHECK(parse_pass_predicate("no_sanitizer_fault") == PassPredicate::NoSanitizerFault);
  CHECK_FALSE(parse_pass_predicate("maybe"));
  CHECK(to_string(PassPredicate::NoSanitizerFault) == "no_sanitizer_fault");
  OracleSpec s;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("oracle verdicts on the overflow fixture") {
  ts::TempDir tmp;
  auto repo = ts::fixture_repo(tmp);
  Workspace ws(repo);
  Oracle oracle(fixture_spec(), repo);
  oracle.validate_pristine();
  CHECK(oracle.baseline_passing() == std::set<std::string>{"echo_short", "echo_63_chars", "upper_checksum"});

  SUBCASE("correct patch") {
    ws.str_replace("utils.c", "    memcpy(dst, src, len);", kGoodGuard);
    auto v = oracle.check_vul();
    CHECK(v.build_ok);
    CHECK(v.vuln_mitigated);
    CHECK(v.functionality_preserved);
    CHECK(v.logs.find("== poc (exit 0) ==") != std::string::npos);
  }
  SUBCASE("patch that breaks a test") {
    ws.str_replace("utils.c", "    memcpy(dst, src, len);", kBadGuard);
    auto v = oracle.check_vul();
    CHECK(v.vuln_mitigated);
    CHECK_FALSE(v.functionality_preserved);
    CHECK(v.failing_tests == std::set<std::string>{"echo_63_chars"});
  }
  SUBCASE("patch that does not help") {
    ws.str_replace("main.c", "fixed-size buffer", "fixed buffer");
    auto v = oracle.check_vul();
    CHECK_FALSE(v.vuln_mitigated);
    CHECK(v.functionality_preserved);
    CHECK(oracle.reproduce().find("heap-buffer-overflow") != std::string::npos);
  }
  SUBCASE("patch that does not compile") {
    ws.str_replace("utils.c", "    memcpy(dst, src, len);", "    memcpy(dst, src, len)");
    auto v = oracle.check_vul();
    CHECK_FALSE(v.build_ok);
    CHECK_FALSE(v.vuln_mitigated);
    CHECK_FALSE(v.functionality_preserved);
  }
  CHECK(oracle.candidate_runs() == 1);
}

TEST_CASE("invalid oracles are rejected on the pristine tree") {
  ts::TempDir tmp;
  auto repo = ts::fixture_repo(tmp);
  auto spec = fixture_spec();
  spec.poc_command = "true";
  CHECK_THROWS_AS(Oracle(spec, repo).validate_pristine(), Error);

  spec = fixture_spec();
  spec.build_command = "exit 2";
  CHECK_THROWS_AS(Oracle(spec, repo).validate_pristine(), Error);

  spec = fixture_spec();
  spec.build_command = "no-such-build-tool-xyz";
  try {
    Oracle(spec, repo).validate_pristine();
    FAIL("missing build tool accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BuildToolMissing);
  }
}

TEST_CASE("oracle timeouts") {
  ts::TempDir tmp;
  auto repo = ts::fixture_repo(tmp);
  OracleSpec spec;
  spec.poc_command = "sleep 5";
  spec.regression_command = "true";
  spec.command_timeout = std::chrono::seconds(1);
  Oracle o(spec, repo);
  try {
    o.validate_pristine();
    FAIL("no timeout");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OracleTimeout);
  }
}

TEST_CASE("a suite without per-test lines is judged as a whole") {
  ts::TempDir tmp;
  auto repo = ts::fixture_repo(tmp);
  ts::spit(repo / "flag", "ok\n");
  OracleSpec spec;
  spec.poc_command = "test -f fixed";
  spec.regression_command = "grep -q ok flag";
  Oracle o(spec, repo);
  o.validate_pristine();
  CHECK(o.baseline_passing() == std::set<std::string>{"<regression suite>"});
  ts::spit(repo / "fixed", "");
  ts::spit(repo / "flag", "bad\n");
  auto v = o.check_vul();
  CHECK(v.vuln_mitigated);
  CHECK_FALSE(v.functionality_preserved);
}
