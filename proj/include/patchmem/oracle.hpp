#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "patchmem/process.hpp"

namespace patchmem {

enum class PassPredicate { ExitZero, NoSanitizerFault };

std::string_view to_string(PassPredicate p);
std::optional<PassPredicate> parse_pass_predicate(std::string_view s);

struct OracleSpec {
  std::string build_command;  // optional
  std::string poc_command;
  std::string regression_command;
  PassPredicate poc_predicate = PassPredicate::NoSanitizerFault;
  PassPredicate regression_predicate = PassPredicate::ExitZero;
  std::chrono::seconds command_timeout{600};
  std::chrono::seconds total_budget{1800};
  std::size_t log_cap = 20000;  // per command

  /// Throws Error(InvalidOracle).
  void validate() const;
};

struct VerificationVerdict {
  bool vuln_mitigated = false;
  bool functionality_preserved = false;
  bool build_ok = false;
  std::string logs;
  std::set<std::string> failing_tests;  // baseline-passing tests that no longer pass

  nlohmann::json to_json() const;
};

/// True when the output carries an AddressSanitizer-style fault report.
bool has_sanitizer_fault(std::string_view output);

bool passes(PassPredicate predicate, const ProcessResult& result);

/// Per-test results from regression output. Recognizes `PASS: name` /
/// `FAIL: name` lines (also XFAIL/XPASS/ERROR/SKIP) and TAP `ok` / `not ok`
/// lines. Empty when the output has neither.
std::map<std::string, bool> parse_test_results(std::string_view output);

/// Runs the oracle against one workspace directory. The first call to
/// check_vul (or an explicit validate_pristine) records the baseline from the
/// current, assumed pristine, content.
class Oracle {
 public:
  Oracle(OracleSpec spec, std::filesystem::path root);

  const OracleSpec& spec() const { return spec_; }

  /// Builds and runs PoC and regression on the pristine tree. Throws
  /// Error(InvalidOracle) when the PoC already passes or the build fails.
  void validate_pristine();
  bool validated() const { return baseline_.has_value(); }
  const std::set<std::string>& baseline_passing() const;

  /// Build, PoC, regression. Throws Error(OracleTimeout) or
  /// Error(BuildToolMissing).
  VerificationVerdict check_vul();

  /// Runs build and PoC only and returns the PoC output (crash report refresh).
  std::string reproduce();

  int candidate_runs() const { return candidate_runs_; }
  std::chrono::milliseconds time_spent() const { return spent_; }

 private:
  ProcessResult run(const std::string& what, const std::string& command);
  std::map<std::string, bool> regression_results(const ProcessResult& r) const;

  OracleSpec spec_;
  std::filesystem::path root_;
  std::optional<std::set<std::string>> baseline_;
  int candidate_runs_ = 0;
  std::chrono::milliseconds spent_{0};
};

}  // namespace patchmem
