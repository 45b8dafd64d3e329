#include "patchmem/oracle.hpp"

#include <algorithm>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

namespace patchmem {

namespace {
constexpr const char* kWholeSuite = "<regression suite>";
}

std::string_view to_string(PassPredicate p) {
  return p == PassPredicate::ExitZero ? "exit_zero" : "no_sanitizer_fault";
}

std::optional<PassPredicate> parse_pass_predicate(std::string_view s) {
  if (s == "exit_zero") return PassPredicate::ExitZero;
  if (s == "no_sanitizer_fault" || s == "sanitizer") return PassPredicate::NoSanitizerFault;
  return std::nullopt;
}

void OracleSpec::validate() const {
  if (text::trim(poc_command).empty()) throw Error(ErrorCode::InvalidOracle, "poc_command is empty");
  if (text::trim(regression_command).empty()) throw Error(ErrorCode::InvalidOracle, "regression_command is empty");
  if (command_timeout.count() <= 0 || total_budget.count() <= 0)
    throw Error(ErrorCode::InvalidOracle, "oracle timeouts must be positive");
}

nlohmann::json VerificationVerdict::to_json() const {
  return {{"build_ok", build_ok},
          {"vuln_mitigated", vuln_mitigated},
          {"functionality_preserved", functionality_preserved},
          {"failing_tests", failing_tests},
          {"logs", logs}};
}

bool has_sanitizer_fault(std::string_view output) {
  for (auto line : text::split_lines(output)) {
    auto t = text::trim(line);
    if (t.starts_with("==") || t.starts_with("ERROR:")) {
      auto pos = t.find("ERROR: ");
      if (pos != std::string_view::npos && text::contains(t.substr(pos), "Sanitizer")) return true;
    }
    if (t.starts_with("SUMMARY: ") && text::contains(t, "Sanitizer")) return true;
    if (text::contains(t, "runtime error:")) return true;  // UBSan
  }
  return false;
}

bool passes(PassPredicate predicate, const ProcessResult& result) {
  if (result.timed_out || result.exit_code != 0) return false;
  return predicate == PassPredicate::ExitZero || !has_sanitizer_fault(result.output);
}

std::map<std::string, bool> parse_test_results(std::string_view output) {
  std::map<std::string, bool> out;
  static const std::pair<std::string_view, bool> kPrefixes[] = {
      {"PASS:", true}, {"XFAIL:", true}, {"SKIP:", true}, {"FAIL:", false}, {"XPASS:", false}, {"ERROR:", false}};
  for (auto line : text::split_lines(output)) {
    auto t = text::trim(line);
    bool matched = false;
    for (const auto& [prefix, ok] : kPrefixes) {
      if (t.starts_with(prefix)) {
        auto name = std::string(text::trim(t.substr(prefix.size())));
        if (!name.empty()) {
          // A test reported twice counts as failed if any report failed.
          auto [it, fresh] = out.emplace(name, ok);
          if (!fresh) it->second = it->second && ok;
        }
        matched = true;
        break;
      }
    }
    if (matched) continue;
    bool ok = t.starts_with("ok ");
    if (!ok && !t.starts_with("not ok ")) continue;
    auto rest = text::trim(t.substr(ok ? 3 : 7));
    // TAP: "ok 3 - name"
    auto dash = rest.find(" - ");
    auto name = std::string(text::trim(dash == std::string_view::npos ? rest : rest.substr(dash + 3)));
    if (name.empty()) continue;
    auto [it, fresh] = out.emplace(name, ok);
    if (!fresh) it->second = it->second && ok;
  }
  return out;
}

Oracle::Oracle(OracleSpec spec, std::filesystem::path root) : spec_(std::move(spec)), root_(std::move(root)) {
  spec_.validate();
}

const std::set<std::string>& Oracle::baseline_passing() const {
  if (!baseline_) throw Error(ErrorCode::InvalidOracle, "oracle baseline not established");
  return *baseline_;
}

ProcessResult Oracle::run(const std::string& what, const std::string& command) {
  auto budget_left = std::chrono::duration_cast<std::chrono::milliseconds>(spec_.total_budget) - spent_;
  if (budget_left.count() <= 0) throw Error(ErrorCode::OracleTimeout, "oracle budget exhausted before " + what);
  ProcessOptions opts;
  opts.cwd = root_;
  opts.timeout = std::min<std::chrono::milliseconds>(spec_.command_timeout, budget_left);
  opts.output_cap = spec_.log_cap;
  auto r = run_command(command, opts);
  spent_ += r.elapsed;
  if (r.timed_out)
    throw Error(ErrorCode::OracleTimeout, what + " timed out after " + std::to_string(opts.timeout.count()) + " ms");
  return r;
}

std::map<std::string, bool> Oracle::regression_results(const ProcessResult& r) const {
  auto results = parse_test_results(r.output);
  if (results.empty()) results[kWholeSuite] = passes(spec_.regression_predicate, r);
  return results;
}

namespace {

std::string section(const std::string& name, const ProcessResult& r) {
  return "== " + name + " (exit " + std::to_string(r.exit_code) + ") ==\n" + r.output +
         (r.output.empty() || r.output.back() == '\n' ? "" : "\n");
}

}  // namespace

void Oracle::validate_pristine() {
  spent_ = std::chrono::milliseconds{0};
  if (!text::trim(spec_.build_command).empty()) {
    auto b = run("build", spec_.build_command);
    if (b.exit_code == 127) throw Error(ErrorCode::BuildToolMissing, "build tool missing:\n" + b.output);
    if (b.exit_code != 0) throw Error(ErrorCode::InvalidOracle, "pristine build fails:\n" + b.output);
  }
  auto poc = run("poc", spec_.poc_command);
  if (passes(spec_.poc_predicate, poc))
    throw Error(ErrorCode::InvalidOracle, "the PoC already passes on the pristine repository");
  auto reg = run("regression", spec_.regression_command);
  std::set<std::string> pass;
  for (const auto& [name, ok] : regression_results(reg))
    if (ok) pass.insert(name);
  baseline_ = std::move(pass);
}

VerificationVerdict Oracle::check_vul() {
  if (!baseline_) validate_pristine();
  ++candidate_runs_;
  spent_ = std::chrono::milliseconds{0};
  VerificationVerdict v;
  if (!text::trim(spec_.build_command).empty()) {
    auto b = run("build", spec_.build_command);
    if (b.exit_code == 127) throw Error(ErrorCode::BuildToolMissing, "build tool missing:\n" + b.output);
    v.logs += section("build", b);
    if (b.exit_code != 0) return v;
  }
  v.build_ok = true;
  auto poc = run("poc", spec_.poc_command);
  v.logs += section("poc", poc);
  v.vuln_mitigated = passes(spec_.poc_predicate, poc);

  auto reg = run("regression", spec_.regression_command);
  v.logs += section("regression", reg);
  auto results = regression_results(reg);
  for (const auto& name : *baseline_) {
    auto it = results.find(name);
    if (it == results.end() || !it->second) v.failing_tests.insert(name);
  }
  v.functionality_preserved = v.failing_tests.empty();
  return v;
}

std::string Oracle::reproduce() {
  spent_ = std::chrono::milliseconds{0};
  std::string out;
  if (!text::trim(spec_.build_command).empty()) {
    auto b = run("build", spec_.build_command);
    if (b.exit_code == 127) throw Error(ErrorCode::BuildToolMissing, "build tool missing:\n" + b.output);
    if (b.exit_code != 0) return section("build", b);
  }
  return run("poc", spec_.poc_command).output;
}

}  // namespace patchmem
