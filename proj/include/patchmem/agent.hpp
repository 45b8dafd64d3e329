#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchmem/compress.hpp"
#include "patchmem/config.hpp"
#include "patchmem/gateway.hpp"
#include "patchmem/localizer.hpp"
#include "patchmem/memory.hpp"
#include "patchmem/oracle.hpp"
#include "patchmem/prompt.hpp"
#include "patchmem/retrieval.hpp"
#include "patchmem/workspace.hpp"

namespace patchmem {

enum class Transition { Success, Relocate, Regenerate };
std::string_view to_string(Transition t);

/// Success iff both hold; Relocate whenever the vulnerability persists;
/// Regenerate when it is fixed but regressions appeared.
Transition decide_transition(bool vuln_mitigated, bool functionality_preserved);
inline Transition decide_transition(const VerificationVerdict& v) {
  return decide_transition(v.vuln_mitigated, v.functionality_preserved);
}

struct RepairTask {
  std::filesystem::path repo;
  OracleSpec oracle;
  RetrievalKeys keys;
  std::vector<std::string> ground_truth_files;
  std::optional<std::filesystem::path> transcript;  // scripted backend override

  /// Reads task.json; relative paths resolve against its directory.
  /// Throws Error(ConfigError).
  static RepairTask load(const std::filesystem::path& task_json);
  static RepairTask from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

/// Parses the first JSON object in `text` that names a file.
std::optional<LocalizationObject> parse_localization(std::string_view text);

/// Executes agent tool calls against a workspace.
class ToolRunner {
 public:
  ToolRunner(Workspace& workspace, Oracle* oracle, const EngineConfig& config);

  void set_crash_report(std::optional<CrashReport> report) { report_ = std::move(report); }
  ToolResult run(const ToolCall& call, const std::set<std::string>& allowed);

  const std::vector<VisitedRange>& visited() const { return visited_; }
  void clear_visited() { visited_.clear(); }
  void note_visit(VisitedRange r) { visited_.push_back(std::move(r)); }

 private:
  ToolResult dispatch(const ToolCall& call);
  const SymbolIndex& index();

  Workspace& ws_;
  Oracle* oracle_;
  const EngineConfig& config_;
  std::optional<CrashReport> report_;
  std::optional<SymbolIndex> index_;
  std::vector<VisitedRange> visited_;
};

enum class SessionPhase { Locate, Patch, Verify, Done };
enum class Outcome { Success, Exhausted };
std::string_view to_string(SessionPhase p);
std::string_view to_string(Outcome o);

struct AttemptReport {
  int number = 0;
  std::optional<LocalizationObject> localization;
  std::string patch;
  std::optional<VerificationVerdict> verdict;
  Transition transition = Transition::Regenerate;
  std::string note;
  std::vector<std::string> locator_memories;
  std::vector<std::string> patcher_memories;

  nlohmann::json to_json() const;
};

struct SessionState {
  SessionPhase phase = SessionPhase::Locate;
  int failed_attempts = 0;
  std::optional<LocalizationObject> current_loc;
  std::optional<std::string> current_patch;
  std::optional<CompressedContext> compressed;
  std::vector<AttemptReport> attempt_history;
  std::optional<Outcome> outcome;
};

struct SessionReport {
  std::string instance_id;
  Outcome outcome = Outcome::Exhausted;
  std::string reason;
  int failed_attempts = 0;
  std::string final_diff;
  std::vector<AttemptReport> attempts;
  int oracle_runs = 0;
  Usage usage;
  double cost_usd = 0.0;
  std::optional<bool> localization_correct;
  bool l2_written = false;
  bool l3_written = false;
  std::chrono::milliseconds elapsed{0};

  nlohmann::json to_json() const;
};

/// Append-only log of turns, tool calls and control events.
class Trajectory {
 public:
  void add(nlohmann::json event) { events_.push_back(std::move(event)); }
  const std::vector<nlohmann::json>& events() const { return events_; }
  std::string to_jsonl() const;

 private:
  std::vector<nlohmann::json> events_;
};

/// One repair session: locate, patch, verify with tri-state control,
/// compression and rollback between attempts, consolidation on success.
class RepairSession {
 public:
  RepairSession(const RepairTask& task, Workspace& workspace, Oracle& oracle, ChatBackend& backend,
                SharedMemoryStore& store, Embedder& embedder, const EngineConfig& config);

  /// Throws only for configuration problems (InvalidOracle,
  /// BuildToolMissing on the pristine tree); run-time failures end the
  /// session as Exhausted.
  SessionReport run();

  LocalizationObject locate(int attempt);
  std::string patch(int attempt, const LocalizationObject& loc, const std::string& failed_patch);

  const SessionState& state() const { return state_; }
  const Trajectory& trajectory() const { return trajectory_; }

 private:
  std::vector<RankedEntry> memories(Tier tier, std::optional<std::string_view> override_text);
  std::vector<RankedEntry> experience(bool with_l3, const std::string& failed_patch);
  // Runs one phase conversation; returns the final assistant text.
  std::string converse(Phase phase, int attempt, const RenderedPrompt& prompt,
                       const std::set<std::string>& tools, bool* out_of_turns);
  void consolidate(SessionReport& report, const std::string& failed_tree, const std::string& accepted_tree);

  const RepairTask& task_;
  Workspace& ws_;
  Oracle& oracle_;
  ChatBackend& backend_;
  SharedMemoryStore& store_;
  Embedder& embedder_;
  const EngineConfig& config_;
  ToolRunner tools_;
  SessionState state_;
  Trajectory trajectory_;
  std::vector<std::string> last_prompt_memories_;
};

}  // namespace patchmem

namespace patchmem {

/// Copies `source` to `dest` (replacing it) and makes it a git repository
/// with one commit if it is not one already. Returns `dest`.
std::filesystem::path prepare_scratch(const std::filesystem::path& source, const std::filesystem::path& dest);

struct TaskRun {
  SessionReport report;
  std::filesystem::path report_path;
  std::filesystem::path trajectory_path;
};

/// Sets up workspace, oracle and backend for `task`, runs the session and
/// writes report.json and trajectory.jsonl into `out_dir`. With
/// `scratch_root` the repository is copied to scratch_root/<instance_id>
/// first. Configuration problems throw (ConfigError, InvalidOracle, ...).
TaskRun run_task(const RepairTask& task, const EngineConfig& config, SharedMemoryStore& store, Embedder& embedder,
                 const std::filesystem::path& out_dir,
                 const std::optional<std::filesystem::path>& scratch_root = std::nullopt);

}  // namespace patchmem
