#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchmem/error.hpp"
#include "patchmem/process.hpp"

namespace patchmem {

inline const std::set<std::string>& tool_names() {
  static const std::set<std::string> names{"view",         "search",   "create", "str_replace", "bash",
                                           "check_vul",    "log_compress", "iter_grep", "submit"};
  return names;
}

struct ToolCall {
  std::string id;  // correlates a call with its result turn; may be empty
  std::string name;
  std::map<std::string, std::string> args;

  /// Throws Error(UnknownTool) for names outside tool_names().
  void validate() const;
  std::optional<std::string> arg(const std::string& key) const;

  nlohmann::json to_json() const;
  /// Throws Error(MalformedToolCall).
  static ToolCall from_json(const nlohmann::json& j);

  bool operator==(const ToolCall&) const = default;
};

struct ToolResult {
  bool ok = true;
  std::string output;
  std::optional<ErrorCode> error_kind;

  static ToolResult success(std::string output) { return {true, std::move(output), std::nullopt}; }
  static ToolResult failure(ErrorCode code, std::string message) { return {false, std::move(message), code}; }

  nlohmann::json to_json() const;
};

struct WorkspaceOptions {
  std::chrono::milliseconds bash_timeout{std::chrono::seconds(300)};
  std::size_t output_cap = 20000;
  int search_limit = 5;
  bool search_limit_per_file = false;
  int search_context = 2;
  int list_depth = 2;
};

/// A git checkout the agent edits. Snapshots are git trees written through a
/// private index, so the checkout's own index and refs are never touched.
/// The state at construction is the original snapshot.
class Workspace {
 public:
  /// Throws Error(InvariantViolation) when `root` is not inside a git work tree.
  explicit Workspace(std::filesystem::path root, WorkspaceOptions options = {});
  ~Workspace();

  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const std::filesystem::path& root() const { return root_; }
  const WorkspaceOptions& options() const { return options_; }
  const std::string& original_snapshot() const { return original_; }

  ToolResult view(const std::string& path, std::optional<std::pair<int, int>> window = std::nullopt) const;
  ToolResult search(const std::string& pattern, const std::string& search_path = ".") const;
  ToolResult create(const std::string& path, const std::string& text);
  ToolResult str_replace(const std::string& path, const std::string& old_text, const std::string& new_text);
  ToolResult bash(const std::string& command, bool restart = false);

  /// Tree id of the current content.
  std::string snapshot();
  /// Throws Error(SnapshotMissing) for ids this workspace never produced.
  void rollback(const std::string& snapshot_id);
  /// Diff of the current content against the original snapshot.
  std::string submit();
  /// `git diff from to` between two snapshot ids.
  std::string diff(const std::string& from, const std::string& to) const;

  /// Repo-relative path for `path`, or Error(OutsideWorkspace).
  std::string relative(const std::string& path) const;

 private:
  std::filesystem::path resolve(const std::string& path) const;
  ProcessResult git(const std::vector<std::string>& args, bool private_index) const;
  std::string git_checked(const std::vector<std::string>& args, bool private_index) const;

  std::filesystem::path root_;
  WorkspaceOptions options_;
  std::filesystem::path index_file_;
  std::string original_;
  std::set<std::string> snapshots_;
  std::set<std::string> created_files_;  // repo-relative
  std::set<std::string> created_dirs_;
  std::unique_ptr<ShellSession> shell_;
};

}  // namespace patchmem
