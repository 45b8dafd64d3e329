#include "patchmem/workspace.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <regex>
#include <sstream>

#include "patchmem/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace patchmem {

void ToolCall::validate() const {
  if (!tool_names().contains(name)) throw Error(ErrorCode::UnknownTool, "unknown tool '" + name + "'");
}

std::optional<std::string> ToolCall::arg(const std::string& key) const {
  auto it = args.find(key);
  if (it == args.end()) return std::nullopt;
  return it->second;
}

json ToolCall::to_json() const {
  json j{{"name", name}, {"args", args}};
  if (!id.empty()) j["id"] = id;
  return j;
}

ToolCall ToolCall::from_json(const json& j) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw Error(ErrorCode::MalformedToolCall, "tool call needs a string 'name': " + j.dump());
  ToolCall c;
  c.name = j["name"].get<std::string>();
  if (j.contains("id")) {
    if (!j["id"].is_string()) throw Error(ErrorCode::MalformedToolCall, "tool call 'id' must be a string");
    c.id = j["id"].get<std::string>();
  }
  if (j.contains("args")) {
    const auto& a = j["args"];
    if (!a.is_object()) throw Error(ErrorCode::MalformedToolCall, "tool call 'args' must be an object");
    for (const auto& [k, v] : a.items()) {
      if (v.is_string())
        c.args[k] = v.get<std::string>();
      else if (v.is_number() || v.is_boolean())
        c.args[k] = v.dump();
      else
        throw Error(ErrorCode::MalformedToolCall, "argument '" + k + "' must be a string");
    }
  }
  return c;
}

json ToolResult::to_json() const {
  json j{{"ok", ok}, {"output", output}};
  if (error_kind) j["error_kind"] = std::string(to_string(*error_kind));
  return j;
}

namespace {

std::atomic<unsigned> g_index_counter{0};

bool is_within(const fs::path& root, const fs::path& p) {
  auto r = root.begin();
  auto q = p.begin();
  for (; r != root.end(); ++r, ++q) {
    if (q == p.end() || *r != *q) return false;
  }
  return true;
}

std::string numbered(const std::vector<std::string_view>& lines, int first, int last) {
  std::string out;
  char buf[32];
  for (int i = first; i <= last; ++i) {
    std::snprintf(buf, sizeof buf, "%6d\t", i);
    out += buf;
    out += lines[static_cast<std::size_t>(i - 1)];
    out += '\n';
  }
  return out;
}

std::vector<fs::path> regular_files_under(const fs::path& base) {
  std::vector<fs::path> out;
  if (fs::is_regular_file(base)) return {base};
  std::error_code ec;
  fs::recursive_directory_iterator it(base, fs::directory_options::skip_permission_denied, ec);
  for (; !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (it->is_directory() && it->path().filename() == ".git") {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file()) out.push_back(it->path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Workspace::Workspace(fs::path root, WorkspaceOptions options) : options_(options) {
  std::error_code ec;
  root_ = fs::canonical(root, ec);
  if (ec || !fs::is_directory(root_))
    throw Error(ErrorCode::InvariantViolation, "workspace root is not a directory: " + root.string());
  ProcessOptions probe;
  probe.timeout = std::chrono::seconds(60);
  auto top = run_process({"git", "-C", root_.string(), "rev-parse", "--show-toplevel", "--absolute-git-dir"}, probe);
  auto lines = text::split_lines(top.output);
  if (top.exit_code != 0 || lines.size() < 2 || fs::canonical(std::string(lines[0]), ec) != root_)
    throw Error(ErrorCode::InvariantViolation, "workspace root must be the top of a git work tree: " + root_.string());
  fs::path git_dir{std::string(lines[1])};
  index_file_ = git_dir / ("patchmem-" + std::to_string(::getpid()) + "-" +
                           std::to_string(g_index_counter.fetch_add(1)) + ".index");
  // Seeding from the real index keeps tracked-but-ignored files in snapshots.
  if (fs::exists(git_dir / "index")) fs::copy_file(git_dir / "index", index_file_, fs::copy_options::overwrite_existing, ec);
  original_ = snapshot();
}

Workspace::~Workspace() {
  std::error_code ec;
  fs::remove(index_file_, ec);
}

ProcessResult Workspace::git(const std::vector<std::string>& args, bool private_index) const {
  std::vector<std::string> argv{"git", "-C", root_.string(), "-c", "core.quotepath=false", "-c",
                                "core.autocrlf=false"};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessOptions opts;
  opts.timeout = std::chrono::minutes(5);
  if (private_index) opts.env["GIT_INDEX_FILE"] = index_file_.string();
  return run_process(argv, opts);
}

std::string Workspace::git_checked(const std::vector<std::string>& args, bool private_index) const {
  auto r = git(args, private_index);
  if (r.exit_code != 0)
    throw Error(ErrorCode::IoError, "git " + (args.empty() ? std::string() : args[0]) + " failed: " + r.output);
  return r.output;
}

fs::path Workspace::resolve(const std::string& path) const {
  fs::path p(path);
  if (p.is_relative()) p = root_ / p;
  std::error_code ec;
  auto canon = fs::weakly_canonical(p, ec);
  if (ec) canon = p.lexically_normal();
  if (!is_within(root_, canon)) throw Error(ErrorCode::OutsideWorkspace, "path outside the workspace: " + path);
  return canon;
}

std::string Workspace::relative(const std::string& path) const {
  auto rel = resolve(path).lexically_relative(root_).generic_string();
  return rel.empty() ? "." : rel;
}

ToolResult Workspace::view(const std::string& path, std::optional<std::pair<int, int>> window) const {
  fs::path p;
  try {
    p = resolve(path);
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  std::error_code ec;
  if (!fs::exists(p, ec)) return ToolResult::failure(ErrorCode::NotFound, "no such path: " + path);

  if (fs::is_directory(p)) {
    std::vector<std::string> items;
    fs::recursive_directory_iterator it(p, fs::directory_options::skip_permission_denied, ec);
    for (; !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (it->path().filename() == ".git") {
        it.disable_recursion_pending();
        continue;
      }
      if (it.depth() + 1 > options_.list_depth) {
        it.disable_recursion_pending();
        continue;
      }
      auto rel = it->path().lexically_relative(p).generic_string();
      if (it->is_directory()) {
        rel += '/';
        if (it.depth() + 1 >= options_.list_depth) it.disable_recursion_pending();
      }
      items.push_back(rel);
    }
    std::sort(items.begin(), items.end());
    std::string out;
    for (const auto& i : items) out += i + '\n';
    return ToolResult::success(text::cap_head_tail(out, options_.output_cap));
  }

  std::string content;
  try {
    content = text::read_file(p.string());
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  if (text::looks_binary(content))
    return ToolResult::success("[binary file, " + std::to_string(content.size()) + " bytes]");
  auto lines = text::split_lines(content);
  if (!content.empty() && content.back() == '\n' && !lines.empty() && lines.back().empty()) lines.pop_back();
  const int n = static_cast<int>(lines.size());
  int first = 1;
  int last = n;
  if (window) {
    first = std::max(1, window->first);
    last = std::min(n, window->second);
  }
  if (first > last) {
    return ToolResult::success("[no lines in window; file has " + std::to_string(n) + " lines]");
  }
  return ToolResult::success(text::cap_head_tail(numbered(lines, first, last), options_.output_cap));
}

ToolResult Workspace::search(const std::string& pattern, const std::string& search_path) const {
  std::regex re;
  try {
    re = std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    return ToolResult::failure(ErrorCode::BadPattern, "invalid regular expression '" + pattern + "': " + e.what());
  }
  fs::path base;
  try {
    base = resolve(search_path.empty() ? "." : search_path);
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  std::error_code ec;
  if (!fs::exists(base, ec)) return ToolResult::failure(ErrorCode::NotFound, "no such path: " + search_path);

  const auto limit = static_cast<std::size_t>(std::max(1, options_.search_limit));
  const int ctx = std::max(0, options_.search_context);
  std::size_t total = 0;
  std::size_t shown = 0;
  std::string out;
  for (const auto& file : regular_files_under(base)) {
    if (fs::file_size(file, ec) > 2 * 1024 * 1024 || ec) continue;
    std::string content;
    try {
      content = text::read_file(file.string());
    } catch (const Error&) {
      continue;
    }
    if (text::looks_binary(content)) continue;
    auto lines = text::split_lines(content);
    if (!content.empty() && content.back() == '\n' && !lines.empty() && lines.back().empty()) lines.pop_back();
    const auto rel = file.lexically_relative(root_).generic_string();
    std::size_t shown_here = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string line(lines[i]);
      if (!std::regex_search(line, re)) continue;
      ++total;
      bool room = options_.search_limit_per_file ? shown_here < limit : shown < limit;
      if (!room) continue;
      ++shown;
      ++shown_here;
      if (!out.empty()) out += "--\n";
      const std::size_t lo = i >= static_cast<std::size_t>(ctx) ? i - static_cast<std::size_t>(ctx) : 0;
      const std::size_t hi = std::min(lines.size() - 1, i + static_cast<std::size_t>(ctx));
      for (std::size_t j = lo; j <= hi; ++j) {
        out += rel + (j == i ? ":" : "-") + std::to_string(j + 1) + (j == i ? ":" : "-");
        out += lines[j];
        out += '\n';
      }
    }
  }
  if (total == 0) return ToolResult::success("No matches.");
  if (shown < total)
    out += "[showing " + std::to_string(shown) + " of " + std::to_string(total) +
           " matches; narrow the pattern or path]\n";
  return ToolResult::success(text::cap_head_tail(out, options_.output_cap));
}

ToolResult Workspace::create(const std::string& path, const std::string& content) {
  fs::path p;
  try {
    p = resolve(path);
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  std::error_code ec;
  if (fs::exists(fs::symlink_status(p, ec))) return ToolResult::failure(ErrorCode::AlreadyExists, "path already exists: " + path);
  // Remember directories we create so rollback can remove them too.
  std::vector<fs::path> missing;
  for (auto d = p.parent_path(); d != root_ && !fs::exists(d, ec); d = d.parent_path()) missing.push_back(d);
  fs::create_directories(p.parent_path(), ec);
  if (ec) return ToolResult::failure(ErrorCode::IoError, "cannot create directory: " + ec.message());
  for (const auto& d : missing) created_dirs_.insert(d.lexically_relative(root_).generic_string());
  try {
    text::write_file(p.string(), content);
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  created_files_.insert(p.lexically_relative(root_).generic_string());
  return ToolResult::success("created " + p.lexically_relative(root_).generic_string());
}

ToolResult Workspace::str_replace(const std::string& path, const std::string& old_text, const std::string& new_text) {
  fs::path p;
  try {
    p = resolve(path);
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  if (!fs::is_regular_file(p)) return ToolResult::failure(ErrorCode::NotFound, "no such file: " + path);
  if (old_text.empty()) return ToolResult::failure(ErrorCode::NoMatch, "old text is empty");
  std::string content;
  try {
    content = text::read_file(p.string());
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
  auto n = text::count_occurrences(content, old_text);
  if (n == 0) return ToolResult::failure(ErrorCode::NoMatch, "old text not found in " + path);
  if (n > 1)
    return ToolResult::failure(ErrorCode::AmbiguousMatch,
                               "old text occurs " + std::to_string(n) + " times in " + path + "; make it unique");
  auto pos = content.find(old_text);
  std::string updated = content.substr(0, pos) + new_text + content.substr(pos + old_text.size());
  // Write a sibling then rename, so a failed write leaves the file intact.
  auto tmp = p;
  tmp += ".patchmem-tmp";
  try {
    text::write_file(tmp.string(), updated);
    std::error_code ec;
    fs::permissions(tmp, fs::status(p).permissions(), ec);
    fs::rename(tmp, p);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(tmp, ec);
    return ToolResult::failure(ErrorCode::IoError, std::string("write failed: ") + e.what());
  }
  auto line = 1 + std::count(content.begin(), content.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
  return ToolResult::success("replaced 1 occurrence in " + p.lexically_relative(root_).generic_string() +
                             " at line " + std::to_string(line));
}

ToolResult Workspace::bash(const std::string& command, bool restart) {
  try {
    if (!shell_) {
      shell_ = std::make_unique<ShellSession>(root_, options_.output_cap);
    } else if (restart) {
      shell_->restart();
    }
    if (command.empty()) return ToolResult::success(restart ? "shell restarted" : "");
    auto r = shell_->run(command, options_.bash_timeout);
    if (r.exit_code != 0) r.output += "\n[exit status " + std::to_string(r.exit_code) + "]";
    return ToolResult::success(text::cap_head_tail(r.output, options_.output_cap));
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
}

std::string Workspace::snapshot() {
  git_checked({"add", "-A"}, true);
  auto tree = std::string(text::trim(git_checked({"write-tree"}, true)));
  snapshots_.insert(tree);
  return tree;
}

void Workspace::rollback(const std::string& snapshot_id) {
  if (!snapshots_.contains(snapshot_id))
    throw Error(ErrorCode::SnapshotMissing, "unknown snapshot '" + snapshot_id + "'");
  git_checked({"add", "-A"}, true);
  git_checked({"read-tree", "--reset", "-u", snapshot_id}, true);

  std::set<std::string> in_tree;
  const auto listing = git_checked({"ls-tree", "-r", "--name-only", snapshot_id}, false);
  for (auto l : text::split_lines(listing))
    if (!l.empty()) in_tree.insert(std::string(l));
  std::error_code ec;
  for (const auto& f : created_files_)
    if (!in_tree.contains(f)) fs::remove(root_ / f, ec);
  // Deepest first; only directories that ended up empty.
  for (auto it = created_dirs_.rbegin(); it != created_dirs_.rend(); ++it) {
    auto d = root_ / *it;
    if (fs::is_directory(d, ec) && fs::is_empty(d, ec)) fs::remove(d, ec);
  }
}

std::string Workspace::submit() { return diff(original_, snapshot()); }

std::string Workspace::diff(const std::string& from, const std::string& to) const {
  return git_checked({"diff", "--no-color", "--no-ext-diff", "--no-renames", from, to}, false);
}

}  // namespace patchmem
