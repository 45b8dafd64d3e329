#include "patchmem/agent.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "patchmem/corpus.hpp"
#include "patchmem/diff.hpp"
#include "patchmem/error.hpp"
#include "patchmem/prompt.hpp"
#include "patchmem/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace patchmem {

std::string_view to_string(Transition t) {
  switch (t) {
    case Transition::Success: return "success";
    case Transition::Relocate: return "relocate";
    case Transition::Regenerate: return "regenerate";
  }
  return "regenerate";
}

std::string_view to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::Locate: return "locate";
    case SessionPhase::Patch: return "patch";
    case SessionPhase::Verify: return "verify";
    case SessionPhase::Done: return "done";
  }
  return "done";
}

std::string_view to_string(Outcome o) { return o == Outcome::Success ? "success" : "exhausted"; }

Transition decide_transition(bool vuln_mitigated, bool functionality_preserved) {
  if (!vuln_mitigated) return Transition::Relocate;
  return functionality_preserved ? Transition::Success : Transition::Regenerate;
}

// ---------------------------------------------------------------------------
// task.json

namespace {

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
    throw Error(ErrorCode::ConfigError, std::string("task.json: '") + key + "' must be a non-empty string");
  return j[key].get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_string()) throw Error(ErrorCode::ConfigError, std::string("task.json: '") + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace

RepairTask RepairTask::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "task.json must hold an object");
  RepairTask t;
  fs::path repo(required_string(j, "repo"));
  t.repo = repo.is_relative() ? base_dir / repo : repo;
  t.oracle.build_command = optional_string(j, "build_command");
  t.oracle.poc_command = required_string(j, "poc_command");
  t.oracle.regression_command = required_string(j, "regression_command");
  if (j.contains("pass_predicates")) {
    const auto& p = j["pass_predicates"];
    if (!p.is_object()) throw Error(ErrorCode::ConfigError, "task.json: pass_predicates must be an object");
    auto read = [&](const char* key, PassPredicate& out) {
      if (!p.contains(key)) return;
      auto parsed = p[key].is_string() ? parse_pass_predicate(p[key].get<std::string>()) : std::nullopt;
      if (!parsed)
        throw Error(ErrorCode::ConfigError,
                    std::string("task.json: pass_predicates.") + key + " must be exit_zero or no_sanitizer_fault");
      out = *parsed;
    };
    read("poc", t.oracle.poc_predicate);
    read("regression", t.oracle.regression_predicate);
  }
  t.keys.instance_id = required_string(j, "instance_id");
  t.keys.project = required_string(j, "project");
  t.keys.language = text::to_lower(required_string(j, "language"));
  t.keys.description = required_string(j, "description");
  t.keys.cwe = normalize_cwe(optional_string(j, "cwe"));
  if (j.contains("ground_truth_files")) {
    if (!j["ground_truth_files"].is_array()) throw Error(ErrorCode::ConfigError, "task.json: ground_truth_files must be an array");
    for (const auto& f : j["ground_truth_files"]) {
      if (!f.is_string()) throw Error(ErrorCode::ConfigError, "task.json: ground_truth_files holds strings");
      t.ground_truth_files.push_back(f.get<std::string>());
    }
  }
  if (auto tr = optional_string(j, "transcript"); !tr.empty()) {
    fs::path p(tr);
    t.transcript = p.is_relative() ? base_dir / p : p;
  }
  try {
    t.oracle.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("task.json: ") + e.what());
  }
  return t;
}

RepairTask RepairTask::load(const fs::path& task_json) {
  std::string content;
  try {
    content = text::read_file(task_json.string());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "cannot read task file " + task_json.string() + ": " + e.what());
  }
  json j;
  try {
    j = json::parse(content);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, task_json.string() + ": " + e.what());
  }
  return from_json(j, task_json.parent_path());
}

// ---------------------------------------------------------------------------

std::optional<LocalizationObject> parse_localization(std::string_view s) {
  std::size_t next = 0;
  for (std::size_t start = s.find('{'); start != std::string_view::npos; start = s.find('{', next)) {
    next = start + 1;
    // Find the matching brace, skipping string literals.
    int depth = 0;
    bool in_str = false;
    std::size_t end = std::string_view::npos;
    for (std::size_t i = start; i < s.size(); ++i) {
      char c = s[i];
      if (in_str) {
        if (c == '\\') ++i;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        end = i;
        break;
      }
    }
    if (end == std::string_view::npos) continue;
    json j = json::parse(s.substr(start, end - start + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    next = end + 1;  // skip braces inside an object already read
    if (!j.contains("file") || !j["file"].is_string()) continue;
    LocalizationObject loc;
    loc.file = j["file"].get<std::string>();
    auto as_int = [&](const char* key) -> std::optional<int> {
      if (!j.contains(key)) return std::nullopt;
      if (j[key].is_number_integer()) return j[key].get<int>();
      if (j[key].is_string()) {
        int v = 0;
        auto str = j[key].get<std::string>();
        auto [p, ec] = std::from_chars(str.data(), str.data() + str.size(), v);
        if (ec == std::errc{} && p == str.data() + str.size()) return v;
      }
      return std::nullopt;
    };
    auto a = as_int("line_start");
    auto b = as_int("line_end");
    if (!a && j.contains("line_range") && j["line_range"].is_array() && j["line_range"].size() == 2 &&
        j["line_range"][0].is_number_integer() && j["line_range"][1].is_number_integer()) {
      a = j["line_range"][0].get<int>();
      b = j["line_range"][1].get<int>();
    }
    if (!a) a = as_int("line");
    if (!a) continue;
    loc.line_start = *a;
    loc.line_end = b.value_or(*a);
    loc.line = as_int("line").value_or(loc.line_start);
    if (j.contains("reason") && j["reason"].is_string()) loc.reason = j["reason"].get<std::string>();
    loc.rank = 1;
    return loc;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tools

ToolRunner::ToolRunner(Workspace& workspace, Oracle* oracle, const EngineConfig& config)
    : ws_(workspace), oracle_(oracle), config_(config) {}

const SymbolIndex& ToolRunner::index() {
  if (!index_) index_ = index_repository(ws_.root());
  return *index_;
}

namespace {

std::optional<int> int_arg(const ToolCall& c, const std::string& key) {
  auto v = c.arg(key);
  if (!v || text::trim(*v).empty()) return std::nullopt;
  auto t = text::trim(*v);
  int out = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || p != t.data() + t.size())
    throw Error(ErrorCode::BadArguments, "argument '" + key + "' must be an integer");
  return out;
}

std::string need(const ToolCall& c, const std::string& key) {
  auto v = c.arg(key);
  if (!v) throw Error(ErrorCode::BadArguments, "missing argument '" + key + "' for " + c.name);
  return *v;
}

int count_file_lines(const fs::path& p) {
  try {
    auto content = text::read_file(p.string());
    int n = static_cast<int>(std::count(content.begin(), content.end(), '\n'));
    return !content.empty() && content.back() != '\n' ? n + 1 : n;
  } catch (const Error&) {
    return 0;
  }
}

}  // namespace

ToolResult ToolRunner::run(const ToolCall& call, const std::set<std::string>& allowed) {
  if (!tool_names().contains(call.name))
    return ToolResult::failure(ErrorCode::UnknownTool, "unknown tool '" + call.name + "'");
  if (!allowed.contains(call.name))
    return ToolResult::failure(ErrorCode::UnknownTool, "tool '" + call.name + "' is not available in this phase");
  try {
    return dispatch(call);
  } catch (const Error& e) {
    return ToolResult::failure(e.code(), e.what());
  }
}

ToolResult ToolRunner::dispatch(const ToolCall& call) {
  const auto& n = call.name;
  if (n == "view") {
    auto path = need(call, "path");
    auto a = int_arg(call, "start_line");
    auto b = int_arg(call, "end_line");
    std::optional<std::pair<int, int>> window;
    if (a || b) window = std::make_pair(a.value_or(1), b.value_or(std::numeric_limits<int>::max()));
    auto r = ws_.view(path, window);
    if (r.ok) {
      auto rel = ws_.relative(path);
      auto full = ws_.root() / rel;
      if (fs::is_regular_file(full)) {
        int lines = count_file_lines(full);
        int lo = window ? std::max(1, window->first) : 1;
        int hi = window ? std::min(lines, window->second) : lines;
        if (lo <= hi) visited_.push_back({rel, lo, hi});
      }
    }
    return r;
  }
  if (n == "search") return ws_.search(need(call, "pattern"), call.arg("path").value_or("."));
  if (n == "create") {
    index_.reset();
    return ws_.create(need(call, "path"), need(call, "text"));
  }
  if (n == "str_replace") {
    index_.reset();
    return ws_.str_replace(need(call, "path"), need(call, "old"), call.arg("new").value_or(""));
  }
  if (n == "bash") {
    index_.reset();
    auto restart = call.arg("restart").value_or("false");
    return ws_.bash(call.arg("command").value_or(""), restart == "true" || restart == "1");
  }
  if (n == "iter_grep") {
    auto k = int_arg(call, "k").value_or(config_.iter_grep_k);
    auto hits = iter_grep(index(), need(call, "symbol"), report_, k, config_.context_radius);
    std::string out;
    for (const auto& h : hits)
      out += std::to_string(h.rank) + ". " + h.file + ":" + std::to_string(h.line) + " (lines " +
             std::to_string(h.line_start) + "-" + std::to_string(h.line_end) + ") " + h.reason + "\n";
    return ToolResult::success(out);
  }
  if (n == "check_vul") {
    if (oracle_ == nullptr) return ToolResult::failure(ErrorCode::InvalidOracle, "no oracle configured");
    auto v = oracle_->check_vul();
    auto j = v.to_json();
    j["logs"] = text::cap_head_tail(v.logs, config_.output_cap / 2);
    return ToolResult::success(j.dump(2));
  }
  if (n == "log_compress") {
    SessionMetadata meta{visited_, ws_.submit()};
    return ToolResult::success(log_compress(call.arg("logs").value_or(""), meta, config_.compression_budget()).render());
  }
  if (n == "submit") return ToolResult::success(ws_.submit());
  return ToolResult::failure(ErrorCode::UnknownTool, "unknown tool '" + n + "'");
}

// ---------------------------------------------------------------------------
// Reports

json AttemptReport::to_json() const {
  json j{{"attempt", number}, {"patch", patch}, {"transition", std::string(to_string(transition))}};
  if (localization)
    j["localization"] = {{"file", localization->file},
                         {"line_start", localization->line_start},
                         {"line_end", localization->line_end},
                         {"reason", localization->reason}};
  if (verdict) {
    j["verdict"] = verdict->to_json();
    j["verdict"].erase("logs");
  }
  if (!note.empty()) j["note"] = note;
  j["locator_memories"] = locator_memories;
  j["patcher_memories"] = patcher_memories;
  return j;
}

json SessionReport::to_json() const {
  auto attempts_json = json::array();
  for (const auto& a : attempts) attempts_json.push_back(a.to_json());
  json j{{"instance_id", instance_id},
         {"outcome", std::string(to_string(outcome))},
         {"reason", reason},
         {"failed_attempts", failed_attempts},
         {"final_diff", final_diff},
         {"attempts", attempts_json},
         {"oracle_runs", oracle_runs},
         {"usage",
          {{"prompt_tokens", usage.prompt_tokens},
           {"completion_tokens", usage.completion_tokens},
           {"requests", usage.requests}}},
         {"cost_usd", cost_usd},
         {"memory", {{"l2_written", l2_written}, {"l3_written", l3_written}}},
         {"elapsed_ms", elapsed.count()}};
  j["localization_correct"] = localization_correct ? json(*localization_correct) : json("unknown");
  return j;
}

std::string Trajectory::to_jsonl() const {
  std::string out;
  for (const auto& e : events_) out += e.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Session

namespace {

const std::set<std::string> kLocatorTools{"iter_grep", "view", "search", "bash"};
const std::set<std::string> kPatcherTools{"view", "search", "create", "str_replace", "bash", "iter_grep"};

std::vector<std::string> sorted(const std::set<std::string>& s) { return {s.begin(), s.end()}; }

// Interleaves tiers into a single rank order.
std::vector<RankedEntry> merge_ranked(std::vector<RankedEntry> a, std::vector<RankedEntry> b) {
  a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  std::stable_sort(a.begin(), a.end(), [](const RankedEntry& x, const RankedEntry& y) {
    if (x.priority != y.priority) return x.priority < y.priority;
    return x.similarity > y.similarity;
  });
  return a;
}

}  // namespace

RepairSession::RepairSession(const RepairTask& task, Workspace& workspace, Oracle& oracle, ChatBackend& backend,
                             SharedMemoryStore& store, Embedder& embedder, const EngineConfig& config)
    : task_(task),
      ws_(workspace),
      oracle_(oracle),
      backend_(backend),
      store_(store),
      embedder_(embedder),
      config_(config),
      tools_(workspace, &oracle, config) {}

std::vector<RankedEntry> RepairSession::memories(Tier tier, std::optional<std::string_view> override_text) {
  Query q{task_.keys, config_.k_min, config_.top_n};
  auto ranked = store_.read([&](const MemoryStore& s) { return retrieve(s, tier, q, embedder_, override_text); });
  if (!ranked.empty()) {
    store_.write([&](MemoryStore& s) {
      for (const auto& r : ranked) s.mark_retrieved(tier, r.entry.keys.instance_id);
    });
  }
  return ranked;
}

std::vector<RankedEntry> RepairSession::experience(bool with_l3, const std::string& failed_patch) {
  auto out = merge_ranked(memories(Tier::L2, std::nullopt), memories(Tier::L1, std::nullopt));
  if (with_l3 && !failed_patch.empty()) {
    // Corrections for similar failures lead the list.
    auto l3 = memories(Tier::L3, std::string_view(failed_patch));
    out.insert(out.begin(), l3.begin(), l3.end());
  }
  return out;
}

std::string RepairSession::converse(Phase phase, int attempt, const RenderedPrompt& prompt,
                                    const std::set<std::string>& allowed, bool* out_of_turns) {
  const auto schemas = tool_schemas(sorted(allowed));
  std::vector<ChatTurn> history{prompt.system, prompt.user};
  const json base{{"phase", std::string(to_string(phase))}, {"attempt", attempt}};
  auto log_turn = [&](const ChatTurn& t) {
    auto e = base;
    e["type"] = "turn";
    e["turn"] = t.to_json();
    trajectory_.add(std::move(e));
  };
  {
    auto e = base;
    e["type"] = "prompt";
    e["memories"] = prompt.included;
    e["dropped"] = prompt.dropped;
    trajectory_.add(std::move(e));
  }
  log_turn(prompt.system);
  log_turn(prompt.user);

  backend_.begin(phase, attempt);
  *out_of_turns = false;
  for (int turn = 0; turn < config_.gateway.max_turns; ++turn) {
    ChatTurn reply;
    try {
      reply = backend_.complete(history, schemas);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedToolCall) throw;
      auto nudge = ChatTurn::user(std::string("Your tool call could not be parsed: ") + e.what() +
                                  "\nRetry with a well-formed call.");
      log_turn(nudge);
      history.push_back(std::move(nudge));
      continue;
    }
    log_turn(reply);
    history.push_back(reply);
    if (reply.tool_calls.empty()) return reply.content;
    for (const auto& call : reply.tool_calls) {
      auto result = tools_.run(call, allowed);
      auto e = base;
      e["type"] = "tool";
      e["call"] = call.to_json();
      e["result"] = result.to_json();
      trajectory_.add(std::move(e));
      std::string content = result.ok ? result.output
                                      : "error (" + std::string(to_string(*result.error_kind)) + "): " + result.output;
      history.push_back(ChatTurn::tool(call.id, std::move(content)));
    }
  }
  *out_of_turns = true;
  return {};
}

LocalizationObject RepairSession::locate(int attempt) {
  auto crash_output = oracle_.reproduce();
  tools_.set_crash_report(parse_crash_report(crash_output));

  PromptInputs in;
  in.keys = task_.keys;
  in.attempt = attempt;
  in.crash_output = crash_output;
  in.compressed = state_.compressed;
  auto prompt = render_prompt(Phase::Locator, in, experience(false, {}), config_.gateway.prompt_budget);
  last_prompt_memories_ = prompt.included;

  bool out_of_turns = false;
  std::string answer;
  try {
    answer = converse(Phase::Locator, attempt, prompt, kLocatorTools, &out_of_turns);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::GatewayExhausted)
      throw Error(ErrorCode::LocalizationFailure, std::string("locator produced no location: ") + e.what());
    throw;
  }
  if (out_of_turns)
    throw Error(ErrorCode::LocalizationFailure,
                "no location after " + std::to_string(config_.gateway.max_turns) + " turns");
  auto loc = parse_localization(answer);
  if (!loc) throw Error(ErrorCode::LocalizationFailure, "final locator answer holds no location object");
  try {
    loc->file = ws_.relative(loc->file);
  } catch (const Error& e) {
    throw Error(ErrorCode::LocalizationFailure, e.what());
  }
  const auto full = ws_.root() / loc->file;
  if (!fs::is_regular_file(full)) throw Error(ErrorCode::LocalizationFailure, "located file does not exist: " + loc->file);
  const int lines = count_file_lines(full);
  if (loc->line_end < loc->line_start) std::swap(loc->line_start, loc->line_end);
  loc->line_start = std::clamp(loc->line_start, 1, std::max(1, lines));
  loc->line_end = std::clamp(loc->line_end, loc->line_start, std::max(1, lines));
  loc->line = std::clamp(loc->line, loc->line_start, loc->line_end);
  tools_.note_visit({loc->file, loc->line_start, loc->line_end});
  return *loc;
}

std::string RepairSession::patch(int attempt, const LocalizationObject& loc, const std::string& failed_patch) {
  ws_.rollback(ws_.original_snapshot());

  PromptInputs in;
  in.keys = task_.keys;
  in.attempt = attempt;
  in.localization = loc;
  in.failed_patch = failed_patch;
  in.compressed = state_.compressed;
  auto prompt = render_prompt(Phase::Patcher, in, experience(true, failed_patch), config_.gateway.prompt_budget);
  last_prompt_memories_ = prompt.included;

  bool out_of_turns = false;
  converse(Phase::Patcher, attempt, prompt, kPatcherTools, &out_of_turns);
  if (out_of_turns) {
    trajectory_.add({{"type", "note"}, {"phase", "patcher"}, {"attempt", attempt}, {"text", "turn limit reached"}});
  }
  return ws_.submit();
}

void RepairSession::consolidate(SessionReport& report, const std::string& failed_tree,
                                const std::string& accepted_tree) {
  SessionRecord rec;
  rec.keys = task_.keys;
  rec.succeeded = true;
  for (const auto& a : report.attempts)
    rec.attempts.push_back({a.patch, a.verdict && a.transition == Transition::Success});
  if (!failed_tree.empty()) rec.correction_delta = ws_.diff(failed_tree, accepted_tree);

  if (config_.insight == "model") {
    PromptInputs in;
    in.keys = task_.keys;
    in.attempt = static_cast<int>(report.attempts.size());
    in.accepted_patch = report.final_diff;
    auto prompt = render_prompt(Phase::Verifier, in, {}, config_.gateway.prompt_budget);
    bool out_of_turns = false;
    try {
      rec.rationale = converse(Phase::Verifier, in.attempt, prompt, {}, &out_of_turns);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::GatewayExhausted) throw;
      rec.rationale.clear();  // falls back to the template
    }
  }

  auto result = store_.write([&](MemoryStore& s) { return consolidate_success(s, embedder_, rec); });
  report.l2_written = true;
  report.l3_written = result.l3.has_value();
  json e{{"type", "consolidation"},
         {"l2", result.l2.keys.instance_id},
         {"l2_outcome", result.l2_outcome == InsertOutcome::Inserted ? "inserted" : "merged"}};
  if (result.l3) {
    e["l3_outcome"] = *result.l3_outcome == InsertOutcome::Inserted ? "inserted" : "merged";
    e["correction_delta"] = result.l3->correction_delta;
  }
  trajectory_.add(std::move(e));
}

SessionReport RepairSession::run() {
  const auto started = std::chrono::steady_clock::now();
  SessionReport report;
  report.instance_id = task_.keys.instance_id;
  if (!oracle_.validated()) oracle_.validate_pristine();

  const auto pristine = ws_.original_snapshot();
  std::string last_failed_patch;
  std::string last_failed_tree;
  std::string accepted_tree;
  std::string last_candidate;
  state_ = SessionState{};

  while (true) {
    const int attempt = state_.failed_attempts + 1;
    AttemptReport rec;
    rec.number = attempt;
    std::string candidate;
    try {
      if (state_.phase == SessionPhase::Locate || !state_.current_loc) {
        state_.phase = SessionPhase::Locate;
        state_.current_loc = locate(attempt);
        rec.locator_memories = last_prompt_memories_;
      }
      state_.phase = SessionPhase::Patch;
      rec.localization = state_.current_loc;
      candidate = patch(attempt, *state_.current_loc, last_failed_patch);
      rec.patcher_memories = last_prompt_memories_;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LocalizationFailure && e.code() != ErrorCode::GatewayExhausted) throw;
      report.reason = std::string(to_string(e.code())) + ": " + e.what();
      break;
    }
    state_.current_patch = candidate;
    rec.patch = candidate;
    last_candidate = candidate.empty() ? last_candidate : candidate;

    state_.phase = SessionPhase::Verify;
    std::string logs;
    std::string candidate_tree;
    if (candidate.empty()) {
      rec.note = "EmptyPatch";
      rec.transition = Transition::Regenerate;
      logs = "EmptyPatch: the patch stage finished without editing the repository.";
    } else {
      try {
        rec.verdict = oracle_.check_vul();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::OracleTimeout && e.code() != ErrorCode::BuildToolMissing) throw;
        rec.note = std::string(to_string(e.code()));
        report.reason = std::string(to_string(e.code())) + ": " + e.what();
        state_.attempt_history.push_back(rec);
        ++state_.failed_attempts;
        break;
      }
      rec.transition = decide_transition(*rec.verdict);
      logs = rec.verdict->logs;
      candidate_tree = ws_.snapshot();
    }
    {
      json e{{"type", "verdict"}, {"attempt", attempt}, {"transition", std::string(to_string(rec.transition))}};
      if (rec.verdict) {
        e["verdict"] = rec.verdict->to_json();
        e["verdict"]["logs"] = text::cap_head_tail(rec.verdict->logs, config_.output_cap);
      } else {
        e["note"] = rec.note;
      }
      trajectory_.add(std::move(e));
    }
    state_.attempt_history.push_back(rec);

    if (rec.transition == Transition::Success) {
      state_.outcome = Outcome::Success;
      report.final_diff = candidate;
      accepted_tree = candidate_tree;
      break;
    }

    ++state_.failed_attempts;
    state_.compressed = log_compress(logs, SessionMetadata{tools_.visited(), candidate}, config_.compression_budget());
    trajectory_.add({{"type", "compress"}, {"attempt", attempt}, {"context", state_.compressed->to_json()}});
    tools_.clear_visited();
    if (!candidate.empty()) {
      last_failed_patch = candidate;
      last_failed_tree = candidate_tree;
    }
    ws_.rollback(pristine);
    if (state_.failed_attempts >= config_.max_failed_attempts) {
      report.reason = "reached the cap of " + std::to_string(config_.max_failed_attempts) + " failed attempts";
      break;
    }
    state_.phase = rec.transition == Transition::Relocate ? SessionPhase::Locate : SessionPhase::Patch;
  }

  report.attempts = state_.attempt_history;
  report.failed_attempts = state_.failed_attempts;
  if (state_.outcome == Outcome::Success) {
    report.outcome = Outcome::Success;
    consolidate(report, last_failed_tree, accepted_tree);
  } else {
    state_.outcome = Outcome::Exhausted;
    report.outcome = Outcome::Exhausted;
    ws_.rollback(pristine);
    report.final_diff.clear();
  }
  state_.phase = SessionPhase::Done;

  store_.write([&](MemoryStore& s) {
    s.complete_task();
    if (config_.prune_window > 0) s.prune(config_.prune_window);
  });

  if (!task_.ground_truth_files.empty()) {
    const auto& judged = report.outcome == Outcome::Success ? report.final_diff : last_candidate;
    std::set<std::string> touched;
    if (!judged.empty()) {
      try {
        for (const auto& f : diff::touched_files(judged)) touched.insert(f);
      } catch (const Error&) {
      }
    }
    report.localization_correct = std::all_of(task_.ground_truth_files.begin(), task_.ground_truth_files.end(),
                                              [&](const std::string& f) { return touched.contains(f); });
  }
  report.oracle_runs = oracle_.candidate_runs();
  report.usage = backend_.usage();
  report.cost_usd = config_.cost_usd(report.usage);
  report.elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  trajectory_.add({{"type", "outcome"}, {"outcome", std::string(to_string(report.outcome))}, {"reason", report.reason}});
  return report;
}

}  // namespace patchmem

namespace patchmem {

fs::path prepare_scratch(const fs::path& source, const fs::path& dest) {
  std::error_code ec;
  if (!fs::is_directory(source, ec)) throw Error(ErrorCode::ConfigError, "repository not found: " + source.string());
  fs::remove_all(dest, ec);
  fs::create_directories(dest.parent_path(), ec);
  fs::copy(source, dest, fs::copy_options::recursive | fs::copy_options::copy_symlinks, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot copy " + source.string() + " to " + dest.string() + ": " + ec.message());
  if (fs::exists(dest / ".git")) return dest;
  ProcessOptions opts;
  opts.cwd = dest;
  opts.timeout = std::chrono::minutes(5);
  const std::vector<std::vector<std::string>> steps{
      {"git", "init", "-q"},
      {"git", "add", "-A"},
      {"git", "-c", "user.name=patchmem", "-c", "user.email=patchmem@localhost", "-c", "commit.gpgsign=false",
       "commit", "-q", "--allow-empty", "-m", "pristine"}};
  for (const auto& argv : steps) {
    auto r = run_process(argv, opts);
    if (r.exit_code != 0) throw Error(ErrorCode::IoError, "git setup of scratch copy failed: " + r.output);
  }
  return dest;
}

TaskRun run_task(const RepairTask& task, const EngineConfig& config, SharedMemoryStore& store, Embedder& embedder,
                 const fs::path& out_dir, const std::optional<fs::path>& scratch_root) {
  auto repo = task.repo;
  if (scratch_root) repo = prepare_scratch(task.repo, *scratch_root / task.keys.instance_id);

  WorkspaceOptions wopts;
  wopts.bash_timeout = config.bash_timeout;
  wopts.output_cap = config.output_cap;
  wopts.search_limit = config.search_limit;
  wopts.search_limit_per_file = config.search_per_file;
  std::unique_ptr<Workspace> ws;
  try {
    ws = std::make_unique<Workspace>(repo, wopts);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvariantViolation) throw Error(ErrorCode::ConfigError, e.what());
    throw;
  }

  OracleSpec spec = task.oracle;
  spec.command_timeout = config.command_timeout;
  spec.total_budget = config.total_budget;
  spec.log_cap = config.log_cap;
  Oracle oracle(spec, ws->root());
  auto backend = make_backend(config.gateway, task.transcript);

  RepairSession session(task, *ws, oracle, *backend, store, embedder, config);
  TaskRun run;
  fs::create_directories(out_dir);
  run.report_path = out_dir / "report.json";
  run.trajectory_path = out_dir / "trajectory.jsonl";
  try {
    run.report = session.run();
  } catch (...) {
    text::write_file(run.trajectory_path.string(), session.trajectory().to_jsonl());
    throw;
  }
  text::write_file(run.trajectory_path.string(), session.trajectory().to_jsonl());
  text::write_file(run.report_path.string(), run.report.to_json().dump(2) + "\n");
  return run;
}

}  // namespace patchmem
