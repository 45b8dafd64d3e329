#include "patchmem/gateway.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "patchmem/error.hpp"
#include "patchmem/text.hpp"

using nlohmann::json;

namespace patchmem {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  if (s == "tool") return Role::Tool;
  return std::nullopt;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Locator: return "locator";
    case Phase::Patcher: return "patcher";
    case Phase::Verifier: return "verifier";
  }
  return "locator";
}

std::optional<Phase> parse_phase(std::string_view s) {
  if (s == "locator") return Phase::Locator;
  if (s == "patcher") return Phase::Patcher;
  if (s == "verifier") return Phase::Verifier;
  return std::nullopt;
}

json ChatTurn::to_json() const {
  json j{{"role", std::string(patchmem::to_string(role))}, {"content", content}};
  if (!tool_calls.empty()) {
    auto calls = json::array();
    for (const auto& c : tool_calls) calls.push_back(c.to_json());
    j["tool_calls"] = calls;
  }
  if (!tool_call_id.empty()) j["tool_call_id"] = tool_call_id;
  return j;
}

ChatTurn ChatTurn::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::BadArguments, "turn must be a JSON object");
  ChatTurn t;
  auto role = j.contains("role") && j["role"].is_string() ? parse_role(j["role"].get<std::string>()) : std::nullopt;
  if (!role) throw Error(ErrorCode::BadArguments, "turn has no valid role: " + j.dump());
  t.role = *role;
  if (j.contains("content") && !j["content"].is_null()) {
    if (!j["content"].is_string()) throw Error(ErrorCode::BadArguments, "turn content must be a string");
    t.content = j["content"].get<std::string>();
  }
  if (j.contains("tool_calls") && !j["tool_calls"].is_null()) {
    if (!j["tool_calls"].is_array()) throw Error(ErrorCode::MalformedToolCall, "tool_calls must be an array");
    int n = 0;
    for (const auto& c : j["tool_calls"]) {
      auto call = ToolCall::from_json(c);
      if (call.id.empty()) call.id = "call_" + std::to_string(++n);
      t.tool_calls.push_back(std::move(call));
    }
  }
  if (j.contains("tool_call_id") && j["tool_call_id"].is_string()) t.tool_call_id = j["tool_call_id"].get<std::string>();
  return t;
}

void validate_history(const std::vector<ChatTurn>& history) {
  if (history.empty() || history.front().role != Role::System)
    throw Error(ErrorCode::BadArguments, "history must start with a system turn");
  std::set<std::string> issued;
  for (const auto& t : history) {
    for (const auto& c : t.tool_calls) issued.insert(c.id);
    if (t.role == Role::Tool && !issued.contains(t.tool_call_id))
      throw Error(ErrorCode::BadArguments, "tool turn answers unknown call '" + t.tool_call_id + "'");
  }
}

namespace {

json object_schema(std::initializer_list<std::tuple<const char*, const char*, const char*>> props,
                   std::initializer_list<const char*> required) {
  json p = json::object();
  for (const auto& [name, type, desc] : props) p[name] = {{"type", type}, {"description", desc}};
  return {{"type", "object"}, {"properties", p}, {"required", std::vector<std::string>(required.begin(), required.end())}};
}

const std::map<std::string, ToolSchema>& schema_table() {
  static const std::map<std::string, ToolSchema> table = [] {
    std::map<std::string, ToolSchema> t;
    auto add = [&](ToolSchema s) { t.emplace(s.name, std::move(s)); };
    add({"view", "Show a file with line numbers, or list a directory two levels deep.",
         object_schema({{"path", "string", "file or directory, relative to the repository root"},
                        {"start_line", "integer", "first line to show"},
                        {"end_line", "integer", "last line to show"}},
                       {"path"})});
    add({"search", "Regex search over files; returns matching lines with context.",
         object_schema({{"pattern", "string", "ECMAScript regular expression"},
                        {"path", "string", "file or directory to search (default: repository root)"}},
                       {"pattern"})});
    add({"create", "Create a new file. Fails if the path exists.",
         object_schema({{"path", "string", "new file path"}, {"text", "string", "file content"}}, {"path", "text"})});
    add({"str_replace", "Replace the unique exact occurrence of `old` with `new` in a file.",
         object_schema({{"path", "string", "file to edit"},
                        {"old", "string", "exact text to replace; must occur once"},
                        {"new", "string", "replacement text"}},
                       {"path", "old", "new"})});
    add({"bash", "Run a command in a persistent shell rooted at the repository.",
         object_schema({{"command", "string", "shell command"}, {"restart", "boolean", "restart the shell first"}},
                       {"command"})});
    add({"iter_grep", "Structure-aware search for a symbol, ranked by closeness to the crash stack.",
         object_schema({{"symbol", "string", "identifier to look up"}, {"k", "integer", "number of results"}},
                       {"symbol"})});
    add({"check_vul", "Build, run the proof of concept and the regression tests.", object_schema({}, {})});
    add({"log_compress", "Summarize logs into the compact hand-off template.",
         object_schema({{"logs", "string", "raw logs"}}, {"logs"})});
    add({"submit", "Return the diff of the workspace against its original state.", object_schema({}, {})});
    return t;
  }();
  return table;
}

}  // namespace

std::vector<ToolSchema> tool_schemas(const std::vector<std::string>& names) {
  std::vector<ToolSchema> out;
  for (const auto& n : names) {
    auto it = schema_table().find(n);
    if (it == schema_table().end()) throw Error(ErrorCode::UnknownTool, "no schema for tool '" + n + "'");
    out.push_back(it->second);
  }
  return out;
}

void GatewayConfig::validate() const {
  if (backend != "scripted" && backend != "openai")
    throw Error(ErrorCode::ConfigError, "gateway backend must be 'scripted' or 'openai', got '" + backend + "'");
  if (temperature < 0.0) throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
  if (max_turns < 1) throw Error(ErrorCode::ConfigError, "max_turns must be >= 1");
  if (retries < 1) throw Error(ErrorCode::ConfigError, "retries must be >= 1");
  if (prompt_budget < 1000) throw Error(ErrorCode::ConfigError, "prompt_budget must be >= 1000");
  if (backend == "openai" && (endpoint.empty() || model_name.empty()))
    throw Error(ErrorCode::ConfigError, "openai backend needs endpoint and model_name");
}

std::int64_t estimate_tokens(std::string_view s) { return static_cast<std::int64_t>((s.size() + 3) / 4); }

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::string content;
  try {
    content = text::read_file(path.string());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "cannot read transcript " + path.string() + ": " + e.what());
  }
  return from_string(content);
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_string(std::string_view jsonl) {
  auto b = std::make_unique<ScriptedBackend>();
  int lineno = 0;
  for (auto line : text::split_lines(jsonl)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, "transcript line " + std::to_string(lineno) + ": " + e.what());
    }
    auto phase = j.contains("phase") && j["phase"].is_string() ? parse_phase(j["phase"].get<std::string>()) : std::nullopt;
    if (!phase || !j.contains("attempt") || !j["attempt"].is_number_integer() || !j.contains("turn"))
      throw Error(ErrorCode::ConfigError,
                  "transcript line " + std::to_string(lineno) + " needs phase, integer attempt and turn");
    b->slots_[{*phase, j["attempt"].get<int>()}].push_back(j["turn"]);
  }
  return b;
}

void ScriptedBackend::begin(Phase phase, int attempt) { current_ = {phase, attempt}; }

ChatTurn ScriptedBackend::complete(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>&) {
  validate_history(history);
  auto it = slots_.find(current_);
  if (it == slots_.end() || it->second.empty())
    throw Error(ErrorCode::GatewayExhausted, "transcript has no more turns for " +
                                                 std::string(to_string(current_.first)) + " attempt " +
                                                 std::to_string(current_.second));
  json raw = std::move(it->second.front());
  it->second.pop_front();
  for (const auto& t : history) usage_.prompt_tokens += estimate_tokens(t.content);
  usage_.completion_tokens += estimate_tokens(raw.dump());
  ++usage_.requests;
  auto turn = ChatTurn::from_json(raw);
  if (turn.role != Role::Assistant) throw Error(ErrorCode::BadArguments, "scripted turns must be assistant turns");
  return turn;
}

std::size_t ScriptedBackend::remaining() const {
  std::size_t n = 0;
  for (const auto& [_, q] : slots_) n += q.size();
  return n;
}

OpenAIBackend::OpenAIBackend(GatewayConfig config) : config_(std::move(config)) {}

Usage OpenAIBackend::usage() const {
  std::lock_guard lock(mu_);
  return usage_;
}

json OpenAIBackend::request_body(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>& tools) const {
  auto messages = json::array();
  for (const auto& t : history) {
    json m{{"role", std::string(to_string(t.role))}, {"content", t.content}};
    if (t.role == Role::Tool) m["tool_call_id"] = t.tool_call_id;
    if (!t.tool_calls.empty()) {
      auto calls = json::array();
      for (const auto& c : t.tool_calls)
        calls.push_back({{"id", c.id}, {"type", "function"}, {"function", {{"name", c.name}, {"arguments", json(c.args).dump()}}}});
      m["tool_calls"] = calls;
    }
    messages.push_back(std::move(m));
  }
  json body{{"model", config_.model_name}, {"temperature", config_.temperature}, {"messages", messages}};
  if (!tools.empty()) {
    auto ts = json::array();
    for (const auto& s : tools)
      ts.push_back({{"type", "function"},
                    {"function", {{"name", s.name}, {"description", s.description}, {"parameters", s.parameters}}}});
    body["tools"] = ts;
  }
  return body;
}

ChatTurn OpenAIBackend::parse_response(const json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
    throw Error(ErrorCode::TransportError, "response has no choices");
  const auto& msg = body["choices"][0].value("message", json::object());
  ChatTurn t;
  t.role = Role::Assistant;
  if (msg.contains("content") && msg["content"].is_string()) t.content = msg["content"].get<std::string>();
  if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
    for (const auto& c : msg["tool_calls"]) {
      if (!c.contains("function") || !c["function"].is_object())
        throw Error(ErrorCode::MalformedToolCall, "tool call without function: " + c.dump());
      const auto& fn = c["function"];
      json args = json::object();
      if (fn.contains("arguments") && fn["arguments"].is_string()) {
        try {
          auto raw = fn["arguments"].get<std::string>();
          if (!text::trim(raw).empty()) args = json::parse(raw);
        } catch (const json::exception& e) {
          throw Error(ErrorCode::MalformedToolCall, std::string("tool arguments are not JSON: ") + e.what());
        }
      }
      json call{{"name", fn.value("name", json())}, {"args", args}};
      if (c.contains("id") && c["id"].is_string()) call["id"] = c["id"];
      t.tool_calls.push_back(ToolCall::from_json(call));
    }
  }
  return t;
}

ChatTurn OpenAIBackend::complete(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>& tools) {
  validate_history(history);
  const auto body = request_body(history, tools).dump();
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_error;
  auto delay = config_.backoff;
  for (int attempt = 1; attempt <= config_.retries; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.request_timeout);
    client.set_read_timeout(config_.request_timeout);
    auto res = client.Post(config_.chat_path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::GatewayExhausted, "HTTP " + std::to_string(res->status) + ": " + text::cap_head(res->body, 500));
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::exception& e) {
      last_error = std::string("unparseable response: ") + e.what();
      continue;
    }
    {
      std::lock_guard lock(mu_);
      ++usage_.requests;
      if (parsed.contains("usage") && parsed["usage"].is_object()) {
        usage_.prompt_tokens += parsed["usage"].value("prompt_tokens", 0);
        usage_.completion_tokens += parsed["usage"].value("completion_tokens", 0);
      }
    }
    try {
      return parse_response(parsed);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::GatewayExhausted,
              "chat request failed after " + std::to_string(config_.retries) + " attempts: " + last_error);
}

std::unique_ptr<ChatBackend> make_backend(const GatewayConfig& config,
                                          const std::optional<std::filesystem::path>& transcript) {
  config.validate();
  if (config.backend == "openai") return std::make_unique<OpenAIBackend>(config);
  auto path = transcript ? *transcript : std::filesystem::path(config.transcript);
  if (path.empty()) throw Error(ErrorCode::ConfigError, "scripted backend needs a transcript path");
  return ScriptedBackend::from_file(path);
}

}  // namespace patchmem
