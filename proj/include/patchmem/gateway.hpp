#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchmem/workspace.hpp"

namespace patchmem {

enum class Role { System, User, Assistant, Tool };
std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

enum class Phase { Locator, Patcher, Verifier };
std::string_view to_string(Phase p);
std::optional<Phase> parse_phase(std::string_view s);

struct ChatTurn {
  Role role = Role::User;
  std::string content;
  std::vector<ToolCall> tool_calls;  // assistant turns only
  std::string tool_call_id;          // tool turns only

  static ChatTurn system(std::string text) { return {Role::System, std::move(text), {}, {}}; }
  static ChatTurn user(std::string text) { return {Role::User, std::move(text), {}, {}}; }
  static ChatTurn tool(std::string call_id, std::string text) { return {Role::Tool, std::move(text), {}, std::move(call_id)}; }

  nlohmann::json to_json() const;
  /// Throws Error(MalformedToolCall) for bad tool_calls, Error(BadArguments)
  /// for other shape problems.
  static ChatTurn from_json(const nlohmann::json& j);

  bool operator==(const ChatTurn&) const = default;
};

/// Throws Error(BadArguments) unless the history is non-empty, starts with a
/// system turn and every tool turn answers an earlier assistant tool call.
void validate_history(const std::vector<ChatTurn>& history);

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters;  // JSON schema object
};

/// Schemas for the named tools, in the given order. Throws Error(UnknownTool).
std::vector<ToolSchema> tool_schemas(const std::vector<std::string>& names);

struct GatewayConfig {
  std::string backend = "scripted";  // scripted | openai
  std::string endpoint = "https://api.openai.com";  // scheme://host[:port]
  std::string chat_path = "/v1/chat/completions";
  std::string model_name = "gpt-4o";
  double temperature = 0.0;
  int max_turns = 30;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string transcript;  // scripted backend
  std::size_t prompt_budget = 24000;
  std::chrono::seconds request_timeout{120};
  int retries = 3;
  std::chrono::milliseconds backoff{1000};

  /// Throws Error(ConfigError).
  void validate() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  int requests = 0;

  Usage& operator+=(const Usage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    requests += o.requests;
    return *this;
  }
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Selects the conversation slot for subsequent complete() calls.
  virtual void begin(Phase phase, int attempt) = 0;

  /// Throws Error(GatewayExhausted) or Error(MalformedToolCall).
  virtual ChatTurn complete(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>& tools) = 0;

  virtual Usage usage() const = 0;
  virtual std::string model_name() const = 0;
};

/// Replays a JSON-lines transcript. Each line:
///   {"phase": "locator", "attempt": 1, "turn": {"role": "assistant", ...}}
/// Turns for a (phase, attempt) are returned in file order.
class ScriptedBackend : public ChatBackend {
 public:
  /// Throws Error(ConfigError) for unreadable or non-JSON lines.
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);
  static std::unique_ptr<ScriptedBackend> from_string(std::string_view jsonl);

  void begin(Phase phase, int attempt) override;
  ChatTurn complete(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>& tools) override;
  Usage usage() const override { return usage_; }
  std::string model_name() const override { return "scripted"; }

  /// Turns not yet replayed, over all slots.
  std::size_t remaining() const;

 private:
  std::map<std::pair<Phase, int>, std::deque<nlohmann::json>> slots_;
  std::pair<Phase, int> current_{Phase::Locator, 1};
  Usage usage_;
};

/// OpenAI-compatible chat-completions client.
class OpenAIBackend : public ChatBackend {
 public:
  explicit OpenAIBackend(GatewayConfig config);

  void begin(Phase, int) override {}
  ChatTurn complete(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>& tools) override;
  Usage usage() const override;
  std::string model_name() const override { return config_.model_name; }

  /// Request body for the given history (exposed for tests).
  nlohmann::json request_body(const std::vector<ChatTurn>& history, const std::vector<ToolSchema>& tools) const;
  /// Parses choices[0].message. Throws Error(MalformedToolCall).
  static ChatTurn parse_response(const nlohmann::json& body);

 private:
  GatewayConfig config_;
  mutable std::mutex mu_;
  Usage usage_;
};

/// Backend per config: a scripted transcript (path overridable) or OpenAI.
std::unique_ptr<ChatBackend> make_backend(const GatewayConfig& config,
                                          const std::optional<std::filesystem::path>& transcript = std::nullopt);

/// Rough token estimate (4 characters per token) used by the scripted backend.
std::int64_t estimate_tokens(std::string_view s);

}  // namespace patchmem
