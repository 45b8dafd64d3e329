#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "patchmem/error.hpp"
#include "patchmem/gateway.hpp"
#include "support/testing.hpp"

using namespace patchmem;
using nlohmann::json;

namespace {

std::vector<ChatTurn> history() { return {ChatTurn::system("sys"), ChatTurn::user("task")}; }

// Local chat-completions endpoint that fails `failures` times first.
class FakeServer {
 public:
  FakeServer(int failures, int fail_status, json reply) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this, fail_status, reply](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      ++hits;
      if (hits <= failures_) {
        res.status = fail_status;
        res.set_content("{}", "application/json");
        return;
      }
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> hits{0};
  std::string last_body;
  std::string last_auth;

 private:
  httplib::Server server_;
  int failures_;
  int port_ = 0;
  std::thread thread_;
};

json reply_with_call() {
  return json::parse(R"({
    "choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
      {"id": "call_9", "type": "function",
       "function": {"name": "view", "arguments": "{\"path\":\"a.c\",\"start_line\":2}"}}]}}],
    "usage": {"prompt_tokens": 11, "completion_tokens": 7}})");
}

GatewayConfig config_for(const FakeServer& s) {
  GatewayConfig c;
  c.backend = "openai";
  c.endpoint = s.endpoint();
  c.model_name = "test-model";
  c.retries = 3;
  c.backoff = std::chrono::milliseconds(1);
  c.request_timeout = std::chrono::seconds(5);
  c.api_key_env = "PATCHMEM_TEST_KEY";
  return c;
}

}  // namespace

TEST_CASE("chat turns round trip and history validation") {
  ChatTurn a{Role::Assistant, "x", {ToolCall{"c1", "view", {{"path", "a"}}}}, ""};
  CHECK(ChatTurn::from_json(a.to_json()) == a);
  auto t = ChatTurn::from_json(json::parse(R"({"role":"assistant","tool_calls":[{"name":"bash","args":{}}]})"));
  CHECK(t.tool_calls[0].id == "call_1");
  CHECK_THROWS_AS(ChatTurn::from_json(json::parse(R"({"role":"robot"})")), Error);

  auto h = history();
  CHECK_NOTHROW(validate_history(h));
  h.push_back(ChatTurn::tool("c1", "out"));
  CHECK_THROWS_AS(validate_history(h), Error);
  h.insert(h.end() - 1, a);
  CHECK_NOTHROW(validate_history(h));
  CHECK_THROWS_AS(validate_history({ChatTurn::user("no system")}), Error);
}

TEST_CASE("tool schemas cover every tool") {
  std::vector<std::string> names(tool_names().begin(), tool_names().end());
  auto s = tool_schemas(names);
  CHECK(s.size() == 9);
  for (const auto& x : s) CHECK(x.parameters["type"] == "object");
  CHECK_THROWS_AS(tool_schemas({"nope"}), Error);
}

TEST_CASE("scripted backend replays per phase and attempt") {
  auto b = ScriptedBackend::from_string(
      R"({"phase":"locator","attempt":1,"turn":{"role":"assistant","content":"L1a"}}
{"phase":"patcher","attempt":1,"turn":{"role":"assistant","content":"P1"}}

{"phase":"locator","attempt":1,"turn":{"role":"assistant","content":"L1b"}}
{"phase":"locator","attempt":2,"turn":{"role":"assistant","tool_calls":[{"name":"view","args":"bad"}]}}
{"phase":"verifier","attempt":1,"turn":{"role":"user","content":"not allowed"}}
)");
  CHECK(b->remaining() == 5);
  b->begin(Phase::Locator, 1);
  CHECK(b->complete(history(), {}).content == "L1a");
  b->begin(Phase::Patcher, 1);
  CHECK(b->complete(history(), {}).content == "P1");
  b->begin(Phase::Locator, 1);
  CHECK(b->complete(history(), {}).content == "L1b");
  try {
    b->complete(history(), {});
    FAIL("no exhaustion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GatewayExhausted);
  }
  b->begin(Phase::Locator, 2);
  try {
    b->complete(history(), {});
    FAIL("malformed call accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedToolCall);
  }
  b->begin(Phase::Verifier, 1);
  CHECK_THROWS_AS(b->complete(history(), {}), Error);
  CHECK(b->usage().requests == 5);
  CHECK(b->usage().prompt_tokens > 0);
  CHECK_THROWS_AS(ScriptedBackend::from_string("{not json}\n"), Error);
  CHECK_THROWS_AS(ScriptedBackend::from_string(R"({"phase":"x","attempt":1,"turn":{}})"), Error);
  CHECK_THROWS_AS(ScriptedBackend::from_file("/no/such/transcript.jsonl"), Error);
}

TEST_CASE("gateway config validation and backend selection") {
  GatewayConfig c;
  CHECK_NOTHROW(c.validate());
  c.backend = "other";
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.max_turns = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  CHECK_THROWS_AS(make_backend(c), Error);  // scripted without a transcript
  auto path = testing_support::fixture_dir() / "transcripts/success.jsonl";
  CHECK(make_backend(c, path)->model_name() == "scripted");
  c.backend = "openai";
  CHECK(make_backend(c)->model_name() == "gpt-4o");
}

TEST_CASE("openai request body and response parsing") {
  GatewayConfig c;
  c.model_name = "m";
  OpenAIBackend b(c);
  auto h = history();
  h.push_back({Role::Assistant, "", {ToolCall{"c1", "view", {{"path", "a.c"}}}}, ""});
  h.push_back(ChatTurn::tool("c1", "content"));
  auto body = b.request_body(h, tool_schemas({"view"}));
  CHECK(body["model"] == "m");
  CHECK(body["messages"].size() == 4);
  CHECK(body["messages"][2]["tool_calls"][0]["function"]["arguments"] == R"({"path":"a.c"})");
  CHECK(body["messages"][3]["tool_call_id"] == "c1");
  CHECK(body["tools"][0]["function"]["name"] == "view");

  auto t = OpenAIBackend::parse_response(reply_with_call());
  REQUIRE(t.tool_calls.size() == 1);
  CHECK(t.tool_calls[0].id == "call_9");
  CHECK(t.tool_calls[0].arg("start_line") == "2");
  auto bad = json::parse(R"({"choices":[{"message":{"tool_calls":[{"function":{"name":"view","arguments":"{oops"}}]}}]})");
  try {
    OpenAIBackend::parse_response(bad);
    FAIL("bad arguments accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedToolCall);
  }
}

TEST_CASE("openai backend talks to a local endpoint with retries") {
  setenv("PATCHMEM_TEST_KEY", "sk-test", 1);
  SUBCASE("transient failures are retried") {
    FakeServer s(2, 503, reply_with_call());
    OpenAIBackend b(config_for(s));
    auto t = b.complete(history(), tool_schemas({"view"}));
    CHECK(t.tool_calls.size() == 1);
    CHECK(s.hits == 3);
    CHECK(s.last_auth == "Bearer sk-test");
    CHECK(json::parse(s.last_body)["model"] == "test-model");
    CHECK(b.usage().prompt_tokens == 11);
    CHECK(b.usage().completion_tokens == 7);
  }
  SUBCASE("rate limiting beyond the retry budget exhausts") {
    FakeServer s(10, 429, reply_with_call());
    OpenAIBackend b(config_for(s));
    try {
      b.complete(history(), {});
      FAIL("no exhaustion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GatewayExhausted);
    }
    CHECK(s.hits == 3);
  }
  SUBCASE("client errors are not retried") {
    FakeServer s(10, 400, reply_with_call());
    OpenAIBackend b(config_for(s));
    CHECK_THROWS_AS(b.complete(history(), {}), Error);
    CHECK(s.hits == 1);
  }
  SUBCASE("unreachable endpoint") {
    GatewayConfig c;
    c.backend = "openai";
    c.endpoint = "http://127.0.0.1:1";
    c.retries = 2;
    c.backoff = std::chrono::milliseconds(1);
    c.request_timeout = std::chrono::seconds(2);
    OpenAIBackend b(c);
    try {
      b.complete(history(), {});
      FAIL("no exhaustion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GatewayExhausted);
    }
  }
}
