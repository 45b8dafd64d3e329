#include <doctest.h>

#include "patchmem/config.hpp"
#include "patchmem/error.hpp"
#include "support/testing.hpp"

using namespace patchmem;

namespace {

std::string config_error(std::string_view text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  FAIL("accepted: " << text);
  return {};
}

}  // namespace

TEST_CASE("defaults") {
  auto c = parse_config("");
  CHECK(c.gateway.backend == "scripted");
  CHECK(c.k_min == 2);
  CHECK(c.top_n == 4);
  CHECK(c.max_failed_attempts == 3);
  CHECK(c.prune_window == 50);
}

TEST_CASE("sections, quoting and comments") {
  auto c = parse_config(R"(
# comment
[gateway]
backend = openai
model_name = "gpt \"4o\""   # trailing
temperature = 0.2
transcript = t/run.jsonl

[retrieval]
dim = 64
k_min = 3
top_n = 5

[oracle]
command_timeout = 30

[limits]
search_per_file = true
max_failed_attempts = 2

[pricing]
"gpt \"4o\"" = 2.5, 10

[ingest]
fix_patch = patch
)",
                        "/base");
  CHECK(c.gateway.backend == "openai");
  CHECK(c.gateway.model_name == "gpt \"4o\"");
  CHECK(c.gateway.temperature == doctest::Approx(0.2));
  CHECK(c.gateway.transcript == "/base/t/run.jsonl");
  CHECK(c.embedding_dim == 64);
  CHECK(c.k_min == 3);
  CHECK(c.top_n == 5);
  CHECK(c.command_timeout == std::chrono::seconds(30));
  CHECK(c.search_per_file);
  CHECK(c.max_failed_attempts == 2);
  CHECK(c.ingest_columns.at("fix_patch") == "patch");

  Usage u{2'000'000, 1'000'000, 3};
  CHECK(c.cost_usd(u) == doctest::Approx(2 * 2.5 + 10));
  c.gateway.model_name = "unpriced";
  CHECK(c.cost_usd(u) == 0.0);
}

TEST_CASE("empty values") {
  auto c = parse_config("[gateway]\ntranscript =   # none\nmodel_name = m # trailing\n", "/base");
  CHECK(c.gateway.transcript.empty());
  CHECK(c.gateway.model_name == "m");
}

TEST_CASE("errors name the line") {
  CHECK(config_error("[gateway]\nmax_turns = ten\n").find("line 2") != std::string::npos);
  CHECK(config_error("\n\n[limits]\nnope = 1\n").find("line 4") != std::string::npos);
  CHECK(config_error("key = 1\n").find("line 1") != std::string::npos);
  CHECK(config_error("[gateway\n").find("line 1") != std::string::npos);
  CHECK(config_error("[gateway]\nmodel_name = \"open\n").find("unterminated") != std::string::npos);
  CHECK(config_error("[gateway]\nretries = 1\nretries = 2\n").find("duplicate") != std::string::npos);
  CHECK(config_error("[pricing]\nm = 3\n").find("line 2") != std::string::npos);
  config_error("[mystery]\na = 1\n");
  config_error("[limits]\nmax_failed_attempts = 0\n");
  config_error("[retrieval]\nembedder = magic\n");
  config_error("[retrieval]\nk_min = 0\n");
  config_error("[retrieval]\nk_min = 5\ntop_n = 4\n");
  config_error("[limits]\nsearch_per_file = yes\n");
  config_error("[limits]\ncompress_budget = 10\n");
}

TEST_CASE("the example config spells out the defaults") {
  auto c = load_config(std::filesystem::path(PATCHMEM_SOURCE_DIR) / "patchmem.example.ini");
  EngineConfig d;
  CHECK(c.gateway.transcript.empty());
  CHECK(c.gateway.backend == d.gateway.backend);
  CHECK(c.gateway.endpoint == d.gateway.endpoint);
  CHECK(c.gateway.model_name == d.gateway.model_name);
  CHECK(c.gateway.max_turns == d.gateway.max_turns);
  CHECK(c.gateway.prompt_budget == d.gateway.prompt_budget);
  CHECK(c.gateway.request_timeout == d.gateway.request_timeout);
  CHECK(c.gateway.retries == d.gateway.retries);
  CHECK(c.embedder == d.embedder);
  CHECK(c.embedding_dim == d.embedding_dim);
  CHECK(c.remote_embedder.endpoint == d.remote_embedder.endpoint);
  CHECK(c.remote_embedder.model == d.remote_embedder.model);
  CHECK(c.k_min == d.k_min);
  CHECK(c.top_n == d.top_n);
  CHECK(c.prune_window == d.prune_window);
  CHECK(c.command_timeout == d.command_timeout);
  CHECK(c.total_budget == d.total_budget);
  CHECK(c.log_cap == d.log_cap);
  CHECK(c.max_failed_attempts == d.max_failed_attempts);
  CHECK(c.bash_timeout == d.bash_timeout);
  CHECK(c.output_cap == d.output_cap);
  CHECK(c.compress_budget == d.compress_budget);
  CHECK(c.context_radius == d.context_radius);
  CHECK(c.iter_grep_k == d.iter_grep_k);
  CHECK(c.search_limit == d.search_limit);
  CHECK(c.search_per_file == d.search_per_file);
  CHECK(c.insight == d.insight);
  CHECK(c.pricing.at("gpt-4o").input_per_mtok == 2.5);
  CHECK(c.ingest_columns.at("fix_patch") == "patch");
}

TEST_CASE("load_config") {
  testing_support::TempDir tmp;
  CHECK_THROWS_AS(load_config(tmp / "missing.ini"), Error);
  testing_support::spit(tmp / "c.ini", "[gateway]\ntranscript = x.jsonl\n");
  auto c = load_config(tmp / "c.ini");
  CHECK(c.gateway.transcript == (tmp / "x.jsonl").string());
  CHECK(make_embedder(c)->dimension() == 256);
}
