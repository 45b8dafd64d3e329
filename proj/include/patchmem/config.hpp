#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "patchmem/compress.hpp"
#include "patchmem/embedding.hpp"
#include "patchmem/gateway.hpp"

namespace patchmem {

struct Price {
  double input_per_mtok = 0.0;
  double output_per_mtok = 0.0;
};

struct EngineConfig {
  GatewayConfig gateway;

  // [retrieval]
  std::string embedder = "hashing";  // hashing | remote
  std::size_t embedding_dim = 256;
  RemoteEmbedderConfig remote_embedder;
  int k_min = 2;
  int top_n = 4;
  std::int64_t prune_window = 50;  // 0: never prune after sessions

  // [oracle]
  std::chrono::seconds command_timeout{600};
  std::chrono::seconds total_budget{1800};
  std::size_t log_cap = 20000;

  // [limits]
  int max_failed_attempts = 3;
  std::chrono::seconds bash_timeout{300};
  std::size_t output_cap = 20000;
  std::size_t compress_budget = 8000;
  int context_radius = 10;
  int iter_grep_k = 5;
  int search_limit = 5;
  bool search_per_file = false;
  std::string insight = "template";  // template | model

  // [pricing] model = "in_per_mtok,out_per_mtok"
  std::map<std::string, Price> pricing;

  // [ingest] canonical column -> header name in the corpus file
  std::map<std::string, std::string> ingest_columns;

  /// Throws Error(ConfigError).
  void validate() const;
  CompressionBudget compression_budget() const { return CompressionBudget::from_total(compress_budget); }
  double cost_usd(const Usage& usage) const;
};

/// Parses the INI-style config. Relative paths (gateway.transcript) resolve
/// against `base_dir`. Throws Error(ConfigError) with a line number.
EngineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Throws Error(ConfigError), also for a missing file.
EngineConfig load_config(const std::filesystem::path& path);

}  // namespace patchmem

namespace patchmem {

/// The configured embedder behind a content-hash cache.
std::shared_ptr<Embedder> make_embedder(const EngineConfig& config);

}  // namespace patchmem
