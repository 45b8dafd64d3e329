#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace patchmem {

struct EmbeddingVector {
  std::vector<double> components;

  std::size_t dimension() const noexcept { return components.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Cosine of the angle between two vectors; 0 when either has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Jaccard overlap of the lower-cased token sets of two texts.
double jaccard(std::string_view a, std::string_view b);

class Embedder {
 public:
  virtual ~Embedder() = default;

  /// Throws Error(EmbeddingUnavailable) when the backend cannot answer.
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
  /// True when embed() is a pure function safe to call from many threads.
  virtual bool thread_safe() const { return false; }
};

/// Deterministic signed feature-hashing embedder. Each lower-cased token
/// adds +1 or -1 to bucket `fnv1a(token) % dim` (sign = top hash bit); the
/// result is L2-normalized. Text without any token hashes as one token.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256);

  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return "deterministic"; }
  bool thread_safe() const override { return true; }

 private:
  std::size_t dimension_;
};

struct RemoteEmbedderConfig {
  std::string endpoint = "https://api.openai.com";
  std::string path = "/v1/embeddings";
  std::string model = "text-embedding-3-small";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{30};
};

/// OpenAI-compatible embeddings endpoint.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);

  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return "remote:" + config_.model; }

 private:
  RemoteEmbedderConfig config_;
  std::size_t dimension_ = 0;
};

/// Content-hash keyed cache in front of another embedder. Internally
/// synchronized.
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(std::shared_ptr<Embedder> inner);

  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return inner_->dimension(); }
  std::string name() const override { return inner_->name(); }
  bool thread_safe() const override { return inner_->thread_safe(); }

  std::size_t cached() const;
  std::size_t misses() const;

 private:
  std::shared_ptr<Embedder> inner_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
  std::size_t misses_ = 0;
};

struct ScoredBatch {
  std::vector<double> scores;
  bool lexical_fallback = false;
};

/// Scores `query` against every candidate text: cosine of embeddings, or
/// Jaccard token overlap for the whole batch if the embedder is down.
ScoredBatch score_texts(Embedder& embedder, std::string_view query,
                        std::span<const std::string> candidates);

}  // namespace patchmem
