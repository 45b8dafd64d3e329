#include "patchmem/embedding.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <json.hpp>
#include <set>

#include "patchmem/error.hpp"
#include "patchmem/kernels.hpp"
#include "patchmem/text.hpp"

namespace patchmem {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  const auto n = std::min(a.components.size(), b.components.size());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a.components[i] * b.components[i];
    na += a.components[i] * a.components[i];
    nb += b.components[i] * b.components[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double jaccard(std::string_view a, std::string_view b) {
  auto ta = text::tokenize(a);
  auto tb = text::tokenize(b);
  std::set<std::string> sa(ta.begin(), ta.end());
  std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return a == b ? 1.0 : 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw Error(ErrorCode::BadArguments, "embedding dimension must be positive");
}

EmbeddingVector HashingEmbedder::embed(std::string_view input) {
  if (input.empty()) throw Error(ErrorCode::BadArguments, "cannot embed empty text");
  auto tokens = text::tokenize(input);
  if (tokens.empty()) tokens.emplace_back(text::trim(input).empty() ? input : text::trim(input));
  EmbeddingVector v;
  v.components.assign(dimension_, 0.0);
  for (const auto& tok : tokens) {
    const auto h = text::fnv1a(tok);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v.components[h % dimension_] += sign;
  }
  double norm = 0.0;
  for (double c : v.components) norm += c * c;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& c : v.components) c /= norm;
  return v;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {}

EmbeddingVector RemoteEmbedder::embed(std::string_view input) {
  if (input.empty()) throw Error(ErrorCode::BadArguments, "cannot embed empty text");
  const char* key = std::getenv(config_.api_key_env.c_str());
  try {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    httplib::Headers headers;
    if (key != nullptr) headers.emplace("Authorization", std::string("Bearer ") + key);
    nlohmann::json body = {{"model", config_.model}, {"input", std::string(input)}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::EmbeddingUnavailable, "embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::EmbeddingUnavailable, "embedding service returned HTTP " + std::to_string(res->status));
    auto reply = nlohmann::json::parse(res->body);
    EmbeddingVector v;
    v.components = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
    if (dimension_ == 0) dimension_ = v.dimension();
    if (v.dimension() != dimension_)
      throw Error(ErrorCode::EmbeddingUnavailable, "embedding service changed dimensionality");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::EmbeddingUnavailable, std::string("embedding service error: ") + e.what());
  }
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner) : inner_(std::move(inner)) {}

EmbeddingVector CachingEmbedder::embed(std::string_view input) {
  auto key = text::hex_digest(input);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto v = inner_->embed(input);
  std::lock_guard lock(mu_);
  ++misses_;
  cache_.emplace(std::move(key), v);
  return v;
}

std::size_t CachingEmbedder::cached() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::size_t CachingEmbedder::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

ScoredBatch score_texts(Embedder& embedder, std::string_view query,
                        std::span<const std::string> candidates) {
  ScoredBatch out;
  if (candidates.empty()) return out;
  try {
    auto q = embedder.embed(query);
    auto vecs = kernels::embed_batch(embedder, candidates);
    out.scores = kernels::cosine_scores(q, vecs);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmbeddingUnavailable) throw;
    out.scores = kernels::jaccard_scores(std::string(query), candidates);
    out.lexical_fallback = true;
  }
  return out;
}

}  // namespace patchmem
