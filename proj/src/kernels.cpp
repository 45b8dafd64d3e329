#include "patchmem/kernels.hpp"

#include <cstdint>
#include <exception>

namespace patchmem::kernels {

std::vector<double> cosine_scores_serial(const EmbeddingVector& query,
                                         std::span<const EmbeddingVector> candidates) {
  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out[i] = cosine(query, candidates[i]);
  return out;
}

std::vector<double> cosine_scores(const EmbeddingVector& query,
                                  std::span<const EmbeddingVector> candidates) {
  const auto n = static_cast<std::int64_t>(candidates.size());
  std::vector<double> out(candidates.size());
#pragma omp parallel for schedule(static) if (candidates.size() > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out[i] = cosine(query, candidates[i]);
  return out;
}

std::vector<double> jaccard_scores_serial(const std::string& query,
                                          std::span<const std::string> candidates) {
  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out[i] = jaccard(query, candidates[i]);
  return out;
}

std::vector<double> jaccard_scores(const std::string& query, std::span<const std::string> candidates) {
  const auto n = static_cast<std::int64_t>(candidates.size());
  std::vector<double> out(candidates.size());
#pragma omp parallel for schedule(static) if (candidates.size() > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out[i] = jaccard(query, candidates[i]);
  return out;
}

std::vector<EmbeddingVector> embed_batch_serial(Embedder& embedder,
                                                std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embedder.embed(t));
  return out;
}

std::vector<EmbeddingVector> embed_batch(Embedder& embedder, std::span<const std::string> texts) {
  if (!embedder.thread_safe() || texts.size() <= kParallelCutoff)
    return embed_batch_serial(embedder, texts);
  const auto n = static_cast<std::int64_t>(texts.size());
  std::vector<EmbeddingVector> out(texts.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = embedder.embed(texts[i]);
    } catch (...) {
#pragma omp critical(patchmem_embed_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace patchmem::kernels
