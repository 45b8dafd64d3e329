#pragma once

// Data-parallel kernels. Each OpenMP kernel has a serial twin with the same
// per-element arithmetic, so both produce bit-identical results; the serial
// versions are kept as the reference for tests and the benchmark.

#include <span>
#include <string>
#include <vector>

#include "patchmem/embedding.hpp"

namespace patchmem::kernels {

std::vector<double> cosine_scores_serial(const EmbeddingVector& query,
                                         std::span<const EmbeddingVector> candidates);
std::vector<double> cosine_scores(const EmbeddingVector& query,
                                  std::span<const EmbeddingVector> candidates);

std::vector<double> jaccard_scores_serial(const std::string& query,
                                          std::span<const std::string> candidates);
std::vector<double> jaccard_scores(const std::string& query, std::span<const std::string> candidates);

std::vector<EmbeddingVector> embed_batch_serial(Embedder& embedder,
                                                std::span<const std::string> texts);
/// Runs in parallel only when the embedder reports thread_safe().
std::vector<EmbeddingVector> embed_batch(Embedder& embedder, std::span<const std::string> texts);

/// Below this many elements the parallel kernels run single-threaded.
inline constexpr std::size_t kParallelCutoff = 64;

}  // namespace patchmem::kernels
