// Serial reference vs OpenMP kernels on synthetic corpora.
#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "patchmem/embedding.hpp"
#include "patchmem/kernels.hpp"

using namespace patchmem;

namespace {

std::vector<std::string> make_texts(std::size_t n, std::size_t words) {
  static const char* vocab[] = {"buffer", "overflow", "memcpy", "len",    "size",  "check", "bounds", "heap",
                                "free",   "use",      "after",  "null",   "deref", "index", "array",  "copy",
                                "input",  "parse",    "header", "length", "alloc", "patch", "fix",    "guard"};
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(vocab) - 1);
  std::vector<std::string> out(n);
  for (auto& t : out)
    for (std::size_t w = 0; w < words; ++w) t += std::string(vocab[pick(rng)]) + (w % 7 == 0 ? std::to_string(w) : "") + " ";
  return out;
}

std::vector<EmbeddingVector> make_vectors(std::size_t n) {
  HashingEmbedder e(256);
  auto texts = make_texts(n, 40);
  return kernels::embed_batch_serial(e, texts);
}

void BM_cosine_serial(benchmark::State& s) {
  auto v = make_vectors(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::cosine_scores_serial(v[0], v));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_cosine_parallel(benchmark::State& s) {
  auto v = make_vectors(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::cosine_scores(v[0], v));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_jaccard_serial(benchmark::State& s) {
  auto t = make_texts(s.range(0), 60);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::jaccard_scores_serial(t[0], t));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_jaccard_parallel(benchmark::State& s) {
  auto t = make_texts(s.range(0), 60);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::jaccard_scores(t[0], t));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_embed_serial(benchmark::State& s) {
  HashingEmbedder e(256);
  auto t = make_texts(s.range(0), 80);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::embed_batch_serial(e, t));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_embed_parallel(benchmark::State& s) {
  HashingEmbedder e(256);
  auto t = make_texts(s.range(0), 80);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::embed_batch(e, t));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

}  // namespace

BENCHMARK(BM_cosine_serial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_cosine_parallel)->Arg(1000)->Arg(10000);
BENCHMARK(BM_jaccard_serial)->Arg(1000)->Arg(5000);
BENCHMARK(BM_jaccard_parallel)->Arg(1000)->Arg(5000);
BENCHMARK(BM_embed_serial)->Arg(1000)->Arg(5000);
BENCHMARK(BM_embed_parallel)->Arg(1000)->Arg(5000);

BENCHMARK_MAIN();
