#include <benchmark/benchmark.h>

#include <random>

#include "coach/retrieval.hpp"

using namespace coach;

namespace {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words{"induction", "base",      "case",     "step",    "hypothesis", "recursion",
                                                "proof",     "function",  "set",      "relation", "graph",      "tree",
                                                "invariant", "loop",      "sum",      "series",   "bound",      "lemma",
                                                "theorem",   "corollary", "contrapositive", "modular", "prime", "divisor"};
    return words;
}

std::string random_text(std::mt19937& rng, int words) {
    std::uniform_int_distribution<std::size_t> pick(0, vocabulary().size() - 1);
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) out += i % 60 == 0 ? "\n\n" : " ";
        out += vocabulary()[pick(rng)];
    }
    return out;
}

CorpusIndex synthetic_index(int chunks, int dimension) {
    std::mt19937 rng(7);
    std::vector<Chunk> out;
    for (int i = 0; i < chunks; ++i) {
        const auto text = random_text(rng, 120);
        out.push_back({"doc#" + std::to_string(i), "doc", {}, text, {0, text.size()}});
    }
    return build_index({}, out, Embedder(EmbedderDescriptor::fake(dimension)));
}

void BM_Bm25Search(benchmark::State& state) {
    const auto index = synthetic_index(static_cast<int>(state.range(0)), 0);
    for (auto _ : state) benchmark::DoNotOptimize(bm25_search(index, "base case of an induction proof", 5));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bm25Search)->Arg(100)->Arg(1000)->Arg(5000);

void BM_HybridSearch(benchmark::State& state) {
    const auto index = synthetic_index(static_cast<int>(state.range(0)), 256);
    const Embedder embedder(EmbedderDescriptor::fake(256));
    for (auto _ : state) benchmark::DoNotOptimize(hybrid_search(index, "base case of an induction proof", embedder, 5));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HybridSearch)->Arg(100)->Arg(1000)->Arg(5000);

void BM_FakeEmbedding(benchmark::State& state) {
    std::mt19937 rng(3);
    const auto text = random_text(rng, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fake_embedding(text, 256));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_FakeEmbedding)->Arg(50)->Arg(500);

void BM_ChunkDocument(benchmark::State& state) {
    std::mt19937 rng(11);
    std::string markdown;
    for (int s = 0; s < state.range(0); ++s) markdown += "## Section " + std::to_string(s) + "\n\n" + random_text(rng, 400) + "\n\n";
    for (auto _ : state) benchmark::DoNotOptimize(chunk_document("doc", markdown));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(markdown.size()));
}
BENCHMARK(BM_ChunkDocument)->Arg(10)->Arg(100);

}  // namespace
