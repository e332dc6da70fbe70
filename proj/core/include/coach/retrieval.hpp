#pragma once

// Course-material retrieval: markdown chunking, Okapi BM25, dense vectors,
// and reciprocal rank fusion of the two rankings.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"
#include "coach/gateway.hpp"

namespace coach {

struct ChunkPolicy {
    std::size_t max_chars = 1500;
    std::size_t overlap_chars = 200;
};

// Splits at headings first, then oversized sections at paragraph breaks
// (hard cuts when a paragraph alone is too long). Each follow-on piece
// repeats overlap_chars of the previous piece, counted within max_chars.
std::vector<Chunk> chunk_document(const std::string& doc_id, std::string_view markdown, const ChunkPolicy& policy = {});

// Lowercased, ASCII punctuation removed, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

enum class EmbedderKind { remote_embedding_endpoint, deterministic_fake };

struct EmbedderDescriptor {
    EmbedderKind kind = EmbedderKind::deterministic_fake;
    std::optional<std::string> endpoint_url;
    std::string model_name;
    std::optional<std::string> auth_token_env_var;
    int dimension = 256;  // 0 disables the semantic side entirely
    std::string embedder_id;
    RetryPolicy retry;

    static EmbedderDescriptor fake(int dimension);
};

void to_json(Json& out, const EmbedderDescriptor& v);
void from_json(const Json& in, EmbedderDescriptor& v);

// Character trigrams hashed (FNV-1a, 64 bit) into `dimension` buckets, then
// L2-normalised. Texts shorter than three bytes hash as a single gram.
std::vector<double> fake_embedding(std::string_view text, int dimension);

class Embedder {
public:
    explicit Embedder(EmbedderDescriptor descriptor);

    // Unit-norm vector; empty when the embedder is disabled (dimension 0).
    std::vector<double> embed(std::string_view text) const;

    const EmbedderDescriptor& descriptor() const { return descriptor_; }
    const std::string& id() const { return descriptor_.embedder_id; }
    int dimension() const { return descriptor_.dimension; }
    bool enabled() const { return descriptor_.dimension > 0; }

private:
    EmbedderDescriptor descriptor_;
};

std::vector<double> embed(const EmbedderDescriptor& embedder, std::string_view text);

enum class HitSource { lexical, semantic, fused };

std::string_view to_string(HitSource source);

struct RankedHit {
    std::string chunk_id;
    double score = 0.0;
    int rank = 0;
    HitSource source = HitSource::lexical;

    bool operator==(const RankedHit&) const = default;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct FusionParams {
    int rrf_k = 60;
    int candidate_depth = 20;  // each list contributes max(k, candidate_depth) candidates
};

LexicalStats build_lexical_stats(const std::vector<Chunk>& chunks);

std::vector<RankedHit> bm25_search(const CorpusIndex& index, std::string_view query, int k, const Bm25Params& params = {});

std::vector<RankedHit> vector_search(const CorpusIndex& index, std::span<const double> query_vector, int k);

// fused(d) = sum over lists of 1 / (rrf_k + rank_d), absent lists adding 0.
std::vector<RankedHit> reciprocal_rank_fusion(std::span<const std::vector<RankedHit>> lists, int k, int rrf_k);

std::vector<RankedHit> hybrid_search(const CorpusIndex& index,
                                     std::string_view query,
                                     const Embedder& embedder,
                                     int k,
                                     const FusionParams& fusion = {});

const Chunk* find_chunk(const CorpusIndex& index, std::string_view chunk_id);

CorpusIndex build_index(std::vector<DocumentInfo> documents, std::vector<Chunk> chunks, const Embedder& embedder);

// Reads every .md file under root (recursively, in path order) plus an
// optional manifest.json of {filename: {kind, topic}}.
CorpusIndex ingest_corpus(const std::filesystem::path& root, const Embedder& embedder, const ChunkPolicy& policy = {});

void save_index(const CorpusIndex& index, const std::filesystem::path& path);

// Rejects an index built with a different embedder.
CorpusIndex load_index(const std::filesystem::path& path, std::optional<std::string> expected_embedder_id = std::nullopt);

}  // namespace coach
