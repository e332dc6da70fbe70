#include "coach/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "coach/serialization.hpp"
#include "http_transport.hpp"

namespace coach {

namespace fs = std::filesystem;

// --- Chunking --------------------------------------------------------------

namespace {

struct Section {
    std::size_t start;
    std::size_t end;
    std::vector<std::string> path;
};

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

std::size_t back_to_boundary(std::string_view text, std::size_t pos, std::size_t floor) {
    while (pos > floor && pos < text.size() && is_continuation(static_cast<unsigned char>(text[pos]))) --pos;
    return pos;
}

std::size_t forward_to_boundary(std::string_view text, std::size_t pos) {
    while (pos < text.size() && is_continuation(static_cast<unsigned char>(text[pos]))) ++pos;
    return pos;
}

std::vector<Section> split_sections(std::string_view text) {
    struct Heading {
        std::size_t start;
        int level;
        std::string title;
    };
    std::vector<Heading> headings;
    bool in_fence = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const auto line = text.substr(pos, eol - pos);
        if (line.substr(0, 3) == "```") {
            in_fence = !in_fence;
        } else if (!in_fence) {
            std::size_t level = 0;
            while (level < line.size() && line[level] == '#') ++level;
            if (level >= 1 && level <= 6 && (level == line.size() || line[level] == ' ' || line[level] == '\t')) {
                headings.push_back({pos, static_cast<int>(level), std::string(trim(line.substr(level)))});
            }
        }
        pos = eol + 1;
    }

    std::vector<Section> sections;
    if (headings.empty()) {
        sections.push_back({0, text.size(), {}});
        return sections;
    }
    if (!trim(text.substr(0, headings.front().start)).empty()) {
        sections.push_back({0, headings.front().start, {}});
    } else {
        headings.front().start = 0;
    }
    std::vector<std::pair<int, std::string>> stack;
    for (std::size_t i = 0; i < headings.size(); ++i) {
        while (!stack.empty() && stack.back().first >= headings[i].level) stack.pop_back();
        stack.emplace_back(headings[i].level, headings[i].title);
        std::vector<std::string> path;
        for (const auto& [level, title] : stack) path.push_back(title);
        const auto end = i + 1 < headings.size() ? headings[i + 1].start : text.size();
        sections.push_back({headings[i].start, end, std::move(path)});
    }
    return sections;
}

}  // namespace

std::vector<Chunk> chunk_document(const std::string& doc_id, std::string_view markdown, const ChunkPolicy& policy) {
    if (markdown.empty()) throw ValidationError("chunk_document requires non-empty markdown");
    if (policy.max_chars == 0 || policy.overlap_chars >= policy.max_chars) {
        throw ValidationError("chunk policy requires overlap_chars < max_chars");
    }

    std::vector<CharSpan> spans;
    std::vector<std::vector<std::string>> paths;
    auto emit = [&](std::size_t s, std::size_t e, const std::vector<std::string>& path) {
        if (s < e && !trim(markdown.substr(s, e - s)).empty()) {
            spans.push_back({s, e});
            paths.push_back(path);
        }
    };

    for (const auto& section : split_sections(markdown)) {
        std::size_t start = section.start;
        std::size_t fresh = section.start;  // where content not yet emitted begins
        while (true) {
            const std::size_t limit = start + policy.max_chars;
            if (section.end <= limit) {
                emit(start, section.end, section.path);
                break;
            }
            // Last paragraph break that still advances past emitted content.
            std::size_t cut = std::string_view::npos;
            if (limit >= 2) {
                const auto p = markdown.rfind("\n\n", limit - 2);
                if (p != std::string_view::npos && p + 2 > fresh) cut = p + 2;
            }
            if (cut == std::string_view::npos) cut = back_to_boundary(markdown, limit, fresh + 1);
            emit(start, cut, section.path);
            std::size_t next = cut >= start + policy.overlap_chars + 1 ? cut - policy.overlap_chars : cut;
            next = forward_to_boundary(markdown, next);
            if (next <= start) next = cut;
            fresh = cut;
            start = next;
        }
    }

    std::vector<Chunk> chunks;
    chunks.reserve(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "#%04zu", i);
        chunks.push_back({doc_id + id, doc_id, paths[i],
                          std::string(markdown.substr(spans[i].start, spans[i].size())), spans[i]});
    }
    return chunks;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && std::isspace(c)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else if (c < 0x80 && std::ispunct(c)) {
            continue;
        } else {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// --- Embeddings ------------------------------------------------------------

EmbedderDescriptor EmbedderDescriptor::fake(int dimension) {
    EmbedderDescriptor d;
    d.kind = EmbedderKind::deterministic_fake;
    d.dimension = dimension;
    d.embedder_id = "fake-trigram-" + std::to_string(dimension);
    return d;
}

void to_json(Json& out, const EmbedderDescriptor& v) {
    out = Json{{"kind", v.kind == EmbedderKind::deterministic_fake ? "deterministic_fake" : "remote_embedding_endpoint"},
               {"dimension", v.dimension},
               {"embedder_id", v.embedder_id},
               {"model_name", v.model_name}};
    if (v.endpoint_url) out["endpoint_url"] = *v.endpoint_url;
    if (v.auth_token_env_var) out["auth_token_env_var"] = *v.auth_token_env_var;
}

void from_json(const Json& in, EmbedderDescriptor& v) {
    if (!in.is_object()) throw ParseError("EmbedderDescriptor: expected an object");
    static const std::set<std::string> known = {"kind", "endpoint_url", "model_name", "auth_token_env_var",
                                                "dimension", "embedder_id"};
    for (auto it = in.begin(); it != in.end(); ++it) {
        if (known.count(it.key()) == 0) throw ParseError("EmbedderDescriptor." + it.key() + ": unknown field");
    }
    const std::string kind = in.value("kind", "deterministic_fake");
    if (kind == "deterministic_fake") {
        v = EmbedderDescriptor::fake(in.value("dimension", 256));
    } else if (kind == "remote_embedding_endpoint") {
        v = EmbedderDescriptor{};
        v.kind = EmbedderKind::remote_embedding_endpoint;
        if (!in.contains("endpoint_url")) throw ParseError("EmbedderDescriptor.endpoint_url: required for remote kind");
        v.endpoint_url = in["endpoint_url"].get<std::string>();
        v.dimension = in.value("dimension", 0);
        v.model_name = in.value("model_name", "");
        if (in.contains("auth_token_env_var")) v.auth_token_env_var = in["auth_token_env_var"].get<std::string>();
        v.embedder_id = "remote:" + v.model_name;
    } else {
        throw ParseError("EmbedderDescriptor.kind: unknown value: " + kind);
    }
    if (in.contains("embedder_id")) v.embedder_id = in["embedder_id"].get<std::string>();
    if (v.dimension < 0) throw ParseError("EmbedderDescriptor.dimension: must be >= 0");
}

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return;
    for (double& x : v) x /= norm;
}

}  // namespace

std::vector<double> fake_embedding(std::string_view text, int dimension) {
    if (dimension <= 0) return {};
    std::string lowered(text);
    for (char& c : lowered) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    std::vector<double> v(static_cast<std::size_t>(dimension), 0.0);
    const auto d = static_cast<std::uint64_t>(dimension);
    if (lowered.size() < 3) {
        v[fnv1a(lowered) % d] += 1.0;
    } else {
        for (std::size_t i = 0; i + 3 <= lowered.size(); ++i) v[fnv1a(std::string_view(lowered).substr(i, 3)) % d] += 1.0;
    }
    normalize(v);
    return v;
}

Embedder::Embedder(EmbedderDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    if (descriptor_.dimension < 0) throw ValidationError("embedder dimension must be >= 0");
    if (descriptor_.kind == EmbedderKind::remote_embedding_endpoint && !descriptor_.endpoint_url) {
        throw ValidationError("remote embedder requires endpoint_url");
    }
    if (descriptor_.embedder_id.empty()) {
        descriptor_.embedder_id = descriptor_.kind == EmbedderKind::deterministic_fake
                                      ? "fake-trigram-" + std::to_string(descriptor_.dimension)
                                      : "remote:" + descriptor_.model_name;
    }
}

std::vector<double> Embedder::embed(std::string_view text) const {
    if (text.empty()) throw ValidationError("cannot embed empty text");
    if (descriptor_.kind == EmbedderKind::deterministic_fake) return fake_embedding(text, descriptor_.dimension);

    Json body{{"model", descriptor_.model_name}, {"input", std::string(text)}};
    const Json response = detail::post_json(*descriptor_.endpoint_url, body,
                                            detail::bearer_from_env(descriptor_.auth_token_env_var), descriptor_.retry);
    std::vector<double> v;
    try {
        v = response.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw TransportError(std::string("unexpected embedding response shape: ") + e.what(), 1);
    }
    if (descriptor_.dimension > 0 && static_cast<int>(v.size()) != descriptor_.dimension) {
        throw IndexError("embedding endpoint returned dimension " + std::to_string(v.size()) + ", expected " +
                         std::to_string(descriptor_.dimension));
    }
    normalize(v);
    return v;
}

std::vector<double> embed(const EmbedderDescriptor& embedder, std::string_view text) {
    return Embedder(embedder).embed(text);
}

// --- Search ----------------------------------------------------------------

std::string_view to_string(HitSource source) {
    switch (source) {
        case HitSource::lexical: return "lexical";
        case HitSource::semantic: return "semantic";
        case HitSource::fused: return "fused";
    }
    return "fused";
}

namespace {

std::vector<RankedHit> top_k(std::vector<std::pair<std::string, double>> scored, int k, HitSource source) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (k >= 0 && scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    std::vector<RankedHit> hits;
    hits.reserve(scored.size());
    int rank = 1;
    for (auto& [id, score] : scored) hits.push_back({std::move(id), score, rank++, source});
    return hits;
}

}  // namespace

LexicalStats build_lexical_stats(const std::vector<Chunk>& chunks) {
    LexicalStats stats;
    long total = 0;
    for (const auto& chunk : chunks) {
        std::map<std::string, int> tf;
        const auto tokens = tokenize(chunk.text);
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) ++stats.document_frequency[term];
        stats.chunk_lengths.push_back(static_cast<int>(tokens.size()));
        stats.term_frequencies.push_back(std::move(tf));
        total += static_cast<long>(tokens.size());
    }
    stats.average_length = chunks.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(chunks.size());
    return stats;
}

std::vector<RankedHit> bm25_search(const CorpusIndex& index, std::string_view query, int k, const Bm25Params& params) {
    if (k < 1) throw ValidationError("k must be >= 1");
    const auto tokens = tokenize(query);
    const std::set<std::string> terms(tokens.begin(), tokens.end());
    if (terms.empty()) return {};

    const auto& stats = index.lexical_stats;
    const double n = static_cast<double>(index.chunks.size());
    std::map<std::string, double> idf;
    for (const auto& term : terms) {
        auto it = stats.document_frequency.find(term);
        if (it == stats.document_frequency.end()) continue;
        const double df = it->second;
        idf[term] = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }
    if (idf.empty()) return {};

    std::vector<std::pair<std::string, double>> scored;
    for (std::size_t i = 0; i < index.chunks.size(); ++i) {
        const auto& tf_map = stats.term_frequencies[i];
        const double norm = stats.average_length > 0.0
                                ? params.k1 * (1.0 - params.b + params.b * stats.chunk_lengths[i] / stats.average_length)
                                : params.k1;
        double score = 0.0;
        bool matched = false;
        for (const auto& [term, weight] : idf) {
            auto it = tf_map.find(term);
            if (it == tf_map.end()) continue;
            const double tf = it->second;
            score += weight * tf * (params.k1 + 1.0) / (tf + norm);
            matched = true;
        }
        if (matched) scored.emplace_back(index.chunks[i].chunk_id, score);
    }
    return top_k(std::move(scored), k, HitSource::lexical);
}

std::vector<RankedHit> vector_search(const CorpusIndex& index, std::span<const double> query_vector, int k) {
    if (k < 1) throw ValidationError("k must be >= 1");
    if (static_cast<int>(query_vector.size()) != index.dimension) {
        throw IndexError("query dimension " + std::to_string(query_vector.size()) + " does not match index dimension " +
                         std::to_string(index.dimension));
    }
    if (index.dimension == 0) return {};
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(index.chunks.size());
    for (const auto& chunk : index.chunks) {
        const auto& v = index.vectors.at(chunk.chunk_id);
        double dot = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * query_vector[i];
        scored.emplace_back(chunk.chunk_id, dot);
    }
    return top_k(std::move(scored), k, HitSource::semantic);
}

std::vector<RankedHit> reciprocal_rank_fusion(std::span<const std::vector<RankedHit>> lists, int k, int rrf_k) {
    std::map<std::string, double> fused;
    for (const auto& list : lists) {
        for (const auto& hit : list) fused[hit.chunk_id] += 1.0 / (static_cast<double>(rrf_k) + hit.rank);
    }
    return top_k({fused.begin(), fused.end()}, k, HitSource::fused);
}

std::vector<RankedHit> hybrid_search(const CorpusIndex& index,
                                     std::string_view query,
                                     const Embedder& embedder,
                                     int k,
                                     const FusionParams& fusion) {
    if (k < 1) throw ValidationError("k must be >= 1");
    if (embedder.id() != index.embedder_id) {
        throw IndexError("embedder " + embedder.id() + " does not match index embedder " + index.embedder_id);
    }
    const int depth = std::max(k, fusion.candidate_depth);
    std::vector<std::vector<RankedHit>> lists;
    lists.push_back(bm25_search(index, query, depth));
    if (embedder.enabled() && !trim(query).empty()) {
        const auto q = embedder.embed(query);
        lists.push_back(vector_search(index, q, depth));
    }
    return reciprocal_rank_fusion(lists, k, fusion.rrf_k);
}

const Chunk* find_chunk(const CorpusIndex& index, std::string_view chunk_id) {
    auto it = std::lower_bound(index.chunks.begin(), index.chunks.end(), chunk_id,
                               [](const Chunk& c, std::string_view id) { return c.chunk_id < id; });
    if (it == index.chunks.end() || it->chunk_id != chunk_id) return nullptr;
    return &*it;
}

// --- Index lifecycle -------------------------------------------------------

CorpusIndex build_index(std::vector<DocumentInfo> documents, std::vector<Chunk> chunks, const Embedder& embedder) {
    std::sort(chunks.begin(), chunks.end(), [](const Chunk& a, const Chunk& b) { return a.chunk_id < b.chunk_id; });
    for (std::size_t i = 1; i < chunks.size(); ++i) {
        if (chunks[i].chunk_id == chunks[i - 1].chunk_id) throw IngestError("duplicate chunk id: " + chunks[i].chunk_id);
    }
    CorpusIndex index;
    index.documents = std::move(documents);
    index.lexical_stats = build_lexical_stats(chunks);
    index.embedder_id = embedder.id();
    index.dimension = embedder.dimension();
    if (embedder.enabled()) {
        for (const auto& chunk : chunks) index.vectors[chunk.chunk_id] = embedder.embed(chunk.text);
    }
    index.chunks = std::move(chunks);
    return index;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot read file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IngestError("cannot read file: " + path.string());
    return buf.str();
}

}  // namespace

CorpusIndex ingest_corpus(const fs::path& root, const Embedder& embedder, const ChunkPolicy& policy) {
    if (!fs::is_directory(root)) throw IngestError("corpus directory not found: " + root.string());

    std::map<std::string, DocumentInfo> manifest;
    const auto manifest_path = root / "manifest.json";
    if (fs::exists(manifest_path)) {
        Json doc;
        try {
            doc = Json::parse(read_file(manifest_path));
        } catch (const Json::parse_error& e) {
            throw IngestError("malformed manifest.json: " + std::string(e.what()));
        }
        if (!doc.is_object()) throw IngestError("manifest.json must map filenames to {kind, topic}");
        static const std::set<std::string> kinds = {"textbook", "syllabus", "slides", "exercises"};
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            DocumentInfo info;
            info.kind = it->value("kind", "");
            info.topic = it->value("topic", "");
            if (!info.kind.empty() && kinds.count(info.kind) == 0) {
                throw IngestError("manifest.json: unknown document kind for " + it.key() + ": " + info.kind);
            }
            manifest[it.key()] = info;
        }
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().extension() == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [&root](const fs::path& a, const fs::path& b) {
        return fs::relative(a, root).generic_string() < fs::relative(b, root).generic_string();
    });
    if (files.empty()) throw IngestError("empty corpus: no .md files under " + root.string());

    std::vector<DocumentInfo> documents;
    std::vector<Chunk> chunks;
    for (const auto& file : files) {
        const std::string rel = fs::relative(file, root).generic_string();
        const std::string text = read_file(file);
        if (trim(text).empty()) throw IngestError("empty document: " + rel);
        DocumentInfo info = manifest.count(rel) ? manifest[rel] : DocumentInfo{};
        info.doc_id = rel.substr(0, rel.size() - 3);
        for (auto& c : chunk_document(info.doc_id, text, policy)) chunks.push_back(std::move(c));
        documents.push_back(std::move(info));
    }
    return build_index(std::move(documents), std::move(chunks), embedder);
}

void save_index(const CorpusIndex& index, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write index file: " + path.string());
    out << to_document(index);
    if (!out) throw IngestError("cannot write index file: " + path.string());
}

CorpusIndex load_index(const fs::path& path, std::optional<std::string> expected_embedder_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IndexError("cannot read index file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    CorpusIndex index = from_document<CorpusIndex>(buf.str());
    if (expected_embedder_id && *expected_embedder_id != index.embedder_id) {
        throw IndexError("index was built with embedder " + index.embedder_id + ", not " + *expected_embedder_id);
    }
    return index;
}

}  // namespace coach
