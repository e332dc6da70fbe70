#include "coach/toolbox.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <sstream>

#include "coach/serialization.hpp"

namespace coach {

std::string_view to_string(ArgumentType type) {
    switch (type) {
        case ArgumentType::string: return "string";
        case ArgumentType::integer: return "integer";
        case ArgumentType::number: return "number";
        case ArgumentType::boolean: return "boolean";
    }
    return "string";
}

// --- Registry --------------------------------------------------------------

ToolRegistry& ToolRegistry::register_tool(ToolDescriptor descriptor, ToolHandler handler) {
    if (descriptor.name.empty()) throw RegistryError("tool name must be non-empty");
    if (!handler) throw RegistryError("tool " + descriptor.name + " has no handler");
    if (tools_.count(descriptor.name) > 0) throw RegistryError("duplicate tool name: " + descriptor.name);
    std::set<std::string> seen;
    for (const auto& arg : descriptor.argument_schema) {
        if (arg.name.empty()) throw RegistryError("tool " + descriptor.name + " has an unnamed argument");
        if (!seen.insert(arg.name).second) throw RegistryError("tool " + descriptor.name + " repeats argument " + arg.name);
        if ((arg.min || arg.max) && arg.type != ArgumentType::integer) {
            throw RegistryError("tool " + descriptor.name + ": bounds are only allowed on integer arguments");
        }
        if (arg.min && arg.max && *arg.min > *arg.max) throw RegistryError("tool " + descriptor.name + ": empty bounds on " + arg.name);
    }
    if (descriptor.handler_id.empty()) descriptor.handler_id = descriptor.name;
    std::string name = descriptor.name;
    tools_.emplace(std::move(name), Entry{std::move(descriptor), std::move(handler)});
    return *this;
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, entry] : tools_) out.push_back(name);
    return out;
}

std::set<std::string> ToolRegistry::name_set() const {
    auto n = names();
    return {n.begin(), n.end()};
}

std::vector<ToolDescriptor> ToolRegistry::listing() const {
    std::vector<ToolDescriptor> out;
    for (const auto& [name, entry] : tools_) out.push_back(entry.descriptor);
    return out;
}

const ToolDescriptor* ToolRegistry::find(std::string_view name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second.descriptor;
}

std::string ToolRegistry::advertisement() const { return advertise(listing()); }

std::string advertise(const std::vector<ToolDescriptor>& descriptors) {
    std::string out;
    for (const auto& d : descriptors) {
        out += "- " + d.name + ": " + d.description + "\n";
        for (const auto& arg : d.argument_schema) {
            out += "    " + arg.name + " (" + std::string(to_string(arg.type));
            out += arg.required ? ", required" : ", optional";
            if (arg.min && arg.max) {
                out += ", " + std::to_string(*arg.min) + ".." + std::to_string(*arg.max);
            } else if (arg.min) {
                out += ", >= " + std::to_string(*arg.min);
            } else if (arg.max) {
                out += ", <= " + std::to_string(*arg.max);
            }
            out += ")";
            if (!arg.description.empty()) out += ": " + arg.description;
            out += "\n";
        }
    }
    return out;
}

std::optional<std::string> check_arguments(const ToolDescriptor& descriptor, const Json& arguments) {
    if (!arguments.is_object()) return std::string("arguments: must be an object");
    for (auto it = arguments.begin(); it != arguments.end(); ++it) {
        const bool known = std::any_of(descriptor.argument_schema.begin(), descriptor.argument_schema.end(),
                                       [&](const ArgumentSpec& a) { return a.name == it.key(); });
        if (!known) return it.key() + ": unknown argument";
    }
    for (const auto& spec : descriptor.argument_schema) {
        auto it = arguments.find(spec.name);
        if (it == arguments.end() || it->is_null()) {
            if (spec.required) return spec.name + ": required argument missing";
            continue;
        }
        bool ok = false;
        switch (spec.type) {
            case ArgumentType::string: ok = it->is_string(); break;
            case ArgumentType::integer: ok = it->is_number_integer(); break;
            case ArgumentType::number: ok = it->is_number(); break;
            case ArgumentType::boolean: ok = it->is_boolean(); break;
        }
        if (!ok) return spec.name + ": expected " + std::string(to_string(spec.type));
        if (spec.type == ArgumentType::integer) {
            const auto value = it->get<long long>();
            if ((spec.min && value < *spec.min) || (spec.max && value > *spec.max)) {
                std::string range = spec.min && spec.max ? "between " + std::to_string(*spec.min) + " and " + std::to_string(*spec.max)
                                    : spec.min           ? ">= " + std::to_string(*spec.min)
                                                         : "<= " + std::to_string(*spec.max);
                return spec.name + ": must be " + range;
            }
        }
    }
    return std::nullopt;
}

Observation ToolRegistry::dispatch(const ToolCall& call) const noexcept {
    Observation obs;
    obs.tool_name = call.tool_name;
    try {
        auto it = tools_.find(call.tool_name);
        if (it == tools_.end()) {
            std::string available;
            for (const auto& [name, entry] : tools_) available += (available.empty() ? "" : ", ") + name;
            obs.kind = ObservationKind::error;
            obs.payload = "unknown tool: " + call.tool_name + "; available: " + available;
            return obs;
        }
        if (auto defect = check_arguments(it->second.descriptor, call.arguments)) {
            obs.kind = ObservationKind::error;
            obs.payload = *defect;
            return obs;
        }
        obs.payload = it->second.handler(call.arguments);
        obs.kind = ObservationKind::success;
        if (obs.payload.empty()) obs.payload = "(no output)";
    } catch (const std::exception& e) {
        obs.kind = ObservationKind::error;
        obs.payload = *e.what() != '\0' ? e.what() : "tool failed";
    } catch (...) {
        obs.kind = ObservationKind::error;
        obs.payload = "tool failed with an unknown error";
    }
    return obs;
}

// --- Course content --------------------------------------------------------

std::string render_passages(const CorpusIndex& index, const std::vector<RankedHit>& hits) {
    if (hits.empty()) return std::string(kNoPassagesFound);
    std::string out;
    for (const auto& hit : hits) {
        const Chunk* chunk = find_chunk(index, hit.chunk_id);
        if (chunk == nullptr) continue;
        std::string path;
        for (const auto& h : chunk->heading_path) path += (path.empty() ? "" : " > ") + h;
        if (path.empty()) path = chunk->doc_id;
        if (!out.empty()) out += "\n";
        out += "— [" + path + "] " + std::string(trim(chunk->text));
    }
    return out;
}

std::string lookup_course_content(const CorpusIndex& index, const Embedder& embedder, std::string_view query, int k) {
    return render_passages(index, hybrid_search(index, query, embedder, k));
}

// --- Prerequisites ---------------------------------------------------------

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1);
    std::vector<std::size_t> cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::optional<std::string> resolve_topic(const TopicGraph& graph, std::string_view topic) {
    if (graph.topics.count(std::string(topic))) return std::string(topic);
    const auto wanted = lower(topic);
    for (const auto& t : graph.topics) {
        if (lower(t) == wanted) return t;
    }
    return std::nullopt;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string display_name(BehaviourDimension d) {
    std::string s(to_string(d));
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

}  // namespace

TopicGraph load_topic_graph(const std::string& path) { return from_document<TopicGraph>(read_text(path)); }

std::vector<std::string> nearest_topics(const TopicGraph& graph, std::string_view topic) {
    const auto wanted = lower(topic);
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto& t : graph.topics) {
        const auto candidate = lower(t);
        const bool substring = !wanted.empty() && (candidate.find(wanted) != std::string::npos ||
                                                   wanted.find(candidate) != std::string::npos);
        const auto distance = edit_distance(wanted, candidate);
        if (substring || distance <= 2) scored.emplace_back(substring ? 0 : distance, t);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (auto& [d, t] : scored) out.push_back(std::move(t));
    return out;
}

std::vector<std::vector<std::string>> prerequisite_layers(const TopicGraph& graph, std::string_view topic, int depth) {
    auto resolved = resolve_topic(graph, topic);
    if (!resolved) {
        auto near = nearest_topics(graph, topic);
        std::string message = "unknown topic: " + std::string(topic);
        if (!near.empty()) {
            message += "; did you mean: ";
            for (std::size_t i = 0; i < near.size(); ++i) message += (i ? ", " : "") + near[i];
        }
        throw ToolError(message);
    }

    std::map<std::string, std::vector<std::string>> prerequisites_of;
    for (const auto& [pre, dep] : graph.edges) prerequisites_of[dep].push_back(pre);

    std::vector<std::vector<std::string>> layers;
    std::set<std::string> visited{*resolved};
    std::vector<std::string> frontier{*resolved};
    for (int hop = 1; hop <= depth && !frontier.empty(); ++hop) {
        std::set<std::string> next;
        for (const auto& node : frontier) {
            for (const auto& pre : prerequisites_of[node]) {
                if (visited.insert(pre).second) next.insert(pre);
            }
        }
        if (next.empty()) break;
        layers.emplace_back(next.begin(), next.end());
        frontier = layers.back();
    }
    return layers;
}

std::string lookup_prerequisites(const TopicGraph& graph, std::string_view topic, int depth) {
    const auto layers = prerequisite_layers(graph, topic, depth);
    const std::string name = *resolve_topic(graph, topic);
    if (layers.empty()) return name + " has no recorded prerequisites.";
    std::string out = "Prerequisites for " + name + ":";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out += "\n- " + std::to_string(i + 1) + (i == 0 ? " hop: " : " hops: ");
        for (std::size_t j = 0; j < layers[i].size(); ++j) out += (j ? ", " : "") + layers[i][j];
    }
    return out;
}

// --- Behaviour -------------------------------------------------------------

std::vector<BehaviourDescriptor> load_behaviour_descriptors(const std::string& path) {
    auto descriptors = from_document<std::vector<BehaviourDescriptor>>(read_text(path));
    std::set<BehaviourDimension> seen;
    for (const auto& d : descriptors) {
        if (!seen.insert(d.dimension).second) {
            throw ValidationError("duplicate behaviour dimension: " + std::string(to_string(d.dimension)));
        }
    }
    if (seen.size() != kAllBehaviourDimensions.size()) {
        throw ValidationError("behaviour descriptor file must define all five dimensions");
    }
    std::sort(descriptors.begin(), descriptors.end(),
              [](const auto& a, const auto& b) { return a.dimension < b.dimension; });
    return descriptors;
}

BehaviourMatch match_behaviour(const std::vector<BehaviourDescriptor>& descriptors,
                               const Embedder& embedder,
                               std::string_view query) {
    if (descriptors.empty()) throw ValidationError("no behaviour descriptors loaded");
    auto ordered = descriptors;
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.dimension < b.dimension; });

    auto pick = [&ordered](const std::map<BehaviourDimension, double>& scores) {
        BehaviourDimension best = ordered.front().dimension;
        double best_score = scores.at(best);
        for (const auto& d : ordered) {
            if (scores.at(d.dimension) > best_score) {
                best = d.dimension;
                best_score = scores.at(d.dimension);
            }
        }
        return std::pair{best, best_score};
    };

    BehaviourMatch match;
    if (embedder.enabled() && !trim(query).empty()) {
        const auto q = embedder.embed(query);
        for (const auto& d : ordered) {
            const auto v = embedder.embed(d.descriptor);
            double dot = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * q[i];
            match.scores[d.dimension] = dot;
        }
        const auto [best, score] = pick(match.scores);
        if (score >= kBehaviourSimilarityThreshold) {
            match.dimension = best;
            match.method = BehaviourMatchMethod::embedding;
            return match;
        }
    }

    match.scores.clear();
    match.method = BehaviourMatchMethod::keyword;
    const auto query_tokens = tokenize(query);
    const std::set<std::string> query_terms(query_tokens.begin(), query_tokens.end());
    for (const auto& d : ordered) {
        const auto tokens = tokenize(d.descriptor);
        const std::set<std::string> terms(tokens.begin(), tokens.end());
        double overlap = 0.0;
        for (const auto& t : terms) overlap += query_terms.count(t) > 0 ? 1.0 : 0.0;
        match.scores[d.dimension] = overlap;
    }
    const auto [best, score] = pick(match.scores);
    match.dimension = best;
    match.low_confidence = score == 0.0;
    return match;
}

std::string behaviour_counterfactual(const std::vector<BehaviourDescriptor>& descriptors,
                                     const Embedder& embedder,
                                     std::string_view query) {
    const auto match = match_behaviour(descriptors, embedder, query);
    const auto it = std::find_if(descriptors.begin(), descriptors.end(),
                                 [&](const auto& d) { return d.dimension == match.dimension; });
    std::string explanation = it->explanation_template;
    const std::string placeholder = "{query}";
    for (auto pos = explanation.find(placeholder); pos != std::string::npos;
         pos = explanation.find(placeholder, pos + query.size())) {
        explanation.replace(pos, placeholder.size(), query);
    }
    std::string out = "Dimension: " + display_name(match.dimension) + "\n" + explanation;
    if (match.low_confidence) out += "\n(low confidence: the question did not clearly match any behavioural dimension)";
    return out;
}

// --- Default registry ------------------------------------------------------

namespace {

// Absent and null both mean "use the default", matching check_arguments.
int optional_int(const Json& args, const char* name, int fallback) {
    auto it = args.find(name);
    return it == args.end() || it->is_null() ? fallback : it->get<int>();
}

ToolDescriptor course_content_descriptor() {
    return {std::string(tool_name::course_content),
            "Search the course materials (textbook, syllabus, slides, exercises) for passages relevant to a query.",
            {{"query", ArgumentType::string, true, std::nullopt, std::nullopt, "what to look up"},
             {"k", ArgumentType::integer, false, 1, 10, "number of passages, default 3"}},
            "course_content"};
}

ToolDescriptor prerequisites_descriptor() {
    return {std::string(tool_name::prerequisites),
            "List the prerequisite topics of a course topic, grouped by distance.",
            {{"topic", ArgumentType::string, true, std::nullopt, std::nullopt, "course topic name"},
             {"depth", ArgumentType::integer, false, 1, 5, "how many prerequisite hops, default 1"}},
            "prerequisites"};
}

ToolDescriptor behaviour_descriptor() {
    return {std::string(tool_name::behaviour),
            "Explain how a change in study behaviour (effort, consistency, proactivity, assessment, regularity) "
            "may influence learning outcomes.",
            {{"query", ArgumentType::string, true, std::nullopt, std::nullopt, "the student's what-if question"}},
            "behaviour"};
}

}  // namespace

std::vector<ToolDescriptor> default_tool_descriptors() {
    auto out = std::vector<ToolDescriptor>{course_content_descriptor(), prerequisites_descriptor(), behaviour_descriptor()};
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

ToolRegistry make_default_registry(const ToolResources& resources) {
    ToolRegistry registry;
    if (resources.index && resources.embedder) {
        auto index = resources.index;
        auto embedder = resources.embedder;
        registry.register_tool(course_content_descriptor(), [index, embedder](const Json& args) {
            const int k = optional_int(args, "k", 3);
            return lookup_course_content(*index, *embedder, args["query"].get<std::string>(), k);
        });
    }
    if (resources.topics) {
        auto topics = resources.topics;
        registry.register_tool(prerequisites_descriptor(), [topics](const Json& args) {
            const int depth = optional_int(args, "depth", 1);
            return lookup_prerequisites(*topics, args["topic"].get<std::string>(), depth);
        });
    }
    if (resources.behaviours && resources.embedder) {
        auto behaviours = resources.behaviours;
        auto embedder = resources.embedder;
        registry.register_tool(behaviour_descriptor(), [behaviours, embedder](const Json& args) {
            return behaviour_counterfactual(*behaviours, *embedder, args["query"].get<std::string>());
        });
    }
    return registry;
}

}  // namespace coach
