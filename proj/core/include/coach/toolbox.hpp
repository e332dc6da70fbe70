#pragma once

// Tool registry with argument-schema validation and total dispatch: every
// call produces exactly one Observation, never an exception.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"
#include "coach/retrieval.hpp"

namespace coach {

enum class ArgumentType { string, integer, number, boolean };

std::string_view to_string(ArgumentType type);

struct ArgumentSpec {
    std::string name;
    ArgumentType type = ArgumentType::string;
    bool required = true;
    std::optional<long long> min;  // integer bounds, inclusive
    std::optional<long long> max;
    std::string description;
};

struct ToolDescriptor {
    std::string name;
    std::string description;
    std::vector<ArgumentSpec> argument_schema;
    std::string handler_id;
};

// Raised by handlers for failures the agent should see as an error
// observation (unknown topic, ...).
class ToolError : public Error {
public:
    using Error::Error;
};

using ToolHandler = std::function<std::string(const Json& arguments)>;

class ToolRegistry {
public:
    // Throws RegistryError on a duplicate name or malformed schema.
    ToolRegistry& register_tool(ToolDescriptor descriptor, ToolHandler handler);

    std::size_t size() const { return tools_.size(); }
    bool empty() const { return tools_.empty(); }
    std::vector<std::string> names() const;  // sorted
    std::set<std::string> name_set() const;
    std::vector<ToolDescriptor> listing() const;  // sorted by name
    const ToolDescriptor* find(std::string_view name) const;

    // Deterministic schema block rendered into agent prompts.
    std::string advertisement() const;

    Observation dispatch(const ToolCall& call) const noexcept;

private:
    struct Entry {
        ToolDescriptor descriptor;
        ToolHandler handler;
    };
    std::map<std::string, Entry, std::less<>> tools_;
};

// Empty when arguments satisfy the schema; otherwise "<field>: <defect>".
std::optional<std::string> check_arguments(const ToolDescriptor& descriptor, const Json& arguments);

// --- Tool implementations ----------------------------------------------------

namespace tool_name {
inline constexpr std::string_view course_content = "lookup_course_content";
inline constexpr std::string_view prerequisites = "lookup_prerequisites";
inline constexpr std::string_view behaviour = "behaviour_counterfactual";
}  // namespace tool_name

inline constexpr std::string_view kNoPassagesFound = "No relevant passages found in the course materials.";

std::string render_passages(const CorpusIndex& index, const std::vector<RankedHit>& hits);

std::string lookup_course_content(const CorpusIndex& index, const Embedder& embedder, std::string_view query, int k);

TopicGraph load_topic_graph(const std::string& path);

// Prerequisites grouped by hop distance (index 0 = direct prerequisites),
// each group sorted alphabetically. Throws ToolError for an unknown topic.
std::vector<std::vector<std::string>> prerequisite_layers(const TopicGraph& graph, std::string_view topic, int depth);

// Case-insensitive substring matches plus near misses (edit distance <= 2).
std::vector<std::string> nearest_topics(const TopicGraph& graph, std::string_view topic);

std::string lookup_prerequisites(const TopicGraph& graph, std::string_view topic, int depth);

std::vector<BehaviourDescriptor> load_behaviour_descriptors(const std::string& path);

enum class BehaviourMatchMethod { embedding, keyword };

struct BehaviourMatch {
    BehaviourDimension dimension = BehaviourDimension::effort;
    BehaviourMatchMethod method = BehaviourMatchMethod::embedding;
    std::map<BehaviourDimension, double> scores;  // scores under the chosen method
    bool low_confidence = false;
};

inline constexpr double kBehaviourSimilarityThreshold = 0.15;

BehaviourMatch match_behaviour(const std::vector<BehaviourDescriptor>& descriptors,
                               const Embedder& embedder,
                               std::string_view query);

std::string behaviour_counterfactual(const std::vector<BehaviourDescriptor>& descriptors,
                                     const Embedder& embedder,
                                     std::string_view query);

struct ToolResources {
    std::shared_ptr<const CorpusIndex> index;
    std::shared_ptr<const Embedder> embedder;
    std::shared_ptr<const TopicGraph> topics;
    std::shared_ptr<const std::vector<BehaviourDescriptor>> behaviours;
};

// Registers the three tool families for whichever resources are present.
ToolRegistry make_default_registry(const ToolResources& resources);

// Descriptors of the three default tools, for advertising them without
// loading any resources.
std::vector<ToolDescriptor> default_tool_descriptors();

std::string advertise(const std::vector<ToolDescriptor>& descriptors);

}  // namespace coach
