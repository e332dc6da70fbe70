#pragma once

// Canonical data model shared by every other module. Values here carry no
// behaviour beyond construction, validation, and (in serialization.hpp)
// conversion to and from canonical JSON documents.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace coach {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Feedback report

struct FeedbackContext {
    std::string question_id;
    std::string question_text;
    std::string student_solution;  // may be empty: a blank submission is legal
    std::string reference_solution;
    std::string course_id;

    bool operator==(const FeedbackContext&) const = default;
};

// Empty when the context is usable for generation.
std::vector<std::string> validate_context(const FeedbackContext& ctx);

enum class ComponentKind {
    current_state,
    task_next_steps,
    strategy_next_steps,
    self_regulated_next_steps,
    praise,
};

inline constexpr std::array<ComponentKind, 5> kAllComponents = {
    ComponentKind::current_state,
    ComponentKind::task_next_steps,
    ComponentKind::strategy_next_steps,
    ComponentKind::self_regulated_next_steps,
    ComponentKind::praise,
};

std::string_view to_string(ComponentKind kind);
std::optional<ComponentKind> component_from_string(std::string_view name);

struct FeedbackReport {
    std::map<ComponentKind, std::string> components;
    std::string generated_at;  // RFC 3339, UTC
    int origin_iteration = 0;

    const std::string& text(ComponentKind kind) const;
    bool operator==(const FeedbackReport&) const = default;
};

// All invariant violations ("missing component: praise",
// "empty component: current_state", ...). Empty means the report is valid.
std::vector<std::string> validate_report(const FeedbackReport& report);

// ---------------------------------------------------------------------------
// Judging

enum class RubricCriterion {
    clarity,
    current_state_coverage,
    current_state_correctness,
    task_next_steps_coverage,
    task_next_steps_correctness,
    strategy_next_steps,
    self_regulated_next_steps,
    praise,
};

inline constexpr std::array<RubricCriterion, 8> kAllCriteria = {
    RubricCriterion::clarity,
    RubricCriterion::current_state_coverage,
    RubricCriterion::current_state_correctness,
    RubricCriterion::task_next_steps_coverage,
    RubricCriterion::task_next_steps_correctness,
    RubricCriterion::strategy_next_steps,
    RubricCriterion::self_regulated_next_steps,
    RubricCriterion::praise,
};

std::string_view to_string(RubricCriterion criterion);
std::optional<RubricCriterion> criterion_from_string(std::string_view name);

// Components a criterion governs. Clarity governs the whole report; every
// other criterion governs exactly one component.
std::vector<ComponentKind> governed_components(RubricCriterion criterion);

// Union of governed components over a set of criteria, in report order.
std::vector<ComponentKind> governed_components(const std::set<RubricCriterion>& criteria);

enum class Verdict { pass, fail };

std::string_view to_string(Verdict verdict);
std::optional<Verdict> verdict_from_string(std::string_view name);

struct JudgeVerdict {
    std::map<RubricCriterion, Verdict> judgments;
    std::map<RubricCriterion, std::string> explanations;  // present iff fail
    std::set<RubricCriterion> judged_criteria;

    bool all_pass() const;
    std::set<RubricCriterion> failing() const;
    bool operator==(const JudgeVerdict&) const = default;
};

std::vector<std::string> validate_verdict(const JudgeVerdict& verdict);

struct RefinementConfig {
    int max_iterations = 20;
    std::set<RubricCriterion> target_criteria{kAllCriteria.begin(), kAllCriteria.end()};
    int judge_runs = 1;

    bool operator==(const RefinementConfig&) const = default;
};

std::vector<std::string> validate_config(const RefinementConfig& config);

enum class RefinementTermination { all_pass, iteration_limit };

std::string_view to_string(RefinementTermination termination);

struct RefinementIteration {
    FeedbackReport report;
    JudgeVerdict verdict;

    bool operator==(const RefinementIteration&) const = default;
};

struct RefinementTrace {
    std::string context_ref;
    std::vector<RefinementIteration> iterations;
    RefinementTermination termination = RefinementTermination::iteration_limit;
    RefinementConfig config_snapshot;

    bool operator==(const RefinementTrace&) const = default;
};

std::vector<std::string> validate_trace(const RefinementTrace& trace);

// ---------------------------------------------------------------------------
// Interactive agent

struct ToolCall {
    std::string tool_name;
    Json arguments = Json::object();
    std::string raw_text;

    bool operator==(const ToolCall&) const = default;
};

enum class ObservationKind { success, error };

std::string_view to_string(ObservationKind kind);

struct Observation {
    ObservationKind kind = ObservationKind::success;
    std::string payload;
    std::string tool_name;

    bool operator==(const Observation&) const = default;
};

struct FinalAnswer {
    std::string text;

    bool operator==(const FinalAnswer&) const = default;
};

struct TrajectoryStep {
    int index = 0;
    std::string reasoning_summary;
    std::variant<ToolCall, FinalAnswer> action;
    std::optional<Observation> observation;  // present iff action is a tool call

    bool is_final() const { return std::holds_alternative<FinalAnswer>(action); }
    bool operator==(const TrajectoryStep&) const = default;
};

enum class TrajectoryTermination { answered, step_limit_forced };

std::string_view to_string(TrajectoryTermination termination);

struct Trajectory {
    std::string query;
    std::string report_ref;
    std::vector<TrajectoryStep> steps;
    std::string final_answer;
    TrajectoryTermination termination = TrajectoryTermination::answered;
    int error_count = 0;

    std::size_t tool_call_count() const;
    bool operator==(const Trajectory&) const = default;
};

std::vector<std::string> validate_trajectory(const Trajectory& trajectory);

enum class InteractiveCriterion { relevance, actionability, tool_relevance, correctness };

inline constexpr std::array<InteractiveCriterion, 4> kAllInteractiveCriteria = {
    InteractiveCriterion::relevance,
    InteractiveCriterion::actionability,
    InteractiveCriterion::tool_relevance,
    InteractiveCriterion::correctness,
};

std::string_view to_string(InteractiveCriterion criterion);
std::optional<InteractiveCriterion> interactive_criterion_from_string(std::string_view name);

struct InteractiveVerdict {
    std::map<InteractiveCriterion, Verdict> judgments;

    bool operator==(const InteractiveVerdict&) const = default;
};

// ---------------------------------------------------------------------------
// Retrieval

struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool operator==(const CharSpan&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::vector<std::string> heading_path;
    std::string text;
    CharSpan char_span;

    bool operator==(const Chunk&) const = default;
};

struct LexicalStats {
    std::map<std::string, int> document_frequency;
    std::vector<std::map<std::string, int>> term_frequencies;  // parallel to chunks
    std::vector<int> chunk_lengths;                            // tokens per chunk
    double average_length = 0.0;

    bool operator==(const LexicalStats&) const = default;
};

struct DocumentInfo {
    std::string doc_id;
    std::string kind;  // textbook | syllabus | slides | exercises | ""
    std::string topic;

    bool operator==(const DocumentInfo&) const = default;
};

struct CorpusIndex {
    std::vector<DocumentInfo> documents;
    std::vector<Chunk> chunks;  // sorted by chunk_id
    LexicalStats lexical_stats;
    std::map<std::string, std::vector<double>> vectors;  // chunk_id -> unit vector
    std::string embedder_id;
    int dimension = 0;

    bool operator==(const CorpusIndex&) const = default;
};

// ---------------------------------------------------------------------------
// Tool resources

struct TopicGraph {
    std::set<std::string> topics;
    std::set<std::pair<std::string, std::string>> edges;  // (prerequisite, dependent)

    bool operator==(const TopicGraph&) const = default;
};

// Rejects cycles and dangling endpoints.
std::vector<std::string> validate_graph(const TopicGraph& graph);

enum class BehaviourDimension { effort, consistency, proactivity, assessment, regularity };

inline constexpr std::array<BehaviourDimension, 5> kAllBehaviourDimensions = {
    BehaviourDimension::effort,
    BehaviourDimension::consistency,
    BehaviourDimension::proactivity,
    BehaviourDimension::assessment,
    BehaviourDimension::regularity,
};

std::string_view to_string(BehaviourDimension dimension);
std::optional<BehaviourDimension> behaviour_from_string(std::string_view name);

struct BehaviourDescriptor {
    BehaviourDimension dimension = BehaviourDimension::effort;
    std::string descriptor;
    std::string explanation_template;  // "{query}" is replaced by the student query

    bool operator==(const BehaviourDescriptor&) const = default;
};

// ---------------------------------------------------------------------------
// Analytics labels

enum class QuestionCategory { task, solution, feedback, additional_feedback, off_topic };

inline constexpr std::array<QuestionCategory, 5> kAllQuestionCategories = {
    QuestionCategory::task,
    QuestionCategory::solution,
    QuestionCategory::feedback,
    QuestionCategory::additional_feedback,
    QuestionCategory::off_topic,
};

enum class QuestionTheme {
    understanding_task,
    repairing,
    reassurance,
    requesting_model_answer,
    interpreting,
    negotiating,
    elaboration,
    reassessment,
    generalisation,
    seeking_further_improvements,
    usage_questions,
    personal_support,
    greeting_thanking,
};

inline constexpr std::array<QuestionTheme, 13> kAllQuestionThemes = {
    QuestionTheme::understanding_task,     QuestionTheme::repairing,
    QuestionTheme::reassurance,            QuestionTheme::requesting_model_answer,
    QuestionTheme::interpreting,           QuestionTheme::negotiating,
    QuestionTheme::elaboration,            QuestionTheme::reassessment,
    QuestionTheme::generalisation,         QuestionTheme::seeking_further_improvements,
    QuestionTheme::usage_questions,        QuestionTheme::personal_support,
    QuestionTheme::greeting_thanking,
};

std::string_view to_string(QuestionCategory category);
std::optional<QuestionCategory> category_from_string(std::string_view name);
std::string_view to_string(QuestionTheme theme);
std::optional<QuestionTheme> theme_from_string(std::string_view name);
QuestionCategory category_of(QuestionTheme theme);

struct SteeringRecord {
    std::string student_id;
    std::string component;  // Basis, IH, Step, ...
    bool highlighted = false;
    bool discussed = false;

    bool operator==(const SteeringRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Sessions

struct Session {
    std::string session_id;
    FeedbackContext context;
    std::optional<std::string> transcript;
    std::optional<FeedbackReport> report;
    std::optional<std::string> refinement_trace_ref;
    std::vector<std::string> trajectories;
    std::string created_at;

    bool operator==(const Session&) const = default;
};

std::vector<std::string> validate_session(const Session& session);

// Current UTC time as an RFC 3339 string with second precision.
std::string utc_now_rfc3339();

// Whitespace trimming shared by the parsers.
std::string_view trim(std::string_view text);

}  // namespace coach
