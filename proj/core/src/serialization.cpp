#include "coach/serialization.hpp"

#include <cmath>
#include <set>

#include "json_fields.hpp"

namespace coach {

using detail::Fields;

namespace {

template <typename Enum>
Enum enum_from(const Json& in, std::optional<Enum> (*parse)(std::string_view), const char* what) {
    if (!in.is_string()) throw ParseError(std::string(what) + ": expected string");
    auto v = parse(in.get<std::string>());
    if (!v) throw ParseError(std::string("unknown ") + what + ": " + in.get<std::string>());
    return *v;
}

void reject_violations(const std::string& type, const std::vector<std::string>& violations) {
    if (!violations.empty()) throw ParseError(type + ": " + violations.front());
}

}  // namespace

void to_json(Json& out, ComponentKind value) { out = std::string(to_string(value)); }
void from_json(const Json& in, ComponentKind& value) {
    value = enum_from(in, &component_from_string, "component");
}
void to_json(Json& out, RubricCriterion value) { out = std::string(to_string(value)); }
void from_json(const Json& in, RubricCriterion& value) {
    value = enum_from(in, &criterion_from_string, "criterion");
}
void to_json(Json& out, QuestionCategory value) { out = std::string(to_string(value)); }
void from_json(const Json& in, QuestionCategory& value) {
    value = enum_from(in, &category_from_string, "category");
}
void to_json(Json& out, QuestionTheme value) { out = std::string(to_string(value)); }
void from_json(const Json& in, QuestionTheme& value) { value = enum_from(in, &theme_from_string, "theme"); }

// --- FeedbackContext -------------------------------------------------------

void to_json(Json& out, const FeedbackContext& v) {
    out = Json{{"question_id", v.question_id},
               {"question_text", v.question_text},
               {"student_solution", v.student_solution},
               {"reference_solution", v.reference_solution},
               {"course_id", v.course_id}};
}

void from_json(const Json& in, FeedbackContext& v) {
    Fields f(in, "FeedbackContext");
    v.question_id = f.required<std::string>("question_id");
    v.question_text = f.required<std::string>("question_text");
    v.student_solution = f.optional<std::string>("student_solution").value_or("");
    v.reference_solution = f.required<std::string>("reference_solution");
    v.course_id = f.required<std::string>("course_id");
    f.finish();
    reject_violations("FeedbackContext", validate_context(v));
}

// --- FeedbackReport --------------------------------------------------------

void to_json(Json& out, const FeedbackReport& v) {
    Json components = Json::object();
    for (const auto& [kind, text] : v.components) components[std::string(to_string(kind))] = text;
    out = Json{{"components", components}, {"generated_at", v.generated_at}, {"origin_iteration", v.origin_iteration}};
}

void from_json(const Json& in, FeedbackReport& v) {
    Fields f(in, "FeedbackReport");
    const Json& components = f.raw("components");
    if (!components.is_object()) f.fail("components", "expected an object");
    v.components.clear();
    for (auto it = components.begin(); it != components.end(); ++it) {
        auto kind = component_from_string(it.key());
        if (!kind) f.fail("components", "unknown component: " + it.key());
        if (!it->is_string()) f.fail("components." + it.key(), "expected string");
        v.components[*kind] = it->get<std::string>();
    }
    v.generated_at = f.required<std::string>("generated_at");
    v.origin_iteration = f.required<int>("origin_iteration");
    f.finish();
    reject_violations("FeedbackReport", validate_report(v));
}

// --- JudgeVerdict ----------------------------------------------------------

void to_json(Json& out, const JudgeVerdict& v) {
    Json judgments = Json::object();
    Json explanations = Json::object();
    for (const auto& [c, verdict] : v.judgments) judgments[std::string(to_string(c))] = std::string(to_string(verdict));
    for (const auto& [c, text] : v.explanations) explanations[std::string(to_string(c))] = text;
    Json judged = Json::array();
    for (RubricCriterion c : v.judged_criteria) judged.push_back(std::string(to_string(c)));
    out = Json{{"judgments", judgments}, {"explanations", explanations}, {"judged_criteria", judged}};
}

void from_json(const Json& in, JudgeVerdict& v) {
    Fields f(in, "JudgeVerdict");
    v = JudgeVerdict{};
    const Json& judgments = f.raw("judgments");
    if (!judgments.is_object()) f.fail("judgments", "expected an object");
    for (auto it = judgments.begin(); it != judgments.end(); ++it) {
        auto c = criterion_from_string(it.key());
        if (!c) f.fail("judgments", "unknown criterion: " + it.key());
        auto verdict = it->is_string() ? verdict_from_string(it->get<std::string>()) : std::nullopt;
        if (!verdict) f.fail("judgments." + it.key(), "expected \"pass\" or \"fail\"");
        v.judgments[*c] = *verdict;
    }
    const Json& explanations = f.raw("explanations");
    if (!explanations.is_object()) f.fail("explanations", "expected an object");
    for (auto it = explanations.begin(); it != explanations.end(); ++it) {
        auto c = criterion_from_string(it.key());
        if (!c) f.fail("explanations", "unknown criterion: " + it.key());
        if (!it->is_string()) f.fail("explanations." + it.key(), "expected string");
        v.explanations[*c] = it->get<std::string>();
    }
    for (const auto& name : f.required<std::vector<std::string>>("judged_criteria")) {
        auto c = criterion_from_string(name);
        if (!c) f.fail("judged_criteria", "unknown criterion: " + name);
        v.judged_criteria.insert(*c);
    }
    f.finish();
    reject_violations("JudgeVerdict", validate_verdict(v));
}

// --- RefinementConfig / trace ----------------------------------------------

void to_json(Json& out, const RefinementConfig& v) {
    Json targets = Json::array();
    for (RubricCriterion c : v.target_criteria) targets.push_back(std::string(to_string(c)));
    out = Json{{"max_iterations", v.max_iterations}, {"target_criteria", targets}, {"judge_runs", v.judge_runs}};
}

void from_json(const Json& in, RefinementConfig& v) {
    Fields f(in, "RefinementConfig");
    RefinementConfig defaults;
    v.max_iterations = f.optional<int>("max_iterations").value_or(defaults.max_iterations);
    if (auto names = f.optional<std::vector<std::string>>("target_criteria")) {
        v.target_criteria.clear();
        for (const auto& name : *names) {
            auto c = criterion_from_string(name);
            if (!c) f.fail("target_criteria", "unknown criterion: " + name);
            v.target_criteria.insert(*c);
        }
    } else {
        v.target_criteria = defaults.target_criteria;
    }
    v.judge_runs = f.optional<int>("judge_runs").value_or(defaults.judge_runs);
    f.finish();
    reject_violations("RefinementConfig", validate_config(v));
}

void to_json(Json& out, const RefinementIteration& v) { out = Json{{"report", v.report}, {"verdict", v.verdict}}; }

void from_json(const Json& in, RefinementIteration& v) {
    Fields f(in, "RefinementIteration");
    v.report = f.required<FeedbackReport>("report");
    v.verdict = f.required<JudgeVerdict>("verdict");
    f.finish();
}

void to_json(Json& out, const RefinementTrace& v) {
    out = Json{{"context_ref", v.context_ref},
               {"iterations", v.iterations},
               {"termination", std::string(to_string(v.termination))},
               {"config_snapshot", v.config_snapshot}};
}

void from_json(const Json& in, RefinementTrace& v) {
    Fields f(in, "RefinementTrace");
    v.context_ref = f.required<std::string>("context_ref");
    v.iterations = f.required<std::vector<RefinementIteration>>("iterations");
    const auto termination = f.required<std::string>("termination");
    if (termination == "all_pass") {
        v.termination = RefinementTermination::all_pass;
    } else if (termination == "iteration_limit") {
        v.termination = RefinementTermination::iteration_limit;
    } else {
        f.fail("termination", "unknown value: " + termination);
    }
    v.config_snapshot = f.required<RefinementConfig>("config_snapshot");
    f.finish();
    reject_violations("RefinementTrace", validate_trace(v));
}

// --- Tool calls and trajectories -------------------------------------------

void to_json(Json& out, const ToolCall& v) {
    out = Json{{"tool_name", v.tool_name}, {"arguments", v.arguments}, {"raw_text", v.raw_text}};
}

void from_json(const Json& in, ToolCall& v) {
    Fields f(in, "ToolCall");
    v.tool_name = f.required<std::string>("tool_name");
    if (v.tool_name.empty()) f.fail("tool_name", "must be non-empty");
    v.arguments = f.raw("arguments");
    if (!v.arguments.is_object()) f.fail("arguments", "must be an object");
    v.raw_text = f.required<std::string>("raw_text");
    f.finish();
}

void to_json(Json& out, const Observation& v) {
    out = Json{{"kind", std::string(to_string(v.kind))}, {"payload", v.payload}, {"tool_name", v.tool_name}};
}

void from_json(const Json& in, Observation& v) {
    Fields f(in, "Observation");
    const auto kind = f.required<std::string>("kind");
    if (kind == "success") {
        v.kind = ObservationKind::success;
    } else if (kind == "error") {
        v.kind = ObservationKind::error;
    } else {
        f.fail("kind", "unknown value: " + kind);
    }
    v.payload = f.required<std::string>("payload");
    v.tool_name = f.required<std::string>("tool_name");
    f.finish();
    if (v.kind == ObservationKind::error && v.payload.empty()) f.fail("payload", "empty error payload");
}

void to_json(Json& out, const TrajectoryStep& v) {
    Json action;
    if (const auto* call = std::get_if<ToolCall>(&v.action)) {
        action = Json{{"tool_call", *call}};
    } else {
        action = Json{{"final_answer", std::get<FinalAnswer>(v.action).text}};
    }
    out = Json{{"index", v.index},
               {"reasoning_summary", v.reasoning_summary},
               {"action", action},
               {"observation", v.observation ? Json(*v.observation) : Json(nullptr)}};
}

void from_json(const Json& in, TrajectoryStep& v) {
    Fields f(in, "TrajectoryStep");
    v.index = f.required<int>("index");
    v.reasoning_summary = f.required<std::string>("reasoning_summary");
    const Json& action = f.raw("action");
    if (!action.is_object() || action.size() != 1) f.fail("action", "expected exactly one of tool_call, final_answer");
    if (action.contains("tool_call")) {
        v.action = action["tool_call"].get<ToolCall>();
    } else if (action.contains("final_answer")) {
        if (!action["final_answer"].is_string()) f.fail("action.final_answer", "expected string");
        v.action = FinalAnswer{action["final_answer"].get<std::string>()};
    } else {
        f.fail("action", "expected exactly one of tool_call, final_answer");
    }
    v.observation = f.optional<Observation>("observation");
    f.finish();
    if (v.is_final() && v.observation) f.fail("observation", "final_answer step carries an observation");
    if (!v.is_final() && !v.observation) f.fail("observation", "tool_call step requires an observation");
}

void to_json(Json& out, const Trajectory& v) {
    out = Json{{"query", v.query},
               {"report_ref", v.report_ref},
               {"steps", v.steps},
               {"final_answer", v.final_answer},
               {"termination", std::string(to_string(v.termination))},
               {"error_count", v.error_count}};
}

void from_json(const Json& in, Trajectory& v) {
    Fields f(in, "Trajectory");
    v.query = f.required<std::string>("query");
    v.report_ref = f.required<std::string>("report_ref");
    v.steps = f.required<std::vector<TrajectoryStep>>("steps");
    v.final_answer = f.required<std::string>("final_answer");
    const auto termination = f.required<std::string>("termination");
    if (termination == "answered") {
        v.termination = TrajectoryTermination::answered;
    } else if (termination == "step_limit_forced") {
        v.termination = TrajectoryTermination::step_limit_forced;
    } else {
        f.fail("termination", "unknown value: " + termination);
    }
    v.error_count = f.required<int>("error_count");
    f.finish();
    reject_violations("Trajectory", validate_trajectory(v));
}

void to_json(Json& out, const InteractiveVerdict& v) {
    Json judgments = Json::object();
    for (const auto& [c, verdict] : v.judgments) judgments[std::string(to_string(c))] = std::string(to_string(verdict));
    out = Json{{"judgments", judgments}};
}

void from_json(const Json& in, InteractiveVerdict& v) {
    Fields f(in, "InteractiveVerdict");
    const Json& judgments = f.raw("judgments");
    if (!judgments.is_object()) f.fail("judgments", "expected an object");
    v.judgments.clear();
    for (auto it = judgments.begin(); it != judgments.end(); ++it) {
        auto c = interactive_criterion_from_string(it.key());
        if (!c) f.fail("judgments", "unknown criterion: " + it.key());
        auto verdict = it->is_string() ? verdict_from_string(it->get<std::string>()) : std::nullopt;
        if (!verdict) f.fail("judgments." + it.key(), "expected \"pass\" or \"fail\"");
        v.judgments[*c] = *verdict;
    }
    f.finish();
    for (InteractiveCriterion c : kAllInteractiveCriteria) {
        if (v.judgments.count(c) == 0) f.fail("judgments", "missing criterion: " + std::string(to_string(c)));
    }
}

// --- Retrieval -------------------------------------------------------------

void to_json(Json& out, const CharSpan& v) { out = Json::array({v.start, v.end}); }

void from_json(const Json& in, CharSpan& v) {
    if (!in.is_array() || in.size() != 2 || !in[0].is_number_unsigned() || !in[1].is_number_unsigned()) {
        throw ParseError("CharSpan: expected [start, end]");
    }
    v.start = in[0].get<std::size_t>();
    v.end = in[1].get<std::size_t>();
    if (v.start >= v.end) throw ParseError("CharSpan: start must be < end");
}

void to_json(Json& out, const Chunk& v) {
    out = Json{{"chunk_id", v.chunk_id},
               {"doc_id", v.doc_id},
               {"heading_path", v.heading_path},
               {"text", v.text},
               {"char_span", v.char_span}};
}

void from_json(const Json& in, Chunk& v) {
    Fields f(in, "Chunk");
    v.chunk_id = f.required<std::string>("chunk_id");
    v.doc_id = f.required<std::string>("doc_id");
    v.heading_path = f.required<std::vector<std::string>>("heading_path");
    v.text = f.required<std::string>("text");
    v.char_span = f.required<CharSpan>("char_span");
    f.finish();
    if (v.text.empty()) f.fail("text", "must be non-empty");
}

void to_json(Json& out, const LexicalStats& v) {
    out = Json{{"document_frequency", v.document_frequency},
               {"term_frequencies", v.term_frequencies},
               {"chunk_lengths", v.chunk_lengths},
               {"average_length", v.average_length}};
}

void from_json(const Json& in, LexicalStats& v) {
    Fields f(in, "LexicalStats");
    v.document_frequency = f.required<std::map<std::string, int>>("document_frequency");
    v.term_frequencies = f.required<std::vector<std::map<std::string, int>>>("term_frequencies");
    v.chunk_lengths = f.required<std::vector<int>>("chunk_lengths");
    v.average_length = f.required<double>("average_length");
    f.finish();
    if (v.term_frequencies.size() != v.chunk_lengths.size()) f.invalid("term_frequencies and chunk_lengths differ in size");
}

void to_json(Json& out, const DocumentInfo& v) {
    out = Json{{"doc_id", v.doc_id}, {"kind", v.kind}, {"topic", v.topic}};
}

void from_json(const Json& in, DocumentInfo& v) {
    Fields f(in, "DocumentInfo");
    v.doc_id = f.required<std::string>("doc_id");
    v.kind = f.optional<std::string>("kind").value_or("");
    v.topic = f.optional<std::string>("topic").value_or("");
    f.finish();
}

void to_json(Json& out, const CorpusIndex& v) {
    out = Json{{"documents", v.documents},
               {"chunks", v.chunks},
               {"lexical_stats", v.lexical_stats},
               {"vectors", v.vectors},
               {"embedder_id", v.embedder_id},
               {"dimension", v.dimension}};
}

void from_json(const Json& in, CorpusIndex& v) {
    Fields f(in, "CorpusIndex");
    v.documents = f.required<std::vector<DocumentInfo>>("documents");
    v.chunks = f.required<std::vector<Chunk>>("chunks");
    v.lexical_stats = f.required<LexicalStats>("lexical_stats");
    v.vectors = f.required<std::map<std::string, std::vector<double>>>("vectors");
    v.embedder_id = f.required<std::string>("embedder_id");
    v.dimension = f.required<int>("dimension");
    f.finish();
    if (v.lexical_stats.chunk_lengths.size() != v.chunks.size()) f.invalid("lexical_stats does not match chunks");
    if (v.dimension > 0) {
        if (v.vectors.size() != v.chunks.size()) f.fail("vectors", "every chunk needs exactly one vector");
        for (const auto& chunk : v.chunks) {
            auto it = v.vectors.find(chunk.chunk_id);
            if (it == v.vectors.end()) f.fail("vectors", "no vector for chunk " + chunk.chunk_id);
            if (static_cast<int>(it->second.size()) != v.dimension) f.fail("vectors", "dimension mismatch for " + chunk.chunk_id);
            double norm = 0.0;
            for (double x : it->second) norm += x * x;
            if (std::abs(std::sqrt(norm) - 1.0) > 1e-6) f.fail("vectors", "non-unit vector for " + chunk.chunk_id);
        }
    } else if (!v.vectors.empty()) {
        f.fail("vectors", "vectors present with dimension 0");
    }
}

// --- Tool resources --------------------------------------------------------

void to_json(Json& out, const TopicGraph& v) {
    Json edges = Json::array();
    for (const auto& [pre, dep] : v.edges) edges.push_back(Json::array({pre, dep}));
    out = Json{{"topics", v.topics}, {"edges", edges}};
}

void from_json(const Json& in, TopicGraph& v) {
    Fields f(in, "TopicGraph");
    v.topics = f.required<std::set<std::string>>("topics");
    v.edges.clear();
    const Json& edges = f.raw("edges");
    if (!edges.is_array()) f.fail("edges", "expected an array");
    for (const auto& e : edges) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
            f.fail("edges", "each edge must be [prerequisite, dependent]");
        }
        v.edges.emplace(e[0].get<std::string>(), e[1].get<std::string>());
    }
    f.finish();
    reject_violations("TopicGraph", validate_graph(v));
}

void to_json(Json& out, const BehaviourDescriptor& v) {
    out = Json{{"dimension", std::string(to_string(v.dimension))},
               {"descriptor", v.descriptor},
               {"explanation_template", v.explanation_template}};
}

void from_json(const Json& in, BehaviourDescriptor& v) {
    Fields f(in, "BehaviourDescriptor");
    const auto name = f.required<std::string>("dimension");
    auto dim = behaviour_from_string(name);
    if (!dim) f.fail("dimension", "unknown dimension: " + name);
    v.dimension = *dim;
    v.descriptor = f.required<std::string>("descriptor");
    v.explanation_template = f.required<std::string>("explanation_template");
    f.finish();
}

void to_json(Json& out, const SteeringRecord& v) {
    out = Json{{"student_id", v.student_id},
               {"component", v.component},
               {"highlighted", v.highlighted},
               {"discussed", v.discussed}};
}

void from_json(const Json& in, SteeringRecord& v) {
    Fields f(in, "SteeringRecord");
    v.student_id = f.required<std::string>("student_id");
    v.component = f.required<std::string>("component");
    v.highlighted = f.required<bool>("highlighted");
    v.discussed = f.required<bool>("discussed");
    f.finish();
}

// --- Session ---------------------------------------------------------------

void to_json(Json& out, const Session& v) {
    out = Json{{"session_id", v.session_id},
               {"context", v.context},
               {"transcript", v.transcript ? Json(*v.transcript) : Json(nullptr)},
               {"report", v.report ? Json(*v.report) : Json(nullptr)},
               {"refinement_trace_ref", v.refinement_trace_ref ? Json(*v.refinement_trace_ref) : Json(nullptr)},
               {"trajectories", v.trajectories},
               {"created_at", v.created_at}};
}

void from_json(const Json& in, Session& v) {
    Fields f(in, "Session");
    v.session_id = f.required<std::string>("session_id");
    v.context = f.required<FeedbackContext>("context");
    v.transcript = f.optional<std::string>("transcript");
    v.report = f.optional<FeedbackReport>("report");
    v.refinement_trace_ref = f.optional<std::string>("refinement_trace_ref");
    v.trajectories = f.required<std::vector<std::string>>("trajectories");
    v.created_at = f.required<std::string>("created_at");
    f.finish();
    reject_violations("Session", validate_session(v));
}

}  // namespace coach
