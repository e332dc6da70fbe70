#include "coach/domain.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <functional>

namespace coach {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view name, const std::array<Enum, N>& values) {
    for (Enum v : values) {
        if (to_string(v) == name) return v;
    }
    return std::nullopt;
}

}  // namespace

std::string_view trim(std::string_view text) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    return text;
}

std::string utc_now_rfc3339() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> validate_context(const FeedbackContext& ctx) {
    std::vector<std::string> out;
    if (trim(ctx.question_text).empty()) out.emplace_back("empty question_text");
    if (trim(ctx.reference_solution).empty()) out.emplace_back("empty reference_solution");
    return out;
}

std::string_view to_string(ComponentKind kind) {
    switch (kind) {
        case ComponentKind::current_state: return "current_state";
        case ComponentKind::task_next_steps: return "task_next_steps";
        case ComponentKind::strategy_next_steps: return "strategy_next_steps";
        case ComponentKind::self_regulated_next_steps: return "self_regulated_next_steps";
        case ComponentKind::praise: return "praise";
    }
    return "unknown";
}

std::optional<ComponentKind> component_from_string(std::string_view name) {
    return lookup(name, kAllComponents);
}

const std::string& FeedbackReport::text(ComponentKind kind) const {
    static const std::string empty;
    auto it = components.find(kind);
    return it == components.end() ? empty : it->second;
}

std::vector<std::string> validate_report(const FeedbackReport& report) {
    std::vector<std::string> out;
    for (ComponentKind kind : kAllComponents) {
        auto it = report.components.find(kind);
        if (it == report.components.end()) {
            out.push_back("missing component: " + std::string(to_string(kind)));
        } else if (trim(it->second).empty()) {
            out.push_back("empty component: " + std::string(to_string(kind)));
        }
    }
    if (report.origin_iteration < 0) out.emplace_back("negative origin_iteration");
    return out;
}

std::string_view to_string(RubricCriterion criterion) {
    switch (criterion) {
        case RubricCriterion::clarity: return "clarity";
        case RubricCriterion::current_state_coverage: return "current_state_coverage";
        case RubricCriterion::current_state_correctness: return "current_state_correctness";
        case RubricCriterion::task_next_steps_coverage: return "task_next_steps_coverage";
        case RubricCriterion::task_next_steps_correctness: return "task_next_steps_correctness";
        case RubricCriterion::strategy_next_steps: return "strategy_next_steps";
        case RubricCriterion::self_regulated_next_steps: return "self_regulated_next_steps";
        case RubricCriterion::praise: return "praise";
    }
    return "unknown";
}

std::optional<RubricCriterion> criterion_from_string(std::string_view name) {
    return lookup(name, kAllCriteria);
}

std::vector<ComponentKind> governed_components(RubricCriterion criterion) {
    switch (criterion) {
        case RubricCriterion::clarity:
            return {kAllComponents.begin(), kAllComponents.end()};
        case RubricCriterion::current_state_coverage:
        case RubricCriterion::current_state_correctness:
            return {ComponentKind::current_state};
        case RubricCriterion::task_next_steps_coverage:
        case RubricCriterion::task_next_steps_correctness:
            return {ComponentKind::task_next_steps};
        case RubricCriterion::strategy_next_steps:
            return {ComponentKind::strategy_next_steps};
        case RubricCriterion::self_regulated_next_steps:
            return {ComponentKind::self_regulated_next_steps};
        case RubricCriterion::praise:
            return {ComponentKind::praise};
    }
    return {};
}

std::vector<ComponentKind> governed_components(const std::set<RubricCriterion>& criteria) {
    std::set<ComponentKind> seen;
    for (RubricCriterion c : criteria) {
        for (ComponentKind k : governed_components(c)) seen.insert(k);
    }
    return {seen.begin(), seen.end()};
}

std::string_view to_string(Verdict verdict) {
    return verdict == Verdict::pass ? "pass" : "fail";
}

std::optional<Verdict> verdict_from_string(std::string_view name) {
    if (name == "pass") return Verdict::pass;
    if (name == "fail") return Verdict::fail;
    return std::nullopt;
}

bool JudgeVerdict::all_pass() const {
    return std::all_of(judgments.begin(), judgments.end(),
                       [](const auto& kv) { return kv.second == Verdict::pass; });
}

std::set<RubricCriterion> JudgeVerdict::failing() const {
    std::set<RubricCriterion> out;
    for (const auto& [criterion, verdict] : judgments) {
        if (verdict == Verdict::fail) out.insert(criterion);
    }
    return out;
}

std::vector<std::string> validate_verdict(const JudgeVerdict& verdict) {
    std::vector<std::string> out;
    std::set<RubricCriterion> keys;
    for (const auto& [criterion, v] : verdict.judgments) {
        keys.insert(criterion);
        const bool has_explanation = verdict.explanations.count(criterion) > 0;
        if (v == Verdict::fail && !has_explanation) {
            out.push_back("missing explanation: " + std::string(to_string(criterion)));
        }
        if (v == Verdict::pass && has_explanation) {
            out.push_back("unexpected explanation: " + std::string(to_string(criterion)));
        }
    }
    for (const auto& [criterion, text] : verdict.explanations) {
        if (verdict.judgments.count(criterion) == 0) {
            out.push_back("explanation without judgment: " + std::string(to_string(criterion)));
        }
    }
    if (keys != verdict.judged_criteria) out.emplace_back("judged_criteria does not match judgments");
    return out;
}

std::vector<std::string> validate_config(const RefinementConfig& config) {
    std::vector<std::string> out;
    if (config.max_iterations < 1) out.emplace_back("max_iterations must be >= 1");
    if (config.target_criteria.empty()) out.emplace_back("target_criteria must be non-empty");
    if (config.judge_runs < 1) out.emplace_back("judge_runs must be >= 1");
    return out;
}

std::string_view to_string(RefinementTermination termination) {
    return termination == RefinementTermination::all_pass ? "all_pass" : "iteration_limit";
}

std::vector<std::string> validate_trace(const RefinementTrace& trace) {
    std::vector<std::string> out = validate_config(trace.config_snapshot);
    // A partial trace stored after a failed first round has no iterations.
    const auto n = static_cast<long>(trace.iterations.size());
    if (n > trace.config_snapshot.max_iterations + 1) out.emplace_back("trace exceeds max_iterations + 1");
    if (trace.termination == RefinementTermination::all_pass && n >= 1 &&
        !trace.iterations.back().verdict.all_pass()) {
        out.emplace_back("all_pass termination with failing final verdict");
    }
    for (const auto& it : trace.iterations) {
        for (auto& v : validate_report(it.report)) out.push_back(std::move(v));
        for (auto& v : validate_verdict(it.verdict)) out.push_back(std::move(v));
    }
    return out;
}

std::string_view to_string(ObservationKind kind) {
    return kind == ObservationKind::success ? "success" : "error";
}

std::string_view to_string(TrajectoryTermination termination) {
    return termination == TrajectoryTermination::answered ? "answered" : "step_limit_forced";
}

std::size_t Trajectory::tool_call_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const TrajectoryStep& s) { return !s.is_final(); }));
}

std::vector<std::string> validate_trajectory(const Trajectory& trajectory) {
    std::vector<std::string> out;
    if (trajectory.steps.empty()) {
        out.emplace_back("trajectory has no steps");
        return out;
    }
    int errors = 0;
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& step = trajectory.steps[i];
        const bool last = i + 1 == trajectory.steps.size();
        const std::string where = "steps[" + std::to_string(i) + "]";
        if (step.index != static_cast<int>(i)) out.push_back(where + ": index out of sequence");
        if (step.is_final()) {
            if (!last) out.push_back(where + ": final_answer on a non-terminal step");
            if (step.observation) out.push_back(where + ": final_answer step carries an observation");
        } else {
            if (last) out.push_back(where + ": terminal step is not a final_answer");
            if (!step.observation) {
                out.push_back(where + ": tool_call step without observation");
            } else if (step.observation->kind == ObservationKind::error) {
                ++errors;
                if (step.observation->payload.empty()) out.push_back(where + ": empty error payload");
            }
            if (std::get<ToolCall>(step.action).tool_name.empty()) out.push_back(where + ": empty tool_name");
        }
    }
    if (errors != trajectory.error_count) out.emplace_back("error_count does not match error observations");
    if (trajectory.steps.back().is_final() &&
        std::get<FinalAnswer>(trajectory.steps.back().action).text != trajectory.final_answer) {
        out.emplace_back("final_answer differs from terminal step");
    }
    return out;
}

std::string_view to_string(InteractiveCriterion criterion) {
    switch (criterion) {
        case InteractiveCriterion::relevance: return "relevance";
        case InteractiveCriterion::actionability: return "actionability";
        case InteractiveCriterion::tool_relevance: return "tool_relevance";
        case InteractiveCriterion::correctness: return "correctness";
    }
    return "unknown";
}

std::optional<InteractiveCriterion> interactive_criterion_from_string(std::string_view name) {
    return lookup(name, kAllInteractiveCriteria);
}

std::vector<std::string> validate_graph(const TopicGraph& graph) {
    std::vector<std::string> out;
    std::map<std::string, std::vector<std::string>> dependents;
    for (const auto& [pre, dep] : graph.edges) {
        if (graph.topics.count(pre) == 0) out.push_back("edge endpoint not a topic: " + pre);
        if (graph.topics.count(dep) == 0) out.push_back("edge endpoint not a topic: " + dep);
        dependents[pre].push_back(dep);
    }
    if (!out.empty()) return out;

    // Iterative three-colour DFS.
    enum class Mark { white, grey, black };
    std::map<std::string, Mark> mark;
    for (const auto& t : graph.topics) mark[t] = Mark::white;
    for (const auto& root : graph.topics) {
        if (mark[root] != Mark::white) continue;
        std::vector<std::pair<std::string, std::size_t>> stack{{root, 0}};
        mark[root] = Mark::grey;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            const auto& children = dependents[node];
            if (next < children.size()) {
                const std::string child = children[next++];
                if (mark[child] == Mark::grey) {
                    out.push_back("cycle through topic: " + child);
                    return out;
                }
                if (mark[child] == Mark::white) {
                    mark[child] = Mark::grey;
                    stack.emplace_back(child, 0);
                }
            } else {
                mark[node] = Mark::black;
                stack.pop_back();
            }
        }
    }
    return out;
}

std::string_view to_string(BehaviourDimension dimension) {
    switch (dimension) {
        case BehaviourDimension::effort: return "effort";
        case BehaviourDimension::consistency: return "consistency";
        case BehaviourDimension::proactivity: return "proactivity";
        case BehaviourDimension::assessment: return "assessment";
        case BehaviourDimension::regularity: return "regularity";
    }
    return "unknown";
}

std::optional<BehaviourDimension> behaviour_from_string(std::string_view name) {
    return lookup(name, kAllBehaviourDimensions);
}

std::string_view to_string(QuestionCategory category) {
    switch (category) {
        case QuestionCategory::task: return "task";
        case QuestionCategory::solution: return "solution";
        case QuestionCategory::feedback: return "feedback";
        case QuestionCategory::additional_feedback: return "additional_feedback";
        case QuestionCategory::off_topic: return "off_topic";
    }
    return "unknown";
}

std::optional<QuestionCategory> category_from_string(std::string_view name) {
    return lookup(name, kAllQuestionCategories);
}

std::string_view to_string(QuestionTheme theme) {
    switch (theme) {
        case QuestionTheme::understanding_task: return "understanding_task";
        case QuestionTheme::repairing: return "repairing";
        case QuestionTheme::reassurance: return "reassurance";
        case QuestionTheme::requesting_model_answer: return "requesting_model_answer";
        case QuestionTheme::interpreting: return "interpreting";
        case QuestionTheme::negotiating: return "negotiating";
        case QuestionTheme::elaboration: return "elaboration";
        case QuestionTheme::reassessment: return "reassessment";
        case QuestionTheme::generalisation: return "generalisation";
        case QuestionTheme::seeking_further_improvements: return "seeking_further_improvements";
        case QuestionTheme::usage_questions: return "usage_questions";
        case QuestionTheme::personal_support: return "personal_support";
        case QuestionTheme::greeting_thanking: return "greeting_thanking";
    }
    return "unknown";
}

std::optional<QuestionTheme> theme_from_string(std::string_view name) {
    return lookup(name, kAllQuestionThemes);
}

QuestionCategory category_of(QuestionTheme theme) {
    switch (theme) {
        case QuestionTheme::understanding_task:
            return QuestionCategory::task;
        case QuestionTheme::repairing:
        case QuestionTheme::reassurance:
        case QuestionTheme::requesting_model_answer:
            return QuestionCategory::solution;
        case QuestionTheme::interpreting:
        case QuestionTheme::negotiating:
        case QuestionTheme::elaboration:
        case QuestionTheme::reassessment:
            return QuestionCategory::feedback;
        case QuestionTheme::generalisation:
        case QuestionTheme::seeking_further_improvements:
            return QuestionCategory::additional_feedback;
        case QuestionTheme::usage_questions:
        case QuestionTheme::personal_support:
        case QuestionTheme::greeting_thanking:
            return QuestionCategory::off_topic;
    }
    return QuestionCategory::off_topic;
}

std::vector<std::string> validate_session(const Session& session) {
    std::vector<std::string> out;
    if (session.session_id.empty()) out.emplace_back("empty session_id");
    if (!session.trajectories.empty() && !session.report) {
        out.emplace_back("trajectories present without a report");
    }
    if (session.report) {
        for (auto& v : validate_report(*session.report)) out.push_back(std::move(v));
    }
    return out;
}

}  // namespace coach
