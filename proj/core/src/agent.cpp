#include "coach/agent.hpp"

#include <fstream>

#include "coach/feedback_loop.hpp"

namespace coach {

namespace {

constexpr std::string_view kForcedFallback =
    "I could not finish looking this up. Please ask the question again, perhaps more specifically.";

std::string render_history(const std::vector<QaPair>& history) {
    if (history.empty()) return "";
    std::string out = "\nEarlier questions in this conversation:\n";
    const std::size_t from = history.size() > kHistoryPairs ? history.size() - kHistoryPairs : 0;
    for (std::size_t i = from; i < history.size(); ++i) {
        out += "Q: " + history[i].question + "\nA: " + history[i].answer + "\n";
    }
    return out;
}

// Whatever is usable as an answer when the forced turn ignored the format.
std::string salvage_answer(const ModelTurn& turn, const ParsedAction& parsed) {
    std::string text = turn.text;
    if (const auto* call = std::get_if<ToolCall>(&parsed)) {
        const auto pos = text.find(call->raw_text);
        if (pos != std::string::npos) text.erase(pos, call->raw_text.size());
    }
    text = std::string(trim(text));
    return text.empty() ? std::string(kForcedFallback) : text;
}

}  // namespace

std::vector<ChatMessage> initial_context(std::string_view query,
                                         const FeedbackReport& report,
                                         const std::string& tool_advertisement,
                                         const std::vector<QaPair>& history,
                                         const PromptLibrary& prompts) {
    return {
        {Role::system, prompts.render(prompt_id::agent_system, {{"tools", tool_advertisement}})},
        {Role::user, prompts.render(prompt_id::agent_user, {{"report", render_report(report)},
                                                            {"history", render_history(history)},
                                                            {"question", std::string(query)}})},
    };
}

std::string render_step_action(const TrajectoryStep& step, bool with_reasoning) {
    std::string body;
    if (const auto* call = std::get_if<ToolCall>(&step.action)) {
        body = call->raw_text.empty() ? render_tool_call(call->tool_name, call->arguments) : call->raw_text;
    } else {
        body = render_final_answer(std::get<FinalAnswer>(step.action).text);
    }
    if (with_reasoning && !step.reasoning_summary.empty()) {
        return "<think>" + step.reasoning_summary + "</think>\n" + body;
    }
    return body;
}

std::string render_observation(const Observation& observation) {
    return "Observation from " + observation.tool_name + " (" + std::string(to_string(observation.kind)) + "):\n" +
           observation.payload;
}

Trajectory run_trajectory(std::string_view query,
                          const FeedbackReport& report,
                          const ToolRegistry& registry,
                          ChatModel& model,
                          const AgentLimits& limits,
                          const AgentOptions& options,
                          const std::vector<QaPair>& history,
                          const StepCallback& on_step) {
    if (registry.empty()) throw ValidationError("run_trajectory requires at least one registered tool");
    if (limits.max_steps < 1) throw ValidationError("max_steps must be >= 1");
    if (limits.max_consecutive_parse_errors < 1) throw ValidationError("max_consecutive_parse_errors must be >= 1");
    if (auto v = validate_report(report); !v.empty()) throw ValidationError("invalid report: " + v.front());

    Trajectory trajectory;
    trajectory.query = std::string(query);
    auto messages = initial_context(query, report, registry.advertisement(), history, options.prompts);
    const auto names = registry.name_set();

    auto call_model = [&]() {
        try {
            return complete_chat(model, messages, options.generation);
        } catch (const Error& e) {
            throw TrajectoryError(std::string("model call failed: ") + e.what(), trajectory);
        }
    };
    auto record = [&](TrajectoryStep step) {
        messages.push_back({Role::assistant, render_step_action(step, false)});
        if (step.observation) messages.push_back({Role::user, render_observation(*step.observation)});
        trajectory.steps.push_back(std::move(step));
        if (on_step) on_step(trajectory.steps.back());
    };
    auto finish = [&](std::string answer, std::string reasoning, TrajectoryTermination termination) {
        TrajectoryStep step;
        step.index = static_cast<int>(trajectory.steps.size());
        step.reasoning_summary = std::move(reasoning);
        step.action = FinalAnswer{answer};
        trajectory.final_answer = std::move(answer);
        trajectory.termination = termination;
        record(std::move(step));
        return trajectory;
    };

    int consecutive_parse_errors = 0;
    while (static_cast<int>(trajectory.steps.size()) < limits.max_steps) {
        const ModelTurn turn = call_model();
        auto parsed = parse_tool_call(turn.text, names);
        if (auto* answer = std::get_if<FinalAnswer>(&parsed)) {
            return finish(std::move(answer->text), turn.reasoning_summary.value_or(""), TrajectoryTermination::answered);
        }

        TrajectoryStep step;
        step.index = static_cast<int>(trajectory.steps.size());
        step.reasoning_summary = turn.reasoning_summary.value_or("");
        if (auto* call = std::get_if<ToolCall>(&parsed)) {
            consecutive_parse_errors = 0;
            step.observation = registry.dispatch(*call);
            step.action = std::move(*call);
        } else {
            ++consecutive_parse_errors;
            const auto& failure = std::get<ParseFailure>(parsed);
            step.action = ToolCall{std::string(kUnparsedAction), Json::object(), turn.text};
            step.observation = Observation{ObservationKind::error,
                                           "could not parse your reply (" + failure.detail +
                                               "). Reply with exactly one tool_call block or a FINAL_ANSWER: line.",
                                           std::string(kUnparsedAction)};
        }
        if (step.observation->kind == ObservationKind::error) ++trajectory.error_count;
        record(std::move(step));
        if (consecutive_parse_errors > limits.max_consecutive_parse_errors) {
            throw TrajectoryError("too many consecutive unparseable replies", trajectory);
        }
    }

    messages.push_back({Role::user, options.prompts.get(prompt_id::agent_forced_answer)});
    const ModelTurn turn = call_model();
    const auto parsed = parse_tool_call(turn.text, names);
    std::string answer = std::holds_alternative<FinalAnswer>(parsed) ? std::get<FinalAnswer>(parsed).text
                                                                      : salvage_answer(turn, parsed);
    return finish(std::move(answer), turn.reasoning_summary.value_or(""), TrajectoryTermination::step_limit_forced);
}

InteractiveVerdict judge_response(std::string_view query,
                                  const FeedbackReport& report,
                                  const Trajectory& trajectory,
                                  ChatModel& judge,
                                  const AgentOptions& options) {
    if (auto v = validate_trajectory(trajectory); !v.empty()) throw ValidationError("invalid trajectory: " + v.front());

    std::string activity;
    int n = 0;
    for (const auto& step : trajectory.steps) {
        if (step.is_final()) continue;
        activity += std::to_string(++n) + ". " + render_step_action(step, false) + "\n";
        activity += "   -> " + std::string(to_string(step.observation->kind)) + ": " + step.observation->payload + "\n";
    }
    if (activity.empty()) activity = "(no tools were called)";

    std::vector<ChatMessage> messages{
        {Role::system, options.prompts.get(prompt_id::judge_system)},
        {Role::user, options.prompts.render(prompt_id::interactive_judge, {{"report", render_report(report)},
                                                                           {"question", std::string(query)},
                                                                           {"tool_activity", activity},
                                                                           {"answer", trajectory.final_answer}})},
    };
    std::string last_error;
    for (int attempt = 0; attempt <= options.judge_parse_retries; ++attempt) {
        const ModelTurn turn = complete_chat(judge, messages, options.judging);
        try {
            return parse_interactive_verdict(turn.text);
        } catch (const ParseError& e) {
            last_error = e.what();
            messages.push_back({Role::assistant, turn.text});
            messages.push_back({Role::user, "Your previous reply could not be used: " + last_error +
                                                ". Reply again with a single judge_verdict block."});
        }
    }
    throw JudgeError("no parseable interactive verdict: " + last_error);
}

std::vector<TrainingRecord> training_records(const TraceSource& source,
                                             const std::string& tool_advertisement,
                                             const PromptLibrary& prompts) {
    const auto& t = source.trajectory;
    if (auto v = validate_trajectory(t); !v.empty()) throw ValidationError("invalid trajectory: " + v.front());

    auto messages = initial_context(t.query, source.report, tool_advertisement, source.history, prompts);
    TrainingRecord a{"A", messages, render_step_action(t.steps.front(), true)};

    for (const auto& step : t.steps) {
        if (step.is_final()) break;
        messages.push_back({Role::assistant, render_step_action(step, false)});
        messages.push_back({Role::user, render_observation(*step.observation)});
    }
    if (t.termination == TrajectoryTermination::step_limit_forced) {
        messages.push_back({Role::user, prompts.get(prompt_id::agent_forced_answer)});
    }
    TrainingRecord b{"B", std::move(messages), render_step_action(t.steps.back(), true)};
    return {std::move(a), std::move(b)};
}

Json training_record_json(const TrainingRecord& record) {
    Json messages = Json::array();
    for (const auto& m : record.messages) {
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    return {{"stage", record.stage}, {"messages", std::move(messages)}, {"target", record.target}};
}

TrainingRecord training_record_from_json(const Json& doc) {
    try {
        TrainingRecord record;
        record.stage = doc.at("stage").get<std::string>();
        if (record.stage != "A" && record.stage != "B") throw ParseError("TrainingRecord.stage: must be A or B");
        for (const auto& m : doc.at("messages")) {
            auto role = role_from_string(m.at("role").get<std::string>());
            if (!role) throw ParseError("TrainingRecord.messages: unknown role");
            record.messages.push_back({*role, m.at("content").get<std::string>()});
        }
        record.target = doc.at("target").get<std::string>();
        return record;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("TrainingRecord: ") + e.what());
    }
}

std::size_t export_training_traces(std::span<const TraceSource> sources,
                                   const std::filesystem::path& sink,
                                   const std::string& tool_advertisement,
                                   const PromptLibrary& prompts) {
    std::vector<TrainingRecord> records;
    for (const auto& source : sources) {
        for (auto& r : training_records(source, tool_advertisement, prompts)) records.push_back(std::move(r));
    }
    std::ofstream out(sink, std::ios::binary | std::ios::trunc);
    if (!out) throw ExportError("cannot write training traces to " + sink.string());
    for (const auto& r : records) out << training_record_json(r).dump() << '\n';
    out.flush();
    if (!out) throw ExportError("failed while writing training traces to " + sink.string());
    return records.size();
}

}  // namespace coach
