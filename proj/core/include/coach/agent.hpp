#pragma once

// Interactive feedback agent: reason, act (tool call or answer), observe,
// repeat. Every step and observation is appended to an append-only
// transcript that is also the source of the exported training traces.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"
#include "coach/gateway.hpp"
#include "coach/prompts.hpp"
#include "coach/toolbox.hpp"

namespace coach {

struct AgentLimits {
    int max_steps = 6;
    int max_consecutive_parse_errors = 2;
};

struct QaPair {
    std::string question;
    std::string answer;

    bool operator==(const QaPair&) const = default;
};

// Earlier questions in the same session that are replayed into the context.
inline constexpr std::size_t kHistoryPairs = 3;

// Tool name recorded for a turn that could not be parsed into an action.
inline constexpr std::string_view kUnparsedAction = "unparsed_action";

struct AgentOptions {
    GenerationParams generation = GenerationParams::for_generation();
    GenerationParams judging = GenerationParams::for_judging();
    int judge_parse_retries = 2;
    PromptLibrary prompts = PromptLibrary::defaults();
};

class TrajectoryError : public Error {
public:
    TrajectoryError(const std::string& what, Trajectory partial) : Error(what), partial_(std::move(partial)) {}
    const Trajectory& partial_trajectory() const noexcept { return partial_; }

private:
    Trajectory partial_;
};

class ExportError : public Error {
public:
    using Error::Error;
};

using StepCallback = std::function<void(const TrajectoryStep&)>;

// The opening [system, user] pair. Only the last kHistoryPairs of history
// are included.
std::vector<ChatMessage> initial_context(std::string_view query,
                                         const FeedbackReport& report,
                                         const std::string& tool_advertisement,
                                         const std::vector<QaPair>& history,
                                         const PromptLibrary& prompts);

// The assistant message a step contributes to the transcript. Reasoning is
// prefixed in <think> tags only when requested (training targets).
std::string render_step_action(const TrajectoryStep& step, bool with_reasoning);

// The user message carrying a step's observation back to the model.
std::string render_observation(const Observation& observation);

Trajectory run_trajectory(std::string_view query,
                          const FeedbackReport& report,
                          const ToolRegistry& registry,
                          ChatModel& model,
                          const AgentLimits& limits = {},
                          const AgentOptions& options = {},
                          const std::vector<QaPair>& history = {},
                          const StepCallback& on_step = {});

InteractiveVerdict judge_response(std::string_view query,
                                  const FeedbackReport& report,
                                  const Trajectory& trajectory,
                                  ChatModel& judge,
                                  const AgentOptions& options = {});

struct TraceSource {
    Trajectory trajectory;
    FeedbackReport report;
    std::vector<QaPair> history;
};

struct TrainingRecord {
    std::string stage;  // "A" or "B"
    std::vector<ChatMessage> messages;
    std::string target;

    bool operator==(const TrainingRecord&) const = default;
};

// Stage A: opening context -> first reasoning and action. Stage B: the
// whole transcript through the last observation -> the final answer.
std::vector<TrainingRecord> training_records(const TraceSource& source,
                                             const std::string& tool_advertisement,
                                             const PromptLibrary& prompts = PromptLibrary::defaults());

Json training_record_json(const TrainingRecord& record);
TrainingRecord training_record_from_json(const Json& doc);

// Writes JSON lines, two per trajectory. Returns the record count.
std::size_t export_training_traces(std::span<const TraceSource> sources,
                                   const std::filesystem::path& sink,
                                   const std::string& tool_advertisement,
                                   const PromptLibrary& prompts = PromptLibrary::defaults());

}  // namespace coach
