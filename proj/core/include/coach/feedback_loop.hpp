#pragma once

// Feedback generation agent: structured generation, rubric judging, and
// selective regeneration of failing components until every target criterion
// passes or the iteration limit is reached.

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"
#include "coach/gateway.hpp"
#include "coach/prompts.hpp"

namespace coach {

class GenerationError : public Error {
public:
    GenerationError(const std::string& what, std::string raw_text) : Error(what), raw_text_(std::move(raw_text)) {}
    const std::string& raw_text() const noexcept { return raw_text_; }

private:
    std::string raw_text_;
};

class JudgeError : public Error {
public:
    using Error::Error;
};

// Carries whatever the loop had completed when a generation, judge, or
// transport error interrupted it.
class RefinementError : public Error {
public:
    RefinementError(const std::string& what, RefinementTrace partial) : Error(what), partial_(std::move(partial)) {}
    const RefinementTrace& partial_trace() const noexcept { return partial_; }

private:
    RefinementTrace partial_;
};

struct ComponentPatch {
    ComponentKind component = ComponentKind::current_state;
    std::string new_text;
    std::vector<std::pair<RubricCriterion, std::string>> driven_by;
};

struct LoopOptions {
    int generation_parse_retries = 1;
    int judge_parse_retries = 2;
    GenerationParams generation = GenerationParams::for_generation();
    GenerationParams judging = GenerationParams::for_judging();
    PromptLibrary prompts = PromptLibrary::defaults();
    std::function<std::string()> clock = utc_now_rfc3339;
};

// Rubric wording shown to the judge.
std::string_view criterion_description(RubricCriterion criterion);

FeedbackReport generate_report(const FeedbackContext& ctx, ChatModel& model, const LoopOptions& options = {});

// judge_runs independent calls; per criterion the majority wins and ties
// fail. A failing criterion keeps the explanation of its first failing run.
JudgeVerdict judge_report(const FeedbackContext& ctx,
                          const FeedbackReport& report,
                          const std::set<RubricCriterion>& criteria,
                          ChatModel& judge,
                          int judge_runs = 1,
                          const LoopOptions& options = {});

// Rewrites only the components governed by the failing criteria. Every other
// component is copied byte-for-byte.
FeedbackReport regenerate_components(const FeedbackContext& ctx,
                                     const FeedbackReport& report,
                                     const std::map<RubricCriterion, std::string>& failing,
                                     ChatModel& model,
                                     const LoopOptions& options = {});

FeedbackReport apply_patches(const FeedbackReport& report, const std::vector<ComponentPatch>& patches);

RefinementTrace refine(const FeedbackContext& ctx,
                       const RefinementConfig& config,
                       ChatModel& generator,
                       ChatModel& judge,
                       const LoopOptions& options = {});

// One targeted round on the two correctness criteria.
RefinementConfig deployment_preset();

// Renders the five components in report order for prompts and logs.
std::string render_report(const FeedbackReport& report);

}  // namespace coach
