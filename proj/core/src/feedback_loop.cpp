#include "coach/feedback_loop.hpp"

#include <algorithm>

namespace coach {

namespace {

std::string sections_block(const std::vector<ComponentKind>& kinds) {
    std::string out;
    for (ComponentKind k : kinds) {
        if (!out.empty()) out += "\n";
        out += section_sentinel(k);
    }
    return out;
}

std::map<std::string, std::string> context_vars(const FeedbackContext& ctx) {
    return {{"question", ctx.question_text},
            {"reference_solution", ctx.reference_solution},
            {"student_solution", trim(ctx.student_solution).empty() ? "(blank submission)" : ctx.student_solution}};
}

ChatMessage reask_note(const std::string& detail, std::string_view expected) {
    return {Role::user,
            "Your previous reply could not be used: " + detail + ". Reply again in exactly the requested format (" +
                std::string(expected) + ")."};
}

// Asks for the given sections, re-asking up to the configured retry count
// when a section is missing or empty.
std::map<ComponentKind, std::string> request_sections(std::vector<ChatMessage> messages,
                                                      const std::vector<ComponentKind>& required,
                                                      ChatModel& model,
                                                      const LoopOptions& options) {
    std::string last_raw;
    std::string last_error;
    for (int attempt = 0; attempt <= options.generation_parse_retries; ++attempt) {
        const ModelTurn turn = complete_chat(model, messages, options.generation);
        last_raw = turn.text;
        try {
            return parse_feedback_sections(turn.text, required);
        } catch (const ParseError& e) {
            last_error = e.what();
            messages.push_back({Role::assistant, turn.text});
            messages.push_back(reask_note(last_error, "one [[section:<name>]] marker per section"));
        }
    }
    throw GenerationError("feedback generation failed: " + last_error, last_raw);
}

}  // namespace

std::string_view criterion_description(RubricCriterion criterion) {
    switch (criterion) {
        case RubricCriterion::clarity:
            return "the report is clear, well organised, and understandable by the student";
        case RubricCriterion::current_state_coverage:
            return "current_state addresses where the student stands relative to the task goal";
        case RubricCriterion::current_state_correctness:
            return "current_state is accurate and specific to this student's solution and task";
        case RubricCriterion::task_next_steps_coverage:
            return "task_next_steps gives next steps at the level of the task";
        case RubricCriterion::task_next_steps_correctness:
            return "task_next_steps is accurate and specific to this student's solution and task";
        case RubricCriterion::strategy_next_steps:
            return "strategy_next_steps suggests useful strategies or methods beyond this one solution";
        case RubricCriterion::self_regulated_next_steps:
            return "self_regulated_next_steps prompts the student to plan, monitor, or evaluate their own work";
        case RubricCriterion::praise:
            return "praise acknowledges specific effective aspects of the solution";
    }
    return "";
}

std::string render_report(const FeedbackReport& report) { return render_feedback_sections(report.components); }

FeedbackReport generate_report(const FeedbackContext& ctx, ChatModel& model, const LoopOptions& options) {
    auto violations = validate_context(ctx);
    if (!violations.empty()) throw ValidationError("invalid feedback context: " + violations.front());

    const std::vector<ComponentKind> all(kAllComponents.begin(), kAllComponents.end());
    auto vars = context_vars(ctx);
    vars["sections"] = sections_block(all);
    std::vector<ChatMessage> messages{
        {Role::system, options.prompts.get(prompt_id::feedback_system)},
        {Role::user, options.prompts.render(prompt_id::feedback_generation, vars)},
    };
    FeedbackReport report;
    report.components = request_sections(std::move(messages), all, model, options);
    report.generated_at = options.clock();
    report.origin_iteration = 0;
    return report;
}

JudgeVerdict judge_report(const FeedbackContext& ctx,
                          const FeedbackReport& report,
                          const std::set<RubricCriterion>& criteria,
                          ChatModel& judge,
                          int judge_runs,
                          const LoopOptions& options) {
    if (criteria.empty()) throw ValidationError("judge_report requires at least one criterion");
    if (judge_runs < 1) throw ValidationError("judge_runs must be >= 1");

    std::string criteria_text;
    Json example = Json::object();
    for (RubricCriterion c : criteria) {
        criteria_text += "- " + std::string(to_string(c)) + ": " + std::string(criterion_description(c)) + "\n";
        example[std::string(to_string(c))] = "pass";
    }
    criteria_text += "Use \"pass\" when a criterion is met, and {\"verdict\": \"fail\", \"explanation\": \"<deficiency>\"} when it is not.";

    auto vars = context_vars(ctx);
    vars["report"] = render_report(report);
    vars["criteria"] = criteria_text;
    vars["example"] = example.dump();
    const std::vector<ChatMessage> base{
        {Role::system, options.prompts.get(prompt_id::judge_system)},
        {Role::user, options.prompts.render(prompt_id::feedback_judge, vars)},
    };

    std::vector<JudgeVerdict> runs;
    std::string last_error;
    for (int run = 0; run < judge_runs; ++run) {
        auto messages = base;
        for (int attempt = 0; attempt <= options.judge_parse_retries; ++attempt) {
            const ModelTurn turn = complete_chat(judge, messages, options.judging);
            try {
                runs.push_back(parse_judge_verdict(turn.text, criteria));
                break;
            } catch (const ParseError& e) {
                last_error = e.what();
                messages.push_back({Role::assistant, turn.text});
                messages.push_back(reask_note(last_error, "a single judge_verdict block"));
            }
        }
    }
    if (runs.empty()) throw JudgeError("no parseable judge verdict: " + last_error);

    JudgeVerdict verdict;
    verdict.judged_criteria = criteria;
    for (RubricCriterion c : criteria) {
        int passes = 0;
        int fails = 0;
        const std::string* first_explanation = nullptr;
        for (const auto& r : runs) {
            if (r.judgments.at(c) == Verdict::pass) {
                ++passes;
            } else {
                ++fails;
                if (first_explanation == nullptr) first_explanation = &r.explanations.at(c);
            }
        }
        if (passes > fails) {
            verdict.judgments[c] = Verdict::pass;
        } else {
            verdict.judgments[c] = Verdict::fail;
            verdict.explanations[c] = *first_explanation;
        }
    }
    return verdict;
}

FeedbackReport apply_patches(const FeedbackReport& report, const std::vector<ComponentPatch>& patches) {
    FeedbackReport out = report;
    for (const auto& patch : patches) out.components[patch.component] = patch.new_text;
    return out;
}

FeedbackReport regenerate_components(const FeedbackContext& ctx,
                                     const FeedbackReport& report,
                                     const std::map<RubricCriterion, std::string>& failing,
                                     ChatModel& model,
                                     const LoopOptions& options) {
    if (failing.empty()) throw ValidationError("regenerate_components requires failing criteria");

    std::map<ComponentKind, std::vector<std::pair<RubricCriterion, std::string>>> drivers;
    for (const auto& [criterion, explanation] : failing) {
        for (ComponentKind k : governed_components(criterion)) drivers[k].emplace_back(criterion, explanation);
    }
    std::vector<ComponentKind> targets;
    std::string failing_text;
    for (const auto& [kind, reasons] : drivers) {
        targets.push_back(kind);
        failing_text += section_sentinel(kind) + "\n" + report.text(kind) + "\nProblems:\n";
        for (const auto& [criterion, explanation] : reasons) {
            failing_text += "- " + std::string(to_string(criterion)) + ": " + explanation + "\n";
        }
        failing_text += "\n";
    }

    auto vars = context_vars(ctx);
    vars["failing_components"] = std::string(trim(failing_text));
    vars["sections"] = sections_block(targets);
    std::vector<ChatMessage> messages{
        {Role::system, options.prompts.get(prompt_id::feedback_system)},
        {Role::user, options.prompts.render(prompt_id::feedback_regeneration, vars)},
    };
    auto sections = request_sections(std::move(messages), targets, model, options);

    std::vector<ComponentPatch> patches;
    for (ComponentKind kind : targets) patches.push_back({kind, sections.at(kind), drivers.at(kind)});
    FeedbackReport out = apply_patches(report, patches);
    out.generated_at = options.clock();
    out.origin_iteration = report.origin_iteration + 1;
    return out;
}

RefinementTrace refine(const FeedbackContext& ctx,
                       const RefinementConfig& config,
                       ChatModel& generator,
                       ChatModel& judge,
                       const LoopOptions& options) {
    auto violations = validate_config(config);
    if (!violations.empty()) throw ValidationError("invalid refinement config: " + violations.front());

    RefinementTrace trace;
    trace.context_ref = ctx.question_id;
    trace.config_snapshot = config;
    trace.termination = RefinementTermination::iteration_limit;

    // Criteria that have passed at some iteration are never sent back for
    // regeneration, even if a later judgment flips them.
    std::set<RubricCriterion> settled;
    auto settle = [&settled](const JudgeVerdict& v) {
        for (const auto& [c, verdict] : v.judgments) {
            if (verdict == Verdict::pass) settled.insert(c);
        }
    };

    try {
        FeedbackReport report = generate_report(ctx, generator, options);
        JudgeVerdict verdict = judge_report(ctx, report, config.target_criteria, judge, config.judge_runs, options);
        settle(verdict);
        trace.iterations.push_back({std::move(report), std::move(verdict)});

        int used = 0;
        while (!trace.iterations.back().verdict.all_pass() && used < config.max_iterations) {
            const auto& last = trace.iterations.back();
            std::map<RubricCriterion, std::string> failing;
            for (RubricCriterion c : last.verdict.failing()) {
                if (settled.count(c) == 0) failing.emplace(c, last.verdict.explanations.at(c));
            }
            // With nothing left to rewrite the same report is judged again.
            FeedbackReport next = failing.empty() ? last.report
                                                  : regenerate_components(ctx, last.report, failing, generator, options);
            JudgeVerdict next_verdict =
                judge_report(ctx, next, config.target_criteria, judge, config.judge_runs, options);
            settle(next_verdict);
            trace.iterations.push_back({std::move(next), std::move(next_verdict)});
            ++used;
        }
    } catch (const Error& e) {
        throw RefinementError(e.what(), trace);
    }

    if (trace.iterations.back().verdict.all_pass()) trace.termination = RefinementTermination::all_pass;
    return trace;
}

RefinementConfig deployment_preset() {
    RefinementConfig config;
    config.max_iterations = 1;
    config.target_criteria = {RubricCriterion::current_state_correctness, RubricCriterion::task_next_steps_correctness};
    config.judge_runs = 1;
    return config;
}

}  // namespace coach
