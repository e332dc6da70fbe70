#include <gtest/gtest.h>

#include "coach/feedback_loop.hpp"
#include "test_support.hpp"

using namespace coach;
using namespace coach::testing;

namespace {

using RC = RubricCriterion;

LoopOptions fixed_clock() {
    LoopOptions o;
    o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    return o;
}

std::string only_section(ComponentKind kind, const std::string& text) {
    return render_feedback_sections({{kind, text}});
}

const std::string& last_user_message(const std::vector<ChatMessage>& call) { return call.back().content; }

}  // namespace

TEST(FeedbackLoop, AllPassOnFirstJudgment) {
    ScriptedModel gen({any(sections_reply(sample_components()))});
    ScriptedModel judge({any(verdict_reply(all_criteria()))});
    const auto trace = refine(sample_context(), RefinementConfig{}, gen, judge, fixed_clock());
    ASSERT_EQ(trace.iterations.size(), 1u);
    EXPECT_EQ(trace.termination, RefinementTermination::all_pass);
    EXPECT_EQ(trace.iterations[0].report.components, sample_components());
    EXPECT_EQ(trace.context_ref, "q-induction-1");
    EXPECT_EQ(gen.call_count(), 1u);
    EXPECT_EQ(judge.call_count(), 1u);
    EXPECT_TRUE(validate_trace(trace).empty());
}

TEST(FeedbackLoop, OnlyFailingComponentIsRewritten) {
    ScriptedModel gen({on_call(1, sections_reply(sample_components())),
                       on_call(2, only_section(ComponentKind::praise, "Your base case cites n = 1 precisely."))});
    ScriptedModel judge({on_call(1, verdict_reply(all_criteria(), {RC::praise})), any(verdict_reply(all_criteria()))});
    const auto trace = refine(sample_context(), RefinementConfig{}, gen, judge, fixed_clock());

    ASSERT_EQ(trace.iterations.size(), 2u);
    EXPECT_EQ(trace.termination, RefinementTermination::all_pass);
    const auto& before = trace.iterations[0].report;
    const auto& after = trace.iterations[1].report;
    EXPECT_EQ(after.origin_iteration, 1);
    EXPECT_EQ(after.text(ComponentKind::praise), "Your base case cites n = 1 precisely.");
    for (ComponentKind k : kAllComponents) {
        if (k != ComponentKind::praise) EXPECT_EQ(after.text(k), before.text(k)) << to_string(k);
    }

    const auto regen = last_user_message(gen.calls()[1]);
    EXPECT_NE(regen.find("deficient: praise"), std::string::npos);
    EXPECT_NE(regen.find("[[section:praise]]"), std::string::npos);
    EXPECT_EQ(regen.find("[[section:current_state]]"), std::string::npos);
}

TEST(FeedbackLoop, ClarityFailureRewritesEveryComponent) {
    ScriptedModel gen({on_call(1, sections_reply(sample_components("v0"))),
                       on_call(2, sections_reply(sample_components("v1")))});
    ScriptedModel judge({on_call(1, verdict_reply(all_criteria(), {RC::clarity})), any(verdict_reply(all_criteria()))});
    const auto trace = refine(sample_context(), RefinementConfig{}, gen, judge, fixed_clock());
    ASSERT_EQ(trace.iterations.size(), 2u);
    EXPECT_EQ(trace.iterations[1].report.components, sample_components("v1"));
}

TEST(FeedbackLoop, IterationLimitBoundsRegenerations) {
    ScriptedModel gen({on_call(1, sections_reply(sample_components())),
                       any(only_section(ComponentKind::praise, "Still generic praise."))});
    ScriptedModel judge({any(verdict_reply(all_criteria(), {RC::praise}))});
    RefinementConfig config;
    config.max_iterations = 2;
    const auto trace = refine(sample_context(), config, gen, judge, fixed_clock());
    EXPECT_EQ(trace.iterations.size(), 3u);
    EXPECT_EQ(trace.termination, RefinementTermination::iteration_limit);
    EXPECT_EQ(gen.call_count(), 3u);
    EXPECT_EQ(judge.call_count(), 3u);
    EXPECT_EQ(trace.config_snapshot, config);
}

TEST(FeedbackLoop, SettledCriterionIsNotRegenerated) {
    // Clarity passes first, then flips to fail once praise is fixed. It stays
    // settled, so the same report is judged again without a rewrite.
    ScriptedModel gen({on_call(1, sections_reply(sample_components())),
                       on_call(2, only_section(ComponentKind::praise, "Specific praise."))});
    ScriptedModel judge({on_call(1, verdict_reply(all_criteria(), {RC::praise})),
                         on_call(2, verdict_reply(all_criteria(), {RC::clarity})),
                         on_call(3, verdict_reply(all_criteria()))});
    const auto trace = refine(sample_context(), RefinementConfig{}, gen, judge, fixed_clock());
    ASSERT_EQ(trace.iterations.size(), 3u);
    EXPECT_EQ(trace.termination, RefinementTermination::all_pass);
    EXPECT_EQ(gen.call_count(), 2u);
    EXPECT_EQ(trace.iterations[2].report, trace.iterations[1].report);
}

TEST(FeedbackLoop, DeploymentPresetJudgesOnlyCorrectness) {
    const auto preset = deployment_preset();
    EXPECT_EQ(preset.max_iterations, 1);
    EXPECT_EQ(preset.target_criteria, (std::set<RC>{RC::current_state_correctness, RC::task_next_steps_correctness}));

    ScriptedModel gen({any(sections_reply(sample_components()))});
    ScriptedModel judge({any(verdict_reply(preset.target_criteria))});
    const auto trace = refine(sample_context(), preset, gen, judge, fixed_clock());
    EXPECT_EQ(trace.iterations[0].verdict.judged_criteria, preset.target_criteria);
    const auto prompt = last_user_message(judge.calls()[0]);
    EXPECT_NE(prompt.find("current_state_correctness"), std::string::npos);
    EXPECT_EQ(prompt.find("- praise:"), std::string::npos);
}

TEST(FeedbackLoop, BlankSubmissionIsAccepted) {
    auto ctx = sample_context();
    ctx.student_solution = "";
    ScriptedModel gen({any(sections_reply(sample_components()))});
    const auto report = generate_report(ctx, gen, fixed_clock());
    EXPECT_TRUE(validate_report(report).empty());
    EXPECT_NE(last_user_message(gen.calls()[0]).find("(blank submission)"), std::string::npos);
}

TEST(FeedbackLoop, InvalidConfigIsRejected) {
    ScriptedModel gen({});
    ScriptedModel judge({});
    RefinementConfig config;
    config.target_criteria.clear();
    EXPECT_THROW(refine(sample_context(), config, gen, judge), ValidationError);
    EXPECT_EQ(gen.call_count(), 0u);
}

// --- Judging ---------------------------------------------------------------

TEST(Judging, MajorityOfThreeRuns) {
    const std::set<RC> criteria{RC::praise, RC::clarity};
    ScriptedModel judge({on_call(1, verdict_reply(criteria)), on_call(2, verdict_reply(criteria, {RC::praise})),
                         on_call(3, verdict_reply(criteria, {RC::praise, RC::clarity}))});
    const auto v = judge_report(sample_context(), sample_report(), criteria, judge, 3, fixed_clock());
    EXPECT_EQ(v.judgments.at(RC::praise), Verdict::fail);
    EXPECT_EQ(v.judgments.at(RC::clarity), Verdict::pass);
    EXPECT_EQ(v.explanations.at(RC::praise), "deficient: praise");
    EXPECT_TRUE(validate_verdict(v).empty());
}

TEST(Judging, TieFails) {
    const std::set<RC> criteria{RC::praise};
    ScriptedModel judge({on_call(1, verdict_reply(criteria)), on_call(2, verdict_reply(criteria, {RC::praise}))});
    const auto v = judge_report(sample_context(), sample_report(), criteria, judge, 2, fixed_clock());
    EXPECT_EQ(v.judgments.at(RC::praise), Verdict::fail);
}

TEST(Judging, MalformedReplyIsReasked) {
    const std::set<RC> criteria{RC::praise};
    ScriptedModel judge({on_call(1, "looks good to me"), on_call(2, "```judge_verdict\n{\"praise\":\"fail\"}\n```"),
                         on_call(3, verdict_reply(criteria))});
    const auto v = judge_report(sample_context(), sample_report(), criteria, judge, 1, fixed_clock());
    EXPECT_TRUE(v.all_pass());
    const auto calls = judge.calls();
    ASSERT_EQ(calls.size(), 3u);
    EXPECT_NE(last_user_message(calls[2]).find("missing explanation: praise"), std::string::npos);
}

TEST(Judging, PersistentlyMalformedReplyIsJudgeError) {
    ScriptedModel judge({any("no verdict here")});
    EXPECT_THROW(judge_report(sample_context(), sample_report(), {RC::praise}, judge, 1, fixed_clock()), JudgeError);
    EXPECT_EQ(judge.call_count(), 3u);
}

// --- Generation failures ---------------------------------------------------

TEST(Generation, MissingSectionIsReaskedOnce) {
    auto partial = sample_components();
    partial.erase(ComponentKind::praise);
    ScriptedModel gen({on_call(1, sections_reply(partial)), on_call(2, sections_reply(sample_components()))});
    const auto report = generate_report(sample_context(), gen, fixed_clock());
    EXPECT_EQ(report.components, sample_components());
    EXPECT_NE(last_user_message(gen.calls()[1]).find("missing section: praise"), std::string::npos);
}

TEST(Generation, PersistentFailureKeepsRawText) {
    ScriptedModel gen({any("I refuse to use sections.")});
    try {
        generate_report(sample_context(), gen, fixed_clock());
        FAIL();
    } catch (const GenerationError& e) {
        EXPECT_EQ(e.raw_text(), "I refuse to use sections.");
        EXPECT_NE(std::string(e.what()).find("missing section"), std::string::npos);
    }
    EXPECT_EQ(gen.call_count(), 2u);
}

TEST(Generation, ReasoningIsNotPartOfTheReport) {
    ScriptedModel gen({any("<think>draft first</think>\n" + sections_reply(sample_components()))});
    EXPECT_EQ(generate_report(sample_context(), gen, fixed_clock()).components, sample_components());
}

TEST(FeedbackLoop, JudgeFailureMidLoopKeepsPartialTrace) {
    ScriptedModel gen({on_call(1, sections_reply(sample_components())),
                       on_call(2, only_section(ComponentKind::praise, "Better praise."))});
    ScriptedModel judge({on_call(1, verdict_reply(all_criteria(), {RC::praise})), any("garbage")});
    try {
        refine(sample_context(), RefinementConfig{}, gen, judge, fixed_clock());
        FAIL();
    } catch (const RefinementError& e) {
        ASSERT_EQ(e.partial_trace().iterations.size(), 1u);
        EXPECT_EQ(e.partial_trace().iterations[0].verdict.failing(), std::set<RC>{RC::praise});
    }
}

TEST(FeedbackLoop, TransportFailureIsRefinementError) {
    ScriptedModel gen({});
    ScriptedModel judge({});
    try {
        refine(sample_context(), RefinementConfig{}, gen, judge, fixed_clock());
        FAIL();
    } catch (const RefinementError& e) {
        EXPECT_TRUE(e.partial_trace().iterations.empty());
        EXPECT_NE(std::string(e.what()).find("script exhausted"), std::string::npos);
    }
}

TEST(ApplyPatches, UntouchedComponentsAreIdentical) {
    const auto base = sample_report();
    const auto out = apply_patches(base, {{ComponentKind::current_state, "new", {}}});
    EXPECT_EQ(out.text(ComponentKind::current_state), "new");
    EXPECT_EQ(out.text(ComponentKind::praise), base.text(ComponentKind::praise));
}
