#include <gtest/gtest.h>

#include "coach/gateway.hpp"
#include "coach/serialization.hpp"
#include "test_support.hpp"

using namespace coach;
using namespace coach::testing;

TEST(Domain, ValidReportHasNoViolations) { EXPECT_TRUE(validate_report(sample_report()).empty()); }

TEST(Domain, ReportMissingPraiseNamesComponent) {
    auto r = sample_report();
    r.components.erase(ComponentKind::praise);
    const auto v = validate_report(r);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0], "missing component: praise");
}

TEST(Domain, ReportWithWhitespaceComponentIsEmpty) {
    auto r = sample_report();
    r.components[ComponentKind::current_state] = "  \n\t";
    const auto v = validate_report(r);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0], "empty component: current_state");
}

TEST(Domain, ClarityGovernsEveryComponent) {
    EXPECT_EQ(governed_components(RubricCriterion::clarity).size(), 5u);
    for (RubricCriterion c : kAllCriteria) {
        if (c == RubricCriterion::clarity) continue;
        EXPECT_EQ(governed_components(c).size(), 1u) << to_string(c);
    }
    EXPECT_EQ(governed_components(RubricCriterion::current_state_coverage),
              std::vector<ComponentKind>{ComponentKind::current_state});
    EXPECT_EQ(governed_components(RubricCriterion::task_next_steps_correctness),
              std::vector<ComponentKind>{ComponentKind::task_next_steps});
}

TEST(Domain, GovernedUnionIsInReportOrder) {
    const auto u = governed_components({RubricCriterion::praise, RubricCriterion::current_state_correctness,
                                        RubricCriterion::current_state_coverage});
    EXPECT_EQ(u, (std::vector<ComponentKind>{ComponentKind::current_state, ComponentKind::praise}));
}

TEST(Domain, VerdictFailWithoutExplanationIsInvalid) {
    JudgeVerdict v;
    v.judged_criteria = {RubricCriterion::praise};
    v.judgments[RubricCriterion::praise] = Verdict::fail;
    const auto violations = validate_verdict(v);
    ASSERT_FALSE(violations.empty());
    EXPECT_EQ(violations[0], "missing explanation: praise");
}

TEST(Domain, ConfigValidation) {
    RefinementConfig c;
    EXPECT_TRUE(validate_config(c).empty());
    c.max_iterations = -1;
    EXPECT_FALSE(validate_config(c).empty());
    c = RefinementConfig{};
    c.target_criteria.clear();
    EXPECT_FALSE(validate_config(c).empty());
    c = RefinementConfig{};
    c.judge_runs = 0;
    EXPECT_FALSE(validate_config(c).empty());
}

TEST(Domain, TopicGraphRejectsCycleAndDanglingEdge) {
    TopicGraph g{{"a", "b", "c"}, {{"a", "b"}, {"b", "c"}}};
    EXPECT_TRUE(validate_graph(g).empty());
    g.edges.insert({"c", "a"});
    EXPECT_FALSE(validate_graph(g).empty());
    TopicGraph dangling{{"a"}, {{"a", "z"}}};
    EXPECT_FALSE(validate_graph(dangling).empty());
}

TEST(Domain, EveryThemeHasOneCategory) {
    std::map<QuestionCategory, int> per_category;
    for (QuestionTheme t : kAllQuestionThemes) {
        ++per_category[category_of(t)];
        EXPECT_EQ(theme_from_string(to_string(t)), t);
    }
    for (QuestionCategory c : kAllQuestionCategories) EXPECT_GT(per_category[c], 0) << to_string(c);
    EXPECT_EQ(category_of(QuestionTheme::greeting_thanking), QuestionCategory::off_topic);
    EXPECT_EQ(category_of(QuestionTheme::understanding_task), QuestionCategory::task);
}

TEST(Domain, SessionTrajectoriesRequireReport) {
    Session s;
    s.session_id = "abc";
    s.context = sample_context();
    s.created_at = "2026-01-01T00:00:00Z";
    EXPECT_TRUE(validate_session(s).empty());
    s.trajectories.push_back("trajectory-1");
    EXPECT_FALSE(validate_session(s).empty());
    s.report = sample_report();
    EXPECT_TRUE(validate_session(s).empty());
}

TEST(Domain, TimestampIsRfc3339Utc) {
    const auto ts = utc_now_rfc3339();
    ASSERT_EQ(ts.size(), 20u);
    EXPECT_EQ(ts[4], '-');
    EXPECT_EQ(ts[10], 'T');
    EXPECT_EQ(ts.back(), 'Z');
}

// --- Trajectory invariants -------------------------------------------------

namespace {

Trajectory two_step() {
    Trajectory t;
    t.query = "why?";
    TrajectoryStep s0;
    s0.index = 0;
    s0.action = make_tool_call("lookup_course_content", {{"query", "induction"}});
    s0.observation = Observation{ObservationKind::success, "text", "lookup_course_content"};
    TrajectoryStep s1;
    s1.index = 1;
    s1.action = FinalAnswer{"because"};
    t.steps = {s0, s1};
    t.final_answer = "because";
    return t;
}

}  // namespace

TEST(Domain, TrajectoryInvariants) {
    auto t = two_step();
    EXPECT_TRUE(validate_trajectory(t).empty());
    EXPECT_EQ(t.tool_call_count(), 1u);

    auto wrong_count = t;
    wrong_count.error_count = 1;
    EXPECT_FALSE(validate_trajectory(wrong_count).empty());

    auto no_terminal = t;
    no_terminal.steps.pop_back();
    EXPECT_FALSE(validate_trajectory(no_terminal).empty());

    auto missing_obs = t;
    missing_obs.steps[0].observation.reset();
    EXPECT_FALSE(validate_trajectory(missing_obs).empty());
}

// --- Serialization ---------------------------------------------------------

template <typename T>
void expect_round_trip(const T& value) {
    const auto doc = to_document(value);
    const auto back = from_document<T>(doc);
    EXPECT_EQ(back, value);
    EXPECT_EQ(to_document(back), doc);
}

TEST(Serialization, RoundTrips) {
    expect_round_trip(sample_context());
    expect_round_trip(sample_report());
    expect_round_trip(two_step());
    expect_round_trip(TopicGraph{{"a", "b"}, {{"a", "b"}}});
    expect_round_trip(SteeringRecord{"s1", "Basis", true, false});
    expect_round_trip(BehaviourDescriptor{BehaviourDimension::assessment, "quizzes", "about {query}"});

    JudgeVerdict v;
    v.judged_criteria = {RubricCriterion::praise, RubricCriterion::clarity};
    v.judgments = {{RubricCriterion::praise, Verdict::fail}, {RubricCriterion::clarity, Verdict::pass}};
    v.explanations = {{RubricCriterion::praise, "generic"}};
    expect_round_trip(v);

    RefinementTrace trace;
    trace.context_ref = "q1";
    trace.iterations.push_back({sample_report(), v});
    trace.config_snapshot = RefinementConfig{};
    expect_round_trip(trace);

    InteractiveVerdict iv;
    for (auto c : kAllInteractiveCriteria) iv.judgments[c] = Verdict::pass;
    iv.judgments[InteractiveCriterion::correctness] = Verdict::fail;
    expect_round_trip(iv);
}

TEST(Serialization, CanonicalFormIsStable) {
    const auto a = to_document(sample_report());
    const auto b = to_document(from_document<FeedbackReport>(a));
    EXPECT_EQ(a, b);
    // Keys are sorted, so the same value always yields the same bytes.
    EXPECT_LT(a.find("\"components\""), a.find("\"generated_at\""));
}

TEST(Serialization, UnknownFieldIsRejectedByName) {
    Json doc = sample_report();
    doc["extra"] = 1;
    try {
        from_document<FeedbackReport>(doc.dump());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("FeedbackReport.extra"), std::string::npos) << e.what();
    }
}

TEST(Serialization, MissingComponentIsRejected) {
    Json doc = sample_report();
    doc["components"].erase("praise");
    EXPECT_THROW(from_document<FeedbackReport>(doc.dump()), ParseError);
}

TEST(Serialization, WrongFieldTypeNamesField) {
    Json doc = sample_context();
    doc["question_text"] = 5;
    try {
        from_document<FeedbackContext>(doc.dump());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("question_text"), std::string::npos) << e.what();
    }
}

TEST(Serialization, InvalidJsonIsParseError) {
    EXPECT_THROW(from_document<FeedbackReport>("{not json"), ParseError);
}

TEST(Serialization, BlankSolutionIsLegal) {
    auto ctx = sample_context();
    ctx.student_solution.clear();
    EXPECT_TRUE(validate_context(ctx).empty());
    expect_round_trip(ctx);
}
