#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "coach/agent.hpp"
#include "coach/serialization.hpp"
#include "test_support.hpp"

using namespace coach;
using namespace coach::testing;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

Json first_line(const Outcome& o) { return Json::parse(o.out.substr(0, o.out.find('\n'))); }

Trajectory sample_trajectory() {
    auto graph = std::make_shared<TopicGraph>(load_topic_graph(fixture("topics.json").string()));
    const auto registry = make_default_registry({nullptr, nullptr, graph, nullptr});
    ScriptedModel model({on_call(1, "<think>look</think>\n" +
                                        render_tool_call(std::string(tool_name::prerequisites), {{"topic", "induction"}})),
                         on_call(2, "FINAL_ANSWER: Review recursion.")});
    return run_trajectory("What next?", sample_report(), registry, model);
}

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run_cli({}).code, cli::kInputError);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kInputError);
    EXPECT_EQ(run_cli({"eval", "mcnemar", "--b", "3"}).code, cli::kInputError);
    EXPECT_EQ(run_cli({"--help"}).code, cli::kOk);
}

TEST(Cli, EvalStatistics) {
    auto o = run_cli({"eval", "kappa", "--a", "1,1,0,0", "--b", "1,0,0,1"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NEAR(first_line(o)["kappa"].get<double>(), 0.0, 1e-12);
    EXPECT_EQ(first_line(o)["n"], 4);

    o = run_cli({"eval", "mcnemar", "--b", "5", "--c", "0"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NEAR(first_line(o)["p"].get<double>(), 0.0625, 1e-12);

    o = run_cli({"eval", "bh", "--p", "0.01,0.02,0.03"});
    ASSERT_EQ(o.code, 0) << o.err;
    for (const auto& v : first_line(o)) EXPECT_NEAR(v.get<double>(), 0.03, 1e-12);

    o = run_cli({"eval", "wilcoxon", "--x", "2,3,4,5,6,7", "--y", "1,1,1,1,1,1", "--method", "exact"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NEAR(first_line(o)["p"].get<double>(), 0.03125, 1e-12);
}

TEST(Cli, EvalInputErrors) {
    auto o = run_cli({"eval", "bh", "--p", "0.1,abc"});
    EXPECT_EQ(o.code, cli::kInputError);
    EXPECT_NE(o.err.find("--p: not a number: \"abc\""), std::string::npos) << o.err;
    EXPECT_EQ(run_cli({"eval", "kappa", "--a", "1,0", "--b", "1"}).code, cli::kInputError);
    EXPECT_EQ(run_cli({"eval", "wilcoxon", "--x", "1", "--y", "2", "--method", "magic"}).code, cli::kInputError);
    EXPECT_EQ(run_cli({"eval", "steps", "--trajectories", "/nonexistent.jsonl"}).code, cli::kInputError);
}

TEST(Cli, EvalWritesCsv) {
    TempDir dir;
    const auto csv = (dir / "mcnemar.csv").string();
    ASSERT_EQ(run_cli({"eval", "mcnemar", "--b", "5", "--c", "0", "--csv", csv}).code, 0);
    EXPECT_EQ(slurp(csv), "b,c,p\n5,0,0.0625\n");
}

TEST(Cli, EvalSteeringFromFixture) {
    const auto o = run_cli({"eval", "steering", "--records", fixture("steering.jsonl").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = first_line(o);
    const auto basis = std::find_if(rows.begin(), rows.end(), [](const Json& r) { return r["component"] == "Basis"; });
    ASSERT_NE(basis, rows.end());
    EXPECT_EQ((*basis)["rate_highlighted"], 0.5);
    EXPECT_EQ((*basis)["rate_not_highlighted"], 0.0);
}

TEST(Cli, EvalStepsAndPrevalence) {
    TempDir dir;
    spit(dir / "t.jsonl", to_document(sample_trajectory()) + "\n\n" + to_document(sample_trajectory()) + "\n");
    auto o = run_cli({"eval", "steps", "--trajectories", (dir / "t.jsonl").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(first_line(o)["mean_steps"], 2.0);
    EXPECT_EQ(first_line(o)["n"], 2);
    o = run_cli({"eval", "steps", "--exclude-terminal", "--trajectories", (dir / "t.jsonl").string()});
    EXPECT_EQ(first_line(o)["mean_steps"], 1.0);

    spit(dir / "a.jsonl", R"({"student_id":"s1","category":"task"}
{"student_id":"s2","category":"feedback"}
{"student_id":"s1","category":"feedback"}
)");
    o = run_cli({"eval", "prevalence", "--annotations", (dir / "a.jsonl").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(first_line(o)["task"], 0.5);
    EXPECT_EQ(first_line(o)["feedback"], 1.0);

    spit(dir / "bad.jsonl", R"({"student_id":"s1","category":"gossip"})");
    o = run_cli({"eval", "prevalence", "--annotations", (dir / "bad.jsonl").string()});
    EXPECT_EQ(o.code, cli::kInputError);
    EXPECT_NE(o.err.find("unknown category: gossip"), std::string::npos) << o.err;
}

TEST(Cli, IngestIsDeterministic) {
    TempDir dir;
    const auto a = (dir / "a.json").string();
    const auto b = (dir / "b.json").string();
    auto o = run_cli({"ingest", "--corpus", fixture("corpus").string(), "--out", a, "--dimension", "32"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(first_line(o)["documents"], 4);
    ASSERT_EQ(run_cli({"ingest", "--corpus", fixture("corpus").string(), "--out", b, "--dimension", "32"}).code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(load_index(a).chunks.size(), first_line(o)["chunks"].get<std::size_t>());

    o = run_cli({"ingest", "--corpus", (dir / "missing").string(), "--out", a});
    EXPECT_EQ(o.code, cli::kInputError);
}

TEST(Cli, BatchRefineWritesTraces) {
    TempDir dir;
    std::string dataset;
    for (int i = 0; i < 3; ++i) {
        auto ctx = sample_context();
        ctx.question_id = "q" + std::to_string(i);
        dataset += to_document(ctx) + "\n";
    }
    spit(dir / "data.jsonl", dataset);
    const Json config{
        {"generation_backend",
         {{"kind", "scripted"}, {"script", Json(std::vector<ScriptedExchange>{any(sections_reply(sample_components()))})}}},
        {"judge_backend",
         {{"kind", "scripted"}, {"script", Json(std::vector<ScriptedExchange>{any(verdict_reply(all_criteria()))})}}}};
    spit(dir / "config.json", config.dump());
    const auto out_path = (dir / "traces.jsonl").string();
    const auto o = run_cli({"batch-refine", "--dataset", (dir / "data.jsonl").string(), "--config",
                            (dir / "config.json").string(), "--out", out_path, "--jobs", "2"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(first_line(o)["succeeded"], 3);
    EXPECT_EQ(first_line(o)["failed"], 0);

    std::istringstream lines(slurp(out_path));
    std::vector<std::string> ids;
    for (std::string line; std::getline(lines, line);) ids.push_back(from_document<RefinementTrace>(line).context_ref);
    EXPECT_EQ(ids, (std::vector<std::string>{"q0", "q1", "q2"}));

    const auto conv = run_cli({"eval", "convergence", "--traces", out_path, "--criteria", "praise"});
    ASSERT_EQ(conv.code, 0) << conv.err;
    EXPECT_EQ(first_line(conv)[0]["pass_rate"], 1.0);
}

TEST(Cli, BatchRefineReportsFailures) {
    TempDir dir;
    spit(dir / "data.jsonl", to_document(sample_context()) + "\n");
    const Json config{{"generation_backend", {{"kind", "scripted"}, {"script", Json::array()}}},
                      {"judge_backend", {{"kind", "scripted"}, {"script", Json::array()}}}};
    spit(dir / "config.json", config.dump());
    const auto o = run_cli({"batch-refine", "--dataset", (dir / "data.jsonl").string(), "--config",
                            (dir / "config.json").string(), "--out", (dir / "o.jsonl").string()});
    EXPECT_EQ(o.code, cli::kRuntimeError);
    EXPECT_NE(o.err.find("item 1 (q-induction-1)"), std::string::npos) << o.err;

    spit(dir / "config.json", R"({"generation_backend":{},"judge_backend":{},"extra":1})");
    EXPECT_EQ(run_cli({"batch-refine", "--dataset", (dir / "data.jsonl").string(), "--config",
                       (dir / "config.json").string(), "--out", (dir / "o.jsonl").string()})
                  .code,
              cli::kInputError);
}

TEST(Cli, ReplayPrintsSteps) {
    TempDir dir;
    spit(dir / "t.json", to_document(sample_trajectory()));
    const auto o = run_cli({"replay", "--trajectory", (dir / "t.json").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.out,
              "query: What next?\n"
              "step 0: tool lookup_prerequisites {\"topic\":\"induction\"}\n"
              "  reasoning: look\n"
              "  observation (success): Prerequisites for induction:\n- 1 hop: proof techniques, recursion\n"
              "step 1: answer\n"
              "final answer: Review recursion.\n"
              "termination: answered, errors: 0\n");
}

TEST(Cli, ExportTraces) {
    TempDir dir;
    const Json source{{"trajectory", sample_trajectory()}, {"report", sample_report()}};
    spit(dir / "in.jsonl", source.dump() + "\n");
    const auto out_path = (dir / "records.jsonl").string();
    const auto o = run_cli({"export-traces", "--input", (dir / "in.jsonl").string(), "--out", out_path});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(first_line(o)["records"], 2);
    std::istringstream lines(slurp(out_path));
    int n = 0;
    for (std::string line; std::getline(lines, line); ++n) EXPECT_NO_THROW(training_record_from_json(Json::parse(line)));
    EXPECT_EQ(n, 2);

    spit(dir / "bad.jsonl", R"({"trajectory":{}})");
    EXPECT_EQ(run_cli({"export-traces", "--input", (dir / "bad.jsonl").string(), "--out", out_path}).code, cli::kInputError);
}
