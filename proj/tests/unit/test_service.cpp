#include <gtest/gtest.h>

#include "coach/serialization.hpp"
#include "service_support.hpp"

using namespace coach;
using namespace coach::testing;

namespace {

Json post_json(httplib::Client& c, const std::string& path, const Json& body) {
    auto res = c.Post(path, body.dump(), "application/json");
    if (!res) return Json{{"transport_error", httplib::to_string(res.error())}};
    Json out = res->body.empty() ? Json::object() : Json::parse(res->body, nullptr, false);
    out["__status"] = res->status;
    return out;
}

}  // namespace

// --- Store -------------------------------------------------------------------

TEST(Store, NumberedDocumentsAreAppendOnly) {
    TempDir dir;
    SessionStore store(dir.path());
    Session s;
    s.session_id = "abc";
    s.context = sample_context();
    s.created_at = "2026-01-01T00:00:00Z";
    store.save_session(s);
    EXPECT_EQ(store.load_session("abc"), s);

    EXPECT_EQ(store.append_report("abc", sample_report()), "report-1");
    auto second = sample_report();
    second.origin_iteration = 1;
    EXPECT_EQ(store.append_report("abc", second), "report-2");
    EXPECT_EQ(store.load_report("abc", "report-1"), sample_report());
    EXPECT_EQ(store.load_report("abc", "report-2"), second);
    EXPECT_EQ(store.list("abc", "report"), (std::vector<std::string>{"report-1", "report-2"}));
    EXPECT_EQ(store.session_ids(), std::vector<std::string>{"abc"});
    EXPECT_FALSE(std::filesystem::exists(dir / "abc" / "session.json.tmp"));
}

TEST(Store, NumericOrderBeyondNine) {
    TempDir dir;
    SessionStore store(dir.path());
    Session s;
    s.session_id = "s";
    s.context = sample_context();
    store.save_session(s);
    for (int i = 0; i < 11; ++i) store.append_report("s", sample_report());
    const auto ids = store.list("s", "report");
    ASSERT_EQ(ids.size(), 11u);
    EXPECT_EQ(ids[9], "report-10");
    EXPECT_EQ(ids.back(), "report-11");
}

TEST(Store, MissingAndHostileIds) {
    TempDir dir;
    SessionStore store(dir.path());
    EXPECT_THROW(store.load_session("nope"), NotFoundError);
    EXPECT_THROW(store.load_session("../etc"), NotFoundError);
    EXPECT_FALSE(store.has_session("../x"));
}

// --- Configuration -------------------------------------------------------------

TEST(ServiceConfig, ParsesAndResolvesRelativePaths) {
    TempDir dir;
    spit(dir / "gen.json", Json(std::vector<ScriptedExchange>{any("x")}).dump());
    const Json doc{{"question_bank_path", "bank.json"},
                   {"prerequisite_map_path", "/abs/topics.json"},
                   {"generation_backend", {{"kind", "scripted"}, {"script_path", "gen.json"}}},
                   {"judge_backend", {{"kind", "scripted"}, {"script", Json::array()}}},
                   {"agent_backend", {{"kind", "scripted"}, {"script", Json::array()}}},
                   {"study_mode", {{"enabled", true}}},
                   {"agent_limits", {{"max_steps", 4}}}};
    const auto c = service_config_from_json(doc, dir.path());
    EXPECT_EQ(c.question_bank_path, dir / "bank.json");
    EXPECT_EQ(*c.prerequisite_map_path, std::filesystem::path("/abs/topics.json"));
    EXPECT_EQ(c.store_root, dir / "store");
    EXPECT_TRUE(c.study_mode.enabled);
    EXPECT_EQ(c.study_mode.min_questions, 3);
    EXPECT_EQ(c.agent_limits.max_steps, 4);
    EXPECT_EQ(c.agent_limits.max_consecutive_parse_errors, 2);
    EXPECT_EQ(c.refinement, deployment_preset());
    ASSERT_TRUE(c.generation_backend.script);
    EXPECT_EQ(c.generation_backend.script->size(), 1u);
}

TEST(ServiceConfig, UnknownFieldIsRejected) {
    const Json doc{{"question_bank_path", "b"}, {"colour", "blue"}};
    EXPECT_THROW(service_config_from_json(doc), ParseError);
}

TEST(ServiceConfig, ValidationFindsMissingResources) {
    TempDir dir;
    auto c = test_config(dir / "store");
    EXPECT_TRUE(validate_service_config(c).empty());
    c.prerequisite_map_path.reset();
    EXPECT_FALSE(validate_service_config(c).empty());
    c = test_config(dir / "store");
    c.question_bank_path = dir / "absent.json";
    EXPECT_FALSE(validate_service_config(c).empty());
    c = test_config(dir / "store");
    c.listen_address = "localhost";
    EXPECT_FALSE(validate_service_config(c).empty());
}

TEST(ServiceConfig, ListenAddress) {
    EXPECT_EQ(split_listen_address("0.0.0.0:9000"), (std::pair<std::string, int>{"0.0.0.0", 9000}));
    EXPECT_THROW(split_listen_address("host:99999"), ValidationError);
    EXPECT_THROW(split_listen_address(":80"), ValidationError);
}

TEST(ServiceConfig, FromConfigBuildsEverything) {
    TempDir dir;
    const Embedder emb(EmbedderDescriptor::fake(64));
    save_index(ingest_corpus(fixture("corpus"), emb), dir / "index.json");
    const Json doc{{"question_bank_path", fixture("question_bank.json").string()},
                   {"corpus_index_path", "index.json"},
                   {"prerequisite_map_path", fixture("topics.json").string()},
                   {"behaviour_descriptor_path", fixture("behaviours.json").string()},
                   {"embedder", {{"kind", "deterministic_fake"}, {"dimension", 64}}},
                   {"generation_backend", {{"kind", "scripted"}, {"script", Json::array()}}},
                   {"judge_backend", {{"kind", "scripted"}, {"script", Json::array()}}},
                   {"agent_backend", {{"kind", "scripted"}, {"script", Json::array()}}}};
    spit(dir / "service.json", doc.dump());
    const auto service = FeedbackService::from_config(load_service_config(dir / "service.json"));
    EXPECT_EQ(service->registry().size(), 3u);
    EXPECT_EQ(service->config().store_root, dir / "store");
}

TEST(ServiceConfig, EmbedderMismatchFailsAtStartup) {
    TempDir dir;
    save_index(ingest_corpus(fixture("corpus"), Embedder(EmbedderDescriptor::fake(32))), dir / "index.json");
    auto c = test_config(dir / "store");
    c.corpus_index_path = dir / "index.json";
    c.generation_backend.script = c.judge_backend.script = c.agent_backend.script = std::vector<ScriptedExchange>{};
    EXPECT_THROW(FeedbackService::from_config(c), IndexError);
}

TEST(QuestionBank, StrictEntries) {
    TempDir dir;
    spit(dir / "b.json", R"([{"question_id":"a","question_text":"t","reference_solution":"r","course_id":"c","x":1}])");
    EXPECT_THROW(load_question_bank(dir / "b.json"), ParseError);
    spit(dir / "b.json", R"([{"question_id":"a","question_text":"t","reference_solution":"r","course_id":"c"},
                             {"question_id":"a","question_text":"t","reference_solution":"r","course_id":"c"}])");
    EXPECT_THROW(load_question_bank(dir / "b.json"), ParseError);
    EXPECT_EQ(load_question_bank(fixture("question_bank.json")).size(), 2u);
}

TEST(Base64, Rfc4648Vectors) {
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("fo"), "Zm8=");
    EXPECT_EQ(base64_encode("foo"), "Zm9v");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

// --- Workflow --------------------------------------------------------------------

TEST(Service, CreateSubmitChat) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);

    const auto session = service->create_session("math101", "q-induction-1");
    EXPECT_EQ(session.session_id.size(), 16u);
    EXPECT_EQ(session.context.question_id, "q-induction-1");
    EXPECT_FALSE(service->get_session(session.session_id).completed);

    const auto submitted = service->submit_solution(session.session_id, "Base case holds; assume P(n).");
    EXPECT_EQ(submitted.report.components, sample_components());
    EXPECT_EQ(submitted.iterations_used, 1);
    EXPECT_EQ(submitted.termination, RefinementTermination::all_pass);
    EXPECT_EQ(submitted.report_id, "report-1");
    EXPECT_EQ(submitted.trace_id, "trace-1");
    EXPECT_EQ(backends.generator->call_count(), 1u);

    std::vector<std::string> tools;
    const auto chat = service->chat(session.session_id, "What should I revise?",
                                    [&](const TrajectoryStep& s) {
                                        tools.push_back(s.is_final() ? "answer" : std::get<ToolCall>(s.action).tool_name);
                                    });
    EXPECT_EQ(tools, (std::vector<std::string>{"lookup_prerequisites", "answer"}));
    EXPECT_EQ(chat.trajectory_id, "trajectory-1");
    EXPECT_EQ(chat.trajectory.report_ref, "report-1");
    EXPECT_EQ(service->get_trajectory(session.session_id, "trajectory-1"), chat.trajectory);

    const auto view = service->get_session(session.session_id);
    EXPECT_TRUE(view.completed);
    EXPECT_EQ(view.questions_asked, 1);
    EXPECT_EQ(view.session.context.student_solution, "Base case holds; assume P(n).");

    const auto metrics = service->get_metrics();
    EXPECT_EQ(metrics.sessions, 1);
    EXPECT_EQ(metrics.conversations, 1);
    EXPECT_EQ(metrics.conversation_rate, 1.0);
    ASSERT_TRUE(metrics.step_metrics);
    EXPECT_EQ(metrics.step_metrics->mean_steps, 2.0);
}

TEST(Service, HistoryCarriesEarlierAnswers) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);
    const auto id = service->create_session("", "q-induction-1").session_id;
    service->submit_solution(id, "attempt");
    service->chat(id, "first question");
    service->chat(id, "second question");
    const auto calls = backends.agent->calls();
    const auto& opening = calls[2][1].content;  // third call opens the second chat
    EXPECT_NE(opening.find("Q: first question\nA: Revisit recursion first."), std::string::npos) << opening;
}

TEST(Service, Preconditions) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);
    EXPECT_THROW(service->create_session("math101", "q-missing"), NotFoundError);
    EXPECT_THROW(service->create_session("cs999", "q-induction-1"), NotFoundError);
    const auto id = service->create_session("", "q-induction-1").session_id;
    EXPECT_THROW(service->chat(id, "too early"), PreconditionError);
    EXPECT_THROW(service->submit_solution(id, "   "), ValidationError);
    EXPECT_THROW(service->get_session("0000000000000000"), NotFoundError);
    EXPECT_THROW(service->get_trajectory(id, "trajectory-1"), NotFoundError);
    EXPECT_THROW(service->transcribe(id, "png", "image/png"), UnavailableError);
}

TEST(Service, BlankSubmission) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);
    const auto id = service->create_session("", "q-induction-1").session_id;
    service->submit_solution(id, "", true);
    EXPECT_NE(backends.generator->calls()[0][1].content.find("(blank submission)"), std::string::npos);
}

TEST(Service, ConcurrentWriteIsConflict) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);
    const auto id = service->create_session("", "q-induction-1").session_id;
    service->submit_solution(id, "attempt");
    {
        auto lease = service->reserve_chat(id);
        EXPECT_THROW(service->reserve_chat(id), ConflictError);
        EXPECT_THROW(service->submit_solution(id, "again"), ConflictError);
        EXPECT_NO_THROW(service->get_session(id));  // reads never block
    }
    EXPECT_NO_THROW(service->chat(id, "now free"));
}

TEST(Service, RefinementFailureStoresPartialTrace) {
    TempDir dir;
    ScriptedBackends backends;
    backends.judge = std::make_shared<ScriptedModel>(std::vector<ScriptedExchange>{any("no verdict")}, "judge");
    auto service = make_test_service(dir.path(), backends);
    const auto id = service->create_session("", "q-induction-1").session_id;
    try {
        service->submit_solution(id, "attempt");
        FAIL();
    } catch (const SubmissionError& e) {
        EXPECT_EQ(e.trace_id(), "trace-1");
        EXPECT_TRUE(service->store().load_trace(id, "trace-1").iterations.empty());
    }
    EXPECT_FALSE(service->get_session(id).session.report);
}

TEST(Service, TranscriptionUsesVisionBackend) {
    TempDir dir;
    ScriptedBackends backends;
    backends.vision =
        std::make_shared<ScriptedModel>(std::vector<ScriptedExchange>{any("<think>looks like</think> P(1): 1 = 1 ")}, "vision");
    auto service = make_test_service(dir.path(), backends);
    const auto id = service->create_session("", "q-induction-1").session_id;
    EXPECT_EQ(service->transcribe(id, "\x89PNG", "image/png"), "P(1): 1 = 1");
    const auto msg = backends.vision->calls()[0][0];
    ASSERT_EQ(msg.image_urls.size(), 1u);
    EXPECT_EQ(msg.image_urls[0], "data:image/png;base64," + base64_encode("\x89PNG"));
    EXPECT_EQ(service->get_session(id).session.transcript, "P(1): 1 = 1");
    service->update_transcript(id, "edited");
    EXPECT_EQ(service->get_session(id).session.transcript, "edited");
}

TEST(Service, StudyModeNeedsEnoughQuestions) {
    TempDir dir;
    ScriptedBackends backends;
    auto config = test_config(dir.path());
    config.study_mode = {true, 2};
    auto service = make_test_service(dir.path(), backends, config);
    const auto id = service->create_session("", "q-induction-1").session_id;
    service->submit_solution(id, "attempt");
    service->chat(id, "one");
    EXPECT_FALSE(service->get_session(id).completed);
    service->chat(id, "two");
    EXPECT_TRUE(service->get_session(id).completed);
}

TEST(Service, StateSurvivesRestart) {
    TempDir dir;
    ScriptedBackends backends;
    std::string id;
    ServiceMetrics before;
    {
        auto service = make_test_service(dir.path(), backends);
        id = service->create_session("", "q-induction-1").session_id;
        service->submit_solution(id, "attempt");
        service->chat(id, "q");
        before = service->get_metrics();
    }
    ScriptedBackends fresh;
    auto restarted = make_test_service(dir.path(), fresh);
    const auto view = restarted->get_session(id);
    ASSERT_TRUE(view.session.report);
    EXPECT_EQ(view.questions_asked, 1);
    EXPECT_EQ(to_json_value(restarted->get_metrics()), to_json_value(before));
    EXPECT_EQ(restarted->chat(id, "again").trajectory_id, "trajectory-2");
}

TEST(Service, ThrottledModelsStillWork) {
    TempDir dir;
    ScriptedBackends backends;
    auto config = test_config(dir.path());
    config.max_concurrent_model_calls = 1;
    auto service = make_test_service(dir.path(), backends, config);
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&] {
            const auto id = service->create_session("", "q-recursion-1").session_id;
            service->submit_solution(id, "attempt");
            service->chat(id, "q");
            ++ok;
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok.load(), 4);
    EXPECT_EQ(service->get_metrics().trajectories, 4);
}

// --- HTTP ----------------------------------------------------------------------------

TEST(Http, EndToEndWithStreamingChat) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);
    RunningServer server(*service);
    auto client = server.client();

    auto health = client.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);

    const auto created = post_json(client, "/api/sessions", {{"course_id", "math101"}, {"question_id", "q-induction-1"}});
    ASSERT_EQ(created["__status"], 201) << created.dump();
    const std::string id = created["session"]["session_id"];
    EXPECT_EQ(created["completed"], false);

    auto put = client.Put("/api/sessions/" + id + "/transcript", Json{{"transcript", "typed"}}.dump(), "application/json");
    ASSERT_TRUE(put);
    EXPECT_EQ(put->status, 200);

    const auto submitted = post_json(client, "/api/sessions/" + id + "/solution", {{"solution", "my proof"}});
    ASSERT_EQ(submitted["__status"], 200) << submitted.dump();
    EXPECT_EQ(submitted["report"]["components"]["praise"], sample_components().at(ComponentKind::praise));
    EXPECT_EQ(submitted["iterations_used"], 1);

    auto chat = client.Post("/api/sessions/" + id + "/chat", Json{{"message", "What next?"}}.dump(), "application/json");
    ASSERT_TRUE(chat);
    EXPECT_EQ(chat->status, 200);
    EXPECT_EQ(chat->get_header_value("Content-Type"), "text/event-stream");
    const auto events = parse_sse(chat->body);
    ASSERT_EQ(events.size(), 3u) << chat->body;
    EXPECT_EQ(events[0].name, "step");
    EXPECT_EQ(events[0].data, (Json{{"step_index", 0}, {"tool_name", "lookup_prerequisites"}, {"observation_kind", "success"}}));
    EXPECT_EQ(events[1].name, "step");
    EXPECT_EQ(events[1].data["tool_name"], "answer");
    EXPECT_EQ(events[2].name, "answer");
    EXPECT_EQ(events[2].data["answer"], "Revisit recursion first.");
    EXPECT_EQ(events[2].data["termination"], "answered");

    const std::string tid = events[2].data["trajectory_id"];
    auto traj = client.Get("/api/sessions/" + id + "/trajectories/" + tid);
    ASSERT_TRUE(traj);
    EXPECT_EQ(traj->status, 200);
    EXPECT_EQ(from_document<Trajectory>(traj->body).final_answer, "Revisit recursion first.");

    auto metrics = client.Get("/api/admin/metrics");
    ASSERT_TRUE(metrics);
    EXPECT_EQ(Json::parse(metrics->body)["conversation_rate"], 1.0);
}

TEST(Http, ErrorStatusCodes) {
    TempDir dir;
    ScriptedBackends backends;
    auto service = make_test_service(dir.path(), backends);
    RunningServer server(*service);
    auto client = server.client();

    auto missing = post_json(client, "/api/sessions", {{"question_id", "nope"}});
    EXPECT_EQ(missing["__status"], 404);
    EXPECT_EQ(missing["error"], "not_found");

    auto bad = client.Post("/api/sessions", "{oops", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);

    const std::string id = post_json(client, "/api/sessions", {{"question_id", "q-induction-1"}})["session"]["session_id"];

    auto early = client.Post("/api/sessions/" + id + "/chat", Json{{"message", "hi"}}.dump(), "application/json");
    ASSERT_TRUE(early);
    EXPECT_EQ(early->status, 412);

    EXPECT_EQ(post_json(client, "/api/sessions/" + id + "/solution", {{"solution", ""}})["__status"], 400);

    httplib::MultipartFormDataItems items{{"image", "\x89PNG", "page.png", "image/png"}};
    auto upload = client.Post("/api/sessions/" + id + "/transcribe", items);
    ASSERT_TRUE(upload);
    EXPECT_EQ(upload->status, 503);
    EXPECT_EQ(Json::parse(upload->body)["error"], "feature_unavailable");

    auto unknown = client.Get("/api/sessions/ffffffffffffffff");
    ASSERT_TRUE(unknown);
    EXPECT_EQ(unknown->status, 404);
}

TEST(Http, RefinementFailureIs502WithPartialTrace) {
    TempDir dir;
    ScriptedBackends backends;
    backends.judge = std::make_shared<ScriptedModel>(std::vector<ScriptedExchange>{}, "judge");
    auto service = make_test_service(dir.path(), backends);
    RunningServer server(*service);
    auto client = server.client();
    const std::string id = post_json(client, "/api/sessions", {{"question_id", "q-induction-1"}})["session"]["session_id"];
    const auto res = post_json(client, "/api/sessions/" + id + "/solution", {{"solution", "x"}});
    EXPECT_EQ(res["__status"], 502);
    EXPECT_EQ(res["error"], "refinement_failed");
    EXPECT_EQ(res["partial_trace"], "trace-1");
}

TEST(Http, TranscribeUpload) {
    TempDir dir;
    ScriptedBackends backends;
    backends.vision = std::make_shared<ScriptedModel>(std::vector<ScriptedExchange>{any("n = 1")}, "vision");
    auto service = make_test_service(dir.path(), backends);
    RunningServer server(*service);
    auto client = server.client();
    const std::string id = post_json(client, "/api/sessions", {{"question_id", "q-induction-1"}})["session"]["session_id"];
    httplib::MultipartFormDataItems items{{"image", std::string("\x89PNG\r\n", 6), "page.png", "image/png"}};
    auto res = client.Post("/api/sessions/" + id + "/transcribe", items);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(Json::parse(res->body)["transcript"], "n = 1");
}

TEST(Http, AgentFailureStreamsErrorEvent) {
    TempDir dir;
    ScriptedBackends backends;
    backends.agent = std::make_shared<ScriptedModel>(std::vector<ScriptedExchange>{}, "agent");
    auto service = make_test_service(dir.path(), backends);
    RunningServer server(*service);
    auto client = server.client();
    const std::string id = post_json(client, "/api/sessions", {{"question_id", "q-induction-1"}})["session"]["session_id"];
    post_json(client, "/api/sessions/" + id + "/solution", {{"solution", "x"}});
    auto chat = client.Post("/api/sessions/" + id + "/chat", Json{{"message", "hi"}}.dump(), "application/json");
    ASSERT_TRUE(chat);
    const auto events = parse_sse(chat->body);
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].name, "error");
    EXPECT_EQ(events[0].data["error"], "backend_failed");
    // The lease is released even though the stream failed.
    EXPECT_NO_THROW(service->reserve_chat(id));
}
