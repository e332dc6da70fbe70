#include "coach/http_server.hpp"

#include <httplib.h>

#include "coach/serialization.hpp"

namespace coach {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
        Json doc = Json::parse(req.body);
        if (!doc.is_object()) throw ParseError("request body: expected a JSON object");
        return doc;
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("request body: invalid JSON: ") + e.what());
    }
}

std::string string_field(const Json& body, const char* name, bool required = true) {
    auto it = body.find(name);
    if (it == body.end() || it->is_null()) {
        if (required) throw ParseError(std::string("request body.") + name + ": missing field");
        return "";
    }
    if (!it->is_string()) throw ParseError(std::string("request body.") + name + ": expected string");
    return it->get<std::string>();
}

std::string sse_event(const std::string& name, const Json& data) {
    return "event: " + name + "\ndata: " + data.dump() + "\n\n";
}

Json step_event(const TrajectoryStep& step) {
    Json event{{"step_index", step.index}};
    if (step.is_final()) {
        event["tool_name"] = "answer";
        event["observation_kind"] = nullptr;
    } else {
        event["tool_name"] = std::get<ToolCall>(step.action).tool_name;
        event["observation_kind"] = std::string(to_string(step.observation->kind));
    }
    return event;
}

// Runs fn, mapping any escaping exception onto a JSON error response.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        auto [status, body] = describe_error(e);
        send_json(res, status, body);
    }
}

}  // namespace

std::pair<int, Json> describe_error(const std::exception& e) {
    auto body = [&e](const char* code) { return Json{{"error", code}, {"message", e.what()}}; };
    if (dynamic_cast<const NotFoundError*>(&e)) return {404, body("not_found")};
    if (dynamic_cast<const ConflictError*>(&e)) return {409, body("conflict")};
    if (dynamic_cast<const PreconditionError*>(&e)) return {412, body("precondition_failed")};
    if (dynamic_cast<const UnavailableError*>(&e)) return {503, body("feature_unavailable")};
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e)) {
        return {400, body("invalid_request")};
    }
    if (const auto* s = dynamic_cast<const SubmissionError*>(&e)) {
        auto b = body("refinement_failed");
        b["partial_trace"] = s->trace_id();
        return {502, b};
    }
    if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const TrajectoryError*>(&e)) {
        return {502, body("backend_failed")};
    }
    return {500, body("internal_error")};
}

struct HttpServer::Impl {
    explicit Impl(FeedbackService& s) : service(s) {}

    void routes();

    FeedbackService& service;
    httplib::Server server;
};

void HttpServer::Impl::routes() {
    const std::string sid = R"(/api/sessions/([A-Za-z0-9_-]+))";

    server.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = parse_body(req);
            auto session = service.create_session(string_field(body, "course_id", false), string_field(body, "question_id"));
            send_json(res, 201, to_json_value(service.get_session(session.session_id)));
        });
    });

    server.Post(sid + "/transcribe", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.is_multipart_form_data() || !req.has_file("image")) {
                throw ParseError("request: expected a multipart upload with an \"image\" part");
            }
            const auto file = req.get_file_value("image");
            const auto text = service.transcribe(req.matches[1], file.content, file.content_type);
            send_json(res, 200, {{"transcript", text}});
        });
    });

    server.Put(sid + "/transcript", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = parse_body(req);
            service.update_transcript(req.matches[1], string_field(body, "transcript"));
            send_json(res, 200, to_json_value(service.get_session(req.matches[1])));
        });
    });

    server.Post(sid + "/solution", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = parse_body(req);
            bool blank = false;
            if (auto it = body.find("blank"); it != body.end()) {
                if (!it->is_boolean()) throw ParseError("request body.blank: expected boolean");
                blank = it->get<bool>();
            }
            send_json(res, 200, to_json_value(service.submit_solution(req.matches[1], string_field(body, "solution", blank), blank)));
        });
    });

    server.Get(sid, [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, to_json_value(service.get_session(req.matches[1]))); });
    });

    server.Post(sid + "/chat", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = parse_body(req);
            const std::string message = string_field(body, "message");
            if (trim(message).empty()) throw ValidationError("request body.message: empty");
            auto lease = std::make_shared<SessionLease>(service.reserve_chat(req.matches[1]));
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, lease, message](std::size_t, httplib::DataSink& sink) {
                    auto emit = [&sink](const std::string& chunk) { sink.write(chunk.data(), chunk.size()); };
                    try {
                        auto result = service.run_chat(std::move(*lease), message,
                                                       [&](const TrajectoryStep& step) { emit(sse_event("step", step_event(step))); });
                        emit(sse_event("answer", {{"answer", result.trajectory.final_answer},
                                                  {"trajectory_id", result.trajectory_id},
                                                  {"termination", std::string(to_string(result.trajectory.termination))}}));
                    } catch (const std::exception& e) {
                        emit(sse_event("error", describe_error(e).second));
                    }
                    sink.done();
                    return true;
                });
        });
    });

    server.Get(sid + R"(/trajectories/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            Json doc = service.get_trajectory(req.matches[1], req.matches[2]);
            send_json(res, 200, doc);
        });
    });

    server.Get("/api/admin/metrics", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, to_json_value(service.get_metrics())); });
    });

    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });
}

HttpServer::HttpServer(FeedbackService& service) : impl_(std::make_unique<Impl>(service)) { impl_->routes(); }

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::is_running() const { return impl_->server.is_running(); }

}  // namespace coach
