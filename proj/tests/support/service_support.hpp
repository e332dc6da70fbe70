#pragma once

// A FeedbackService wired to scripted backends and the fixture resources,
// plus an HTTP server on an ephemeral port and a server-sent events parser.

#include <httplib.h>

#include <memory>
#include <thread>

#include "coach/http_server.hpp"
#include "coach/service.hpp"
#include "test_support.hpp"

namespace coach::testing {

inline std::string agent_tool_call(const std::string& topic) {
    return render_tool_call(std::string(tool_name::prerequisites), {{"topic", topic}});
}

struct ScriptedBackends {
    std::shared_ptr<ScriptedModel> generator =
        std::make_shared<ScriptedModel>(std::vector<ScriptedExchange>{any(sections_reply(sample_components()))}, "generator");
    std::shared_ptr<ScriptedModel> judge = std::make_shared<ScriptedModel>(
        std::vector<ScriptedExchange>{any(verdict_reply(deployment_preset().target_criteria))}, "judge");
    // One tool call per question, then an answer once an observation arrives.
    std::shared_ptr<ScriptedModel> agent = std::make_shared<ScriptedModel>(
        std::vector<ScriptedExchange>{when("Observation from", "<think>enough</think>\nFINAL_ANSWER: Revisit recursion first."),
                                      any("<think>check prerequisites</think>\n" + agent_tool_call("induction"))},
        "agent");
    std::shared_ptr<ScriptedModel> vision;

    ServiceModels models() const { return {generator, judge, agent, vision}; }
};

inline ServiceConfig test_config(const std::filesystem::path& store_root) {
    ServiceConfig c;
    c.question_bank_path = fixture("question_bank.json");
    c.prerequisite_map_path = fixture("topics.json");
    c.store_root = store_root;
    return c;
}

inline ToolRegistry test_registry() {
    auto graph = std::make_shared<TopicGraph>(load_topic_graph(fixture("topics.json").string()));
    return make_default_registry({nullptr, nullptr, graph, nullptr});
}

inline std::unique_ptr<FeedbackService> make_test_service(const std::filesystem::path& store_root,
                                                          const ScriptedBackends& backends,
                                                          ServiceConfig config = {}) {
    if (config.question_bank_path.empty()) config = test_config(store_root);
    config.store_root = store_root;
    return std::make_unique<FeedbackService>(config, backends.models(), test_registry(),
                                             load_question_bank(fixture("question_bank.json")));
}

// Serves an HttpServer from a background thread for the lifetime of the object.
class RunningServer {
public:
    explicit RunningServer(FeedbackService& service) : server_(service) {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        while (!server_.is_running()) std::this_thread::yield();
    }
    ~RunningServer() {
        server_.stop();
        thread_.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(10, 0);
        return c;
    }
    int port() const { return port_; }

private:
    HttpServer server_;
    int port_ = 0;
    std::thread thread_;
};

struct SseEvent {
    std::string name;
    Json data;
};

inline std::vector<SseEvent> parse_sse(const std::string& body) {
    std::vector<SseEvent> events;
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto end = body.find("\n\n", pos);
        if (end == std::string::npos) end = body.size();
        const std::string block = body.substr(pos, end - pos);
        pos = end + 2;
        SseEvent event;
        std::istringstream lines(block);
        for (std::string line; std::getline(lines, line);) {
            if (line.rfind("event: ", 0) == 0) event.name = line.substr(7);
            if (line.rfind("data: ", 0) == 0) event.data = Json::parse(line.substr(6));
        }
        if (!event.name.empty()) events.push_back(std::move(event));
    }
    return events;
}

}  // namespace coach::testing
