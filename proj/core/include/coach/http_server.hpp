#pragma once

// JSON-over-HTTP front end for FeedbackService. Chat replies stream as
// server-sent events: one "step" event per completed trajectory step, then
// a single "answer" event (or "error").

#include <memory>
#include <string>

#include "coach/service.hpp"

namespace coach {

class HttpServer {
public:
    explicit HttpServer(FeedbackService& service);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Blocks until stop(). Returns false if the address cannot be bound.
    bool listen(const std::string& host, int port);

    // For tests: bind an ephemeral port, then serve from another thread.
    int bind_to_any_port(const std::string& host);
    bool listen_after_bind();

    void stop();
    bool is_running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Status code and JSON error body for an exception escaping the service.
std::pair<int, Json> describe_error(const std::exception& e);

}  // namespace coach
