#include "http_transport.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace coach::detail {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("invalid endpoint url: " + url, 0);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::optional<std::string> bearer_from_env(const std::optional<std::string>& env_var) {
    if (!env_var || env_var->empty()) return std::nullopt;
    const char* value = std::getenv(env_var->c_str());
    if (value == nullptr || *value == '\0') return std::nullopt;
    return std::string(value);
}

Json post_json(const std::string& url,
               const Json& body,
               const std::optional<std::string>& bearer_token,
               const RetryPolicy& retry) {
    const auto [origin, path] = split_url(url);
    const int attempts = std::max(1, retry.attempts);
    const std::string payload = body.dump();
    auto backoff = retry.initial_backoff;
    std::string last_error;

    for (int attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(origin);
        const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(retry.request_timeout);
        const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(retry.request_timeout - seconds);
        client.set_connection_timeout(seconds.count(), micros.count());
        client.set_read_timeout(seconds.count(), micros.count());
        client.set_write_timeout(seconds.count(), micros.count());
        httplib::Headers headers;
        if (bearer_token) headers.emplace("Authorization", "Bearer " + *bearer_token);

        auto result = client.Post(path, headers, payload, "application/json");
        if (!result) {
            last_error = "request to " + url + " failed: " + httplib::to_string(result.error());
        } else if (result->status >= 200 && result->status < 300) {
            try {
                return Json::parse(result->body);
            } catch (const Json::parse_error& e) {
                throw TransportError("malformed response from " + url + ": " + e.what(), attempt);
            }
        } else if (result->status == 429 || result->status >= 500) {
            last_error = "HTTP " + std::to_string(result->status) + " from " + url;
        } else {
            throw TransportError("HTTP " + std::to_string(result->status) + " from " + url + ": " + result->body,
                                 attempt);
        }
        if (attempt < attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw TransportError(last_error, attempts);
}

}  // namespace coach::detail
