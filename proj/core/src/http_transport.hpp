#pragma once

// Minimal JSON-over-HTTP client shared by the remote chat, embedding, and
// vision backends. Kept out of the public headers so only one translation
// unit pulls in the HTTP library.

#include <optional>
#include <string>

#include "coach/domain.hpp"
#include "coach/gateway.hpp"

namespace coach::detail {

// POSTs body to url, retrying connection failures, 429 and 5xx responses with
// exponential backoff. Throws TransportError once attempts are exhausted.
Json post_json(const std::string& url,
               const Json& body,
               const std::optional<std::string>& bearer_token,
               const RetryPolicy& retry);

// Reads the bearer token from the named environment variable, if any.
std::optional<std::string> bearer_from_env(const std::optional<std::string>& env_var);

}  // namespace coach::detail
