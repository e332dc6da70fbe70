#pragma once

// Uniform boundary to chat-capable language models. Every agent talks to a
// ChatModel; the concrete backend is either a remote chat-completions
// endpoint or a deterministic script used for tests and offline replays.
//
// Structured model output travels in fenced blocks with fixed sentinels:
//
//   ```tool_call
//   {"tool": "lookup_course_content", "arguments": {"query": "...", "k": 3}}
//   ```
//
//   ```judge_verdict
//   {"clarity": "pass", "praise": {"verdict": "fail", "explanation": "..."}}
//   ```
//
//   FINAL_ANSWER: text shown to the student
//
// and feedback components are introduced by "[[section:<component>]]" lines.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"

namespace coach {

enum class Role { system, user, assistant, tool };

std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view name);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
    std::vector<std::string> image_urls;  // data: URLs, only sent by remote backends

    bool operator==(const ChatMessage&) const = default;
};

struct GenerationParams {
    double temperature = 0.7;
    int max_output_tokens = 2048;
    std::vector<std::string> stop_sequences;

    static GenerationParams for_generation() { return {0.7, 2048, {}}; }
    static GenerationParams for_judging() { return {0.0, 1024, {}}; }
};

struct ModelTurn {
    std::string text;
    std::optional<std::string> reasoning_summary;

    bool operator==(const ModelTurn&) const = default;
};

struct ScriptMatchAny {
    bool operator==(const ScriptMatchAny&) const = default;
};
struct ScriptMatchSubstring {
    std::string text;
    bool operator==(const ScriptMatchSubstring&) const = default;
};
struct ScriptMatchOrdinal {
    int ordinal = 1;  // 1-based call number
    bool operator==(const ScriptMatchOrdinal&) const = default;
};

struct ScriptedExchange {
    std::variant<ScriptMatchAny, ScriptMatchSubstring, ScriptMatchOrdinal> match;
    std::string response;

    bool operator==(const ScriptedExchange&) const = default;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds request_timeout{120000};
};

enum class BackendKind { remote_chat_endpoint, scripted };

struct BackendDescriptor {
    BackendKind kind = BackendKind::scripted;
    std::optional<std::string> endpoint_url;
    std::string model_name;
    std::optional<std::string> auth_token_env_var;
    std::optional<std::vector<ScriptedExchange>> script;
    RetryPolicy retry;
    std::string reasoning_open = "<think>";
    std::string reasoning_close = "</think>";
};

std::vector<std::string> validate_backend(const BackendDescriptor& backend);

void to_json(Json& out, const ScriptedExchange& v);
void from_json(const Json& in, ScriptedExchange& v);
void to_json(Json& out, const BackendDescriptor& v);
void from_json(const Json& in, BackendDescriptor& v);

// Reads a JSON list of ScriptedExchange.
std::vector<ScriptedExchange> load_script(const std::string& path);

// A live backend. Implementations are safe to call from several threads.
class ChatModel {
public:
    virtual ~ChatModel() = default;

    // Raw assistant text; reasoning has not been excised yet.
    virtual std::string complete(const std::vector<ChatMessage>& messages, const GenerationParams& params) = 0;

    virtual std::string name() const = 0;
};

// Replays a fixed script. A call is answered by the first exchange whose
// ordinal equals the call number, else the first whose substring occurs in
// the last message, else the first "any" exchange.
class ScriptedModel final : public ChatModel {
public:
    explicit ScriptedModel(std::vector<ScriptedExchange> script, std::string name = "scripted");

    std::string complete(const std::vector<ChatMessage>& messages, const GenerationParams& params) override;
    std::string name() const override { return name_; }

    std::size_t call_count() const;
    std::vector<std::vector<ChatMessage>> calls() const;

private:
    std::vector<ScriptedExchange> script_;
    std::string name_;
    mutable std::mutex mutex_;
    std::vector<std::vector<ChatMessage>> calls_;
};

// Speaks the chat-completions HTTP contract against endpoint_url.
class RemoteChatModel final : public ChatModel {
public:
    explicit RemoteChatModel(BackendDescriptor descriptor);

    std::string complete(const std::vector<ChatMessage>& messages, const GenerationParams& params) override;
    std::string name() const override { return descriptor_.model_name; }

private:
    BackendDescriptor descriptor_;
};

std::shared_ptr<ChatModel> make_chat_model(const BackendDescriptor& descriptor);

// Splits the text between the reasoning delimiters out of the visible text.
ModelTurn extract_reasoning(std::string_view raw, std::string_view open = "<think>", std::string_view close = "</think>");

// One call against the model, with reasoning excised into the turn.
ModelTurn complete_chat(ChatModel& model,
                        const std::vector<ChatMessage>& messages,
                        const GenerationParams& params,
                        std::string_view reasoning_open = "<think>",
                        std::string_view reasoning_close = "</think>");

// --- Structured output -----------------------------------------------------

struct ParseFailure {
    std::string detail;
    bool operator==(const ParseFailure&) const = default;
};

using ParsedAction = std::variant<ToolCall, FinalAnswer, ParseFailure>;

inline constexpr std::string_view kToolCallSentinel = "tool_call";
inline constexpr std::string_view kJudgeVerdictSentinel = "judge_verdict";
inline constexpr std::string_view kFinalAnswerSentinel = "FINAL_ANSWER:";

// A tool-call block wins over answer text. When several blocks appear, the
// first naming a registered tool is chosen, else the first block.
ParsedAction parse_tool_call(std::string_view turn_text, const std::set<std::string>& registry_names = {});

// The fenced block that parse_tool_call reads back as the same call.
std::string render_tool_call(const std::string& tool_name, const Json& arguments);
ToolCall make_tool_call(const std::string& tool_name, Json arguments);

std::string render_final_answer(std::string_view text);

// Throws ParseError ("missing criterion: x", "missing explanation: x", ...).
JudgeVerdict parse_judge_verdict(std::string_view turn_text, const std::set<RubricCriterion>& judged_criteria);

InteractiveVerdict parse_interactive_verdict(std::string_view turn_text);

std::string render_judge_verdict(const JudgeVerdict& verdict);

std::string section_sentinel(ComponentKind kind);

// Extracts "[[section:<name>]]" blocks. Throws ParseError naming the first
// required component that is missing or empty.
std::map<ComponentKind, std::string> parse_feedback_sections(std::string_view text,
                                                             const std::vector<ComponentKind>& required);

std::string render_feedback_sections(const std::map<ComponentKind, std::string>& components);

}  // namespace coach
