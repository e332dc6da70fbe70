#include "coach/gateway.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "coach/serialization.hpp"
#include "http_transport.hpp"

namespace coach {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

std::optional<Role> role_from_string(std::string_view name) {
    for (Role r : {Role::system, Role::user, Role::assistant, Role::tool}) {
        if (to_string(r) == name) return r;
    }
    return std::nullopt;
}

std::vector<std::string> validate_backend(const BackendDescriptor& backend) {
    std::vector<std::string> out;
    if (backend.kind == BackendKind::remote_chat_endpoint && (!backend.endpoint_url || backend.endpoint_url->empty())) {
        out.emplace_back("remote backend requires endpoint_url");
    }
    if (backend.kind == BackendKind::scripted) {
        if (!backend.script) {
            out.emplace_back("scripted backend requires script");
        } else {
            std::set<int> ordinals;
            for (const auto& ex : *backend.script) {
                if (const auto* o = std::get_if<ScriptMatchOrdinal>(&ex.match)) {
                    if (!ordinals.insert(o->ordinal).second) {
                        out.push_back("duplicate script ordinal: " + std::to_string(o->ordinal));
                    }
                }
            }
        }
    }
    return out;
}

// --- JSON forms ------------------------------------------------------------

void to_json(Json& out, const ScriptedExchange& v) {
    Json match;
    if (std::holds_alternative<ScriptMatchAny>(v.match)) {
        match = "any";
    } else if (const auto* s = std::get_if<ScriptMatchSubstring>(&v.match)) {
        match = Json{{"substring", s->text}};
    } else {
        match = Json{{"ordinal", std::get<ScriptMatchOrdinal>(v.match).ordinal}};
    }
    out = Json{{"match", match}, {"response", v.response}};
}

void from_json(const Json& in, ScriptedExchange& v) {
    if (!in.is_object()) throw ParseError("ScriptedExchange: expected an object");
    for (auto it = in.begin(); it != in.end(); ++it) {
        if (it.key() != "match" && it.key() != "response") throw ParseError("ScriptedExchange." + it.key() + ": unknown field");
    }
    if (!in.contains("response") || !in["response"].is_string()) throw ParseError("ScriptedExchange.response: expected string");
    v.response = in["response"].get<std::string>();
    const Json match = in.value("match", Json("any"));
    if (match.is_string() && match.get<std::string>() == "any") {
        v.match = ScriptMatchAny{};
    } else if (match.is_object() && match.size() == 1 && match.contains("substring") && match["substring"].is_string()) {
        v.match = ScriptMatchSubstring{match["substring"].get<std::string>()};
    } else if (match.is_object() && match.size() == 1 && match.contains("ordinal") && match["ordinal"].is_number_integer()) {
        v.match = ScriptMatchOrdinal{match["ordinal"].get<int>()};
    } else {
        throw ParseError("ScriptedExchange.match: expected \"any\", {\"substring\": text} or {\"ordinal\": n}");
    }
}

void to_json(Json& out, const BackendDescriptor& v) {
    out = Json{{"kind", v.kind == BackendKind::scripted ? "scripted" : "remote_chat_endpoint"},
               {"model_name", v.model_name}};
    if (v.endpoint_url) out["endpoint_url"] = *v.endpoint_url;
    if (v.auth_token_env_var) out["auth_token_env_var"] = *v.auth_token_env_var;
    if (v.script) out["script"] = *v.script;
    out["retry"] = Json{{"attempts", v.retry.attempts},
                        {"initial_backoff_ms", v.retry.initial_backoff.count()},
                        {"request_timeout_ms", v.retry.request_timeout.count()}};
}

void from_json(const Json& in, BackendDescriptor& v) {
    if (!in.is_object()) throw ParseError("BackendDescriptor: expected an object");
    static const std::set<std::string> known = {"kind",   "endpoint_url", "model_name", "auth_token_env_var",
                                                "script", "script_path",  "retry",      "reasoning_delimiters"};
    for (auto it = in.begin(); it != in.end(); ++it) {
        if (known.count(it.key()) == 0) throw ParseError("BackendDescriptor." + it.key() + ": unknown field");
    }
    v = BackendDescriptor{};
    const std::string kind = in.value("kind", "");
    if (kind == "scripted") {
        v.kind = BackendKind::scripted;
    } else if (kind == "remote_chat_endpoint") {
        v.kind = BackendKind::remote_chat_endpoint;
    } else {
        throw ParseError("BackendDescriptor.kind: expected \"scripted\" or \"remote_chat_endpoint\"");
    }
    v.model_name = in.value("model_name", "");
    if (in.contains("endpoint_url")) v.endpoint_url = in["endpoint_url"].get<std::string>();
    if (in.contains("auth_token_env_var")) v.auth_token_env_var = in["auth_token_env_var"].get<std::string>();
    if (in.contains("script")) {
        v.script = in["script"].get<std::vector<ScriptedExchange>>();
    } else if (in.contains("script_path")) {
        v.script = load_script(in["script_path"].get<std::string>());
    }
    if (in.contains("retry")) {
        const Json& r = in["retry"];
        v.retry.attempts = r.value("attempts", v.retry.attempts);
        v.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", 500));
        v.retry.request_timeout = std::chrono::milliseconds(r.value("request_timeout_ms", 120000));
    }
    if (in.contains("reasoning_delimiters")) {
        const Json& d = in["reasoning_delimiters"];
        if (!d.is_array() || d.size() != 2) throw ParseError("BackendDescriptor.reasoning_delimiters: expected [open, close]");
        v.reasoning_open = d[0].get<std::string>();
        v.reasoning_close = d[1].get<std::string>();
    }
    auto violations = validate_backend(v);
    if (!violations.empty()) throw ParseError("BackendDescriptor: " + violations.front());
}

std::vector<ScriptedExchange> load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read script file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_document<std::vector<ScriptedExchange>>(buf.str());
}

// --- Backends --------------------------------------------------------------

ScriptedModel::ScriptedModel(std::vector<ScriptedExchange> script, std::string name)
    : script_(std::move(script)), name_(std::move(name)) {}

std::string ScriptedModel::complete(const std::vector<ChatMessage>& messages, const GenerationParams&) {
    std::lock_guard lock(mutex_);
    calls_.push_back(messages);
    const int ordinal = static_cast<int>(calls_.size());
    const std::string& last = messages.empty() ? std::string() : messages.back().content;

    const ScriptedExchange* by_substring = nullptr;
    const ScriptedExchange* by_any = nullptr;
    for (const auto& ex : script_) {
        if (const auto* o = std::get_if<ScriptMatchOrdinal>(&ex.match)) {
            if (o->ordinal == ordinal) return ex.response;
        } else if (const auto* s = std::get_if<ScriptMatchSubstring>(&ex.match)) {
            if (by_substring == nullptr && last.find(s->text) != std::string::npos) by_substring = &ex;
        } else if (by_any == nullptr) {
            by_any = &ex;
        }
    }
    if (by_substring != nullptr) return by_substring->response;
    if (by_any != nullptr) return by_any->response;
    throw ScriptError(name_ + ": script exhausted at call " + std::to_string(ordinal));
}

std::size_t ScriptedModel::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_.size();
}

std::vector<std::vector<ChatMessage>> ScriptedModel::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

RemoteChatModel::RemoteChatModel(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    if (!descriptor_.endpoint_url) throw ValidationError("remote backend requires endpoint_url");
}

std::string RemoteChatModel::complete(const std::vector<ChatMessage>& messages, const GenerationParams& params) {
    Json wire_messages = Json::array();
    for (const auto& m : messages) {
        if (m.image_urls.empty()) {
            wire_messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
        } else {
            Json parts = Json::array();
            if (!m.content.empty()) parts.push_back({{"type", "text"}, {"text", m.content}});
            for (const auto& url : m.image_urls) parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
            wire_messages.push_back({{"role", std::string(to_string(m.role))}, {"content", parts}});
        }
    }
    Json body{{"model", descriptor_.model_name},
              {"messages", wire_messages},
              {"temperature", params.temperature},
              {"max_tokens", params.max_output_tokens}};
    if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;

    const Json response =
        detail::post_json(*descriptor_.endpoint_url, body, detail::bearer_from_env(descriptor_.auth_token_env_var),
                          descriptor_.retry);
    try {
        const Json& message = response.at("choices").at(0).at("message");
        std::string content;
        if (message.contains("content") && message["content"].is_string()) content = message["content"].get<std::string>();
        // Servers that split reasoning out of the content get it folded back in
        // so extraction works the same for every backend.
        if (message.contains("reasoning_content") && message["reasoning_content"].is_string()) {
            content = descriptor_.reasoning_open + message["reasoning_content"].get<std::string>() +
                      descriptor_.reasoning_close + content;
        }
        return content;
    } catch (const Json::exception& e) {
        throw TransportError(std::string("unexpected chat response shape: ") + e.what(), 1);
    }
}

std::shared_ptr<ChatModel> make_chat_model(const BackendDescriptor& descriptor) {
    auto violations = validate_backend(descriptor);
    if (!violations.empty()) throw ValidationError(violations.front());
    if (descriptor.kind == BackendKind::scripted) {
        return std::make_shared<ScriptedModel>(*descriptor.script,
                                               descriptor.model_name.empty() ? "scripted" : descriptor.model_name);
    }
    return std::make_shared<RemoteChatModel>(descriptor);
}

ModelTurn extract_reasoning(std::string_view raw, std::string_view open, std::string_view close) {
    ModelTurn turn;
    std::string visible;
    std::string reasoning;
    bool found = false;
    std::size_t pos = 0;
    while (pos < raw.size()) {
        const auto start = raw.find(open, pos);
        if (start == std::string_view::npos) {
            visible.append(raw.substr(pos));
            break;
        }
        visible.append(raw.substr(pos, start - pos));
        const auto body = start + open.size();
        auto end = raw.find(close, body);
        found = true;
        if (!reasoning.empty()) reasoning += "\n";
        if (end == std::string_view::npos) {
            reasoning.append(trim(raw.substr(body)));
            pos = raw.size();
        } else {
            reasoning.append(trim(raw.substr(body, end - body)));
            pos = end + close.size();
        }
    }
    // Some servers strip the opening tag and leave only the closing one.
    if (!found) {
        const auto end = raw.find(close);
        if (end != std::string_view::npos) {
            found = true;
            reasoning = std::string(trim(raw.substr(0, end)));
            visible = std::string(raw.substr(end + close.size()));
        }
    }
    turn.text = std::string(trim(visible));
    if (found) turn.reasoning_summary = reasoning;
    return turn;
}

ModelTurn complete_chat(ChatModel& model,
                        const std::vector<ChatMessage>& messages,
                        const GenerationParams& params,
                        std::string_view reasoning_open,
                        std::string_view reasoning_close) {
    if (messages.empty()) throw ValidationError("complete_chat requires at least one message");
    return extract_reasoning(model.complete(messages, params), reasoning_open, reasoning_close);
}

// --- Structured output -----------------------------------------------------

namespace {

struct FencedBlock {
    std::size_t begin = 0;  // position of the opening fence
    std::size_t end = 0;    // one past the closing fence
    std::string_view body;
};

// Every "```<sentinel>" block in text, or a ParseFailure for an unclosed one.
std::variant<std::vector<FencedBlock>, ParseFailure> find_blocks(std::string_view text, std::string_view sentinel) {
    std::vector<FencedBlock> blocks;
    const std::string opener = "```" + std::string(sentinel);
    std::size_t pos = 0;
    while ((pos = text.find(opener, pos)) != std::string_view::npos) {
        const auto body_start = pos + opener.size();
        const auto close = text.find("```", body_start);
        if (close == std::string_view::npos) return ParseFailure{"unbalanced fence: " + std::string(sentinel) + " block is not closed"};
        blocks.push_back({pos, close + 3, text.substr(body_start, close - body_start)});
        pos = close + 3;
    }
    return blocks;
}

std::variant<ToolCall, ParseFailure> decode_tool_block(std::string_view text, const FencedBlock& block) {
    Json doc;
    try {
        doc = Json::parse(trim(block.body));
    } catch (const Json::parse_error& e) {
        return ParseFailure{std::string("tool_call block is not valid JSON: ") + e.what()};
    }
    if (!doc.is_object()) return ParseFailure{"tool_call block must be an object"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (it.key() != "tool" && it.key() != "arguments") return ParseFailure{"unexpected key in tool_call: " + it.key()};
    }
    if (!doc.contains("tool")) return ParseFailure{"missing key: tool"};
    if (!doc["tool"].is_string() || doc["tool"].get<std::string>().empty()) return ParseFailure{"tool must be a non-empty string"};
    if (!doc.contains("arguments")) return ParseFailure{"missing key: arguments"};
    if (!doc["arguments"].is_object()) return ParseFailure{"arguments must be an object"};
    return ToolCall{doc["tool"].get<std::string>(), doc["arguments"],
                    std::string(text.substr(block.begin, block.end - block.begin))};
}

}  // namespace

ParsedAction parse_tool_call(std::string_view turn_text, const std::set<std::string>& registry_names) {
    auto found = find_blocks(turn_text, kToolCallSentinel);
    if (auto* failure = std::get_if<ParseFailure>(&found)) return *failure;
    const auto& blocks = std::get<std::vector<FencedBlock>>(found);

    if (!blocks.empty()) {
        std::optional<ParsedAction> first;
        for (const auto& block : blocks) {
            auto decoded = decode_tool_block(turn_text, block);
            if (auto* failure = std::get_if<ParseFailure>(&decoded)) {
                if (!first) first = *failure;
                continue;
            }
            auto call = std::get<ToolCall>(std::move(decoded));
            if (registry_names.empty() || registry_names.count(call.tool_name) > 0) return call;
            if (!first) first = std::move(call);
        }
        return *first;
    }

    const auto marker = turn_text.find(kFinalAnswerSentinel);
    if (marker != std::string_view::npos) {
        const auto answer = trim(turn_text.substr(marker + kFinalAnswerSentinel.size()));
        if (answer.empty()) return ParseFailure{"empty final answer"};
        return FinalAnswer{std::string(answer)};
    }
    if (turn_text.find("```") != std::string_view::npos && turn_text.find("{") != std::string_view::npos) {
        return ParseFailure{"fenced block without the tool_call sentinel"};
    }
    return ParseFailure{"no tool_call block or FINAL_ANSWER found"};
}

std::string render_tool_call(const std::string& tool_name, const Json& arguments) {
    Json doc{{"tool", tool_name}, {"arguments", arguments}};
    return "```" + std::string(kToolCallSentinel) + "\n" + doc.dump() + "\n```";
}

ToolCall make_tool_call(const std::string& tool_name, Json arguments) {
    std::string raw = render_tool_call(tool_name, arguments);
    return ToolCall{tool_name, std::move(arguments), std::move(raw)};
}

std::string render_final_answer(std::string_view text) {
    return std::string(kFinalAnswerSentinel) + " " + std::string(text);
}

namespace {

Json single_verdict_block(std::string_view turn_text) {
    auto found = find_blocks(turn_text, kJudgeVerdictSentinel);
    if (auto* failure = std::get_if<ParseFailure>(&found)) throw ParseError(failure->detail);
    const auto& blocks = std::get<std::vector<FencedBlock>>(found);
    if (blocks.empty()) throw ParseError("no judge_verdict block found");
    Json doc;
    try {
        doc = Json::parse(trim(blocks.back().body));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("judge_verdict block is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("judge_verdict block must be an object");
    return doc;
}

// Accepts "pass" / "fail" or {"verdict": ..., "explanation": ...}.
std::pair<Verdict, std::optional<std::string>> read_judgment(const std::string& name, const Json& value) {
    if (value.is_string()) {
        auto v = verdict_from_string(value.get<std::string>());
        if (!v) throw ParseError(name + ": expected \"pass\" or \"fail\"");
        return {*v, std::nullopt};
    }
    if (value.is_object() && value.contains("verdict") && value["verdict"].is_string()) {
        auto v = verdict_from_string(value["verdict"].get<std::string>());
        if (!v) throw ParseError(name + ": expected \"pass\" or \"fail\"");
        std::optional<std::string> explanation;
        if (value.contains("explanation") && value["explanation"].is_string()) {
            explanation = value["explanation"].get<std::string>();
        }
        return {*v, explanation};
    }
    throw ParseError(name + ": expected \"pass\", \"fail\" or {\"verdict\", \"explanation\"}");
}

}  // namespace

JudgeVerdict parse_judge_verdict(std::string_view turn_text, const std::set<RubricCriterion>& judged_criteria) {
    if (judged_criteria.empty()) throw ValidationError("parse_judge_verdict requires judged criteria");
    const Json doc = single_verdict_block(turn_text);
    const Json explanations = doc.value("explanations", Json::object());
    if (!explanations.is_object()) throw ParseError("explanations must be an object");

    JudgeVerdict verdict;
    verdict.judged_criteria = judged_criteria;
    for (RubricCriterion c : judged_criteria) {
        const std::string name(to_string(c));
        if (!doc.contains(name)) throw ParseError("missing criterion: " + name);
        auto [v, inline_explanation] = read_judgment(name, doc[name]);
        verdict.judgments[c] = v;
        if (v == Verdict::fail) {
            std::optional<std::string> explanation = inline_explanation;
            if (!explanation && explanations.contains(name) && explanations[name].is_string()) {
                explanation = explanations[name].get<std::string>();
            }
            if (!explanation || trim(*explanation).empty()) throw ParseError("missing explanation: " + name);
            verdict.explanations[c] = std::string(trim(*explanation));
        }
    }
    return verdict;
}

InteractiveVerdict parse_interactive_verdict(std::string_view turn_text) {
    const Json doc = single_verdict_block(turn_text);
    InteractiveVerdict verdict;
    for (InteractiveCriterion c : kAllInteractiveCriteria) {
        const std::string name(to_string(c));
        if (!doc.contains(name)) throw ParseError("missing criterion: " + name);
        verdict.judgments[c] = read_judgment(name, doc[name]).first;
    }
    return verdict;
}

std::string render_judge_verdict(const JudgeVerdict& verdict) {
    Json doc = Json::object();
    for (const auto& [c, v] : verdict.judgments) {
        const std::string name(to_string(c));
        if (v == Verdict::fail) {
            doc[name] = Json{{"verdict", "fail"}, {"explanation", verdict.explanations.at(c)}};
        } else {
            doc[name] = "pass";
        }
    }
    return "```" + std::string(kJudgeVerdictSentinel) + "\n" + doc.dump() + "\n```";
}

std::string section_sentinel(ComponentKind kind) { return "[[section:" + std::string(to_string(kind)) + "]]"; }

std::map<ComponentKind, std::string> parse_feedback_sections(std::string_view text,
                                                             const std::vector<ComponentKind>& required) {
    struct Hit {
        std::size_t pos;
        ComponentKind kind;
    };
    std::vector<Hit> hits;
    for (ComponentKind kind : kAllComponents) {
        const auto sentinel = section_sentinel(kind);
        const auto pos = text.find(sentinel);
        if (pos != std::string_view::npos) hits.push_back({pos, kind});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });

    std::map<ComponentKind, std::string> sections;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto body = hits[i].pos + section_sentinel(hits[i].kind).size();
        const auto end = i + 1 < hits.size() ? hits[i + 1].pos : text.size();
        sections[hits[i].kind] = std::string(trim(text.substr(body, end - body)));
    }
    for (ComponentKind kind : required) {
        auto it = sections.find(kind);
        if (it == sections.end()) throw ParseError("missing section: " + std::string(to_string(kind)));
        if (it->second.empty()) throw ParseError("empty section: " + std::string(to_string(kind)));
    }
    return sections;
}

std::string render_feedback_sections(const std::map<ComponentKind, std::string>& components) {
    std::string out;
    for (const auto& [kind, text] : components) {
        if (!out.empty()) out += "\n\n";
        out += section_sentinel(kind) + "\n" + text;
    }
    return out;
}

}  // namespace coach
