#include "coach/prompts.hpp"

#include <fstream>
#include <sstream>

#include "coach/errors.hpp"

namespace coach {

namespace {

constexpr const char* kFeedbackSystem = R"(You are a mathematics teaching assistant who writes formative feedback on student solutions.
Feedback must help the student see where they are going, how they are doing, and where to go next.
Be specific to this student's solution, encouraging, and precise. Never simply hand over the full solution.)";

constexpr const char* kFeedbackGeneration = R"(Question:
{{question}}

Reference solution (for your eyes only):
{{reference_solution}}

Student solution:
{{student_solution}}

Write a feedback report with exactly these five sections, each introduced by its marker on its own line:

{{sections}}

current_state: diagnose what the student has achieved and what is missing or wrong, relative to the goal of the task.
task_next_steps: concrete corrections or additions to this solution.
strategy_next_steps: strategies and methods that would help on this kind of problem.
self_regulated_next_steps: prompts that help the student plan, monitor, and check their own work.
praise: acknowledge what the student did well, specifically.

If the student solution is empty, say so in current_state and help the student get started.)";

constexpr const char* kFeedbackRegeneration = R"(Question:
{{question}}

Reference solution (for your eyes only):
{{reference_solution}}

Student solution:
{{student_solution}}

A reviewer found problems in some sections of your feedback. Rewrite ONLY the sections below, addressing every listed problem.

{{failing_components}}

Reply with exactly these sections, each introduced by its marker on its own line:

{{sections}})";

constexpr const char* kJudgeSystem = R"(You evaluate formative feedback against a rubric. For every criterion you are asked about, give a binary judgment.
When a criterion fails, explain the specific deficiency so the author can fix it.)";

constexpr const char* kFeedbackJudge = R"(Question:
{{question}}

Reference solution:
{{reference_solution}}

Student solution:
{{student_solution}}

Feedback report:
{{report}}

Judge the report on these criteria:
{{criteria}}

Reply with a single block of this form, one key per criterion listed above:

```judge_verdict
{{example}}
```)";

constexpr const char* kAgentSystem = R"(You are a tutor answering a student's follow-up questions about the feedback they received.
Reason step by step, call tools to ground your answer in the course, and then answer.

To call a tool, reply with exactly one block:

```tool_call
{"tool": "<tool name>", "arguments": { ... }}
```

When you have enough information, reply with:

FINAL_ANSWER: <your answer to the student>

Available tools:
{{tools}})";

constexpr const char* kAgentUser = R"(Feedback report the student received:
{{report}}
{{history}}
Student question:
{{question}})";

constexpr const char* kAgentForcedAnswer = R"(The tool budget for this question is exhausted. Do not call any more tools.
Answer the student now using what you have, starting with FINAL_ANSWER:)";

constexpr const char* kInteractiveJudge = R"(Evaluate a tutor's answer to a student's follow-up question.

Feedback report the student received:
{{report}}

Student question:
{{question}}

Tool activity:
{{tool_activity}}

Final answer:
{{answer}}

Criteria:
relevance: the answer addresses the student's question.
actionability: the answer gives concrete guidance the student can act on.
tool_relevance: the tools selected were appropriate for the question.
correctness: the answer is factually consistent with the course material and the task.

Reply with a single block:

```judge_verdict
{"relevance": "pass", "actionability": "pass", "tool_relevance": "pass", "correctness": "pass"}
```
using "fail" where a criterion is not met.)";

constexpr const char* kTranscription = R"(Transcribe the handwritten mathematics in this image into plain text with LaTeX for formulas.
Preserve the student's structure and mistakes exactly; do not correct anything.)";

}  // namespace

std::string render_template(std::string_view text, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) throw ValidationError("unterminated placeholder in prompt template");
        out.append(text.substr(pos, open - pos));
        const std::string name(text.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end()) throw ValidationError("unknown prompt placeholder: " + name);
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    lib.set(std::string(prompt_id::feedback_system), kFeedbackSystem);
    lib.set(std::string(prompt_id::feedback_generation), kFeedbackGeneration);
    lib.set(std::string(prompt_id::feedback_regeneration), kFeedbackRegeneration);
    lib.set(std::string(prompt_id::judge_system), kJudgeSystem);
    lib.set(std::string(prompt_id::feedback_judge), kFeedbackJudge);
    lib.set(std::string(prompt_id::agent_system), kAgentSystem);
    lib.set(std::string(prompt_id::agent_user), kAgentUser);
    lib.set(std::string(prompt_id::agent_forced_answer), kAgentForcedAnswer);
    lib.set(std::string(prompt_id::interactive_judge), kInteractiveJudge);
    lib.set(std::string(prompt_id::transcription), kTranscription);
    return lib;
}

PromptLibrary PromptLibrary::with_overrides(const std::filesystem::path& directory) {
    PromptLibrary lib = defaults();
    if (!std::filesystem::is_directory(directory)) {
        throw ValidationError("prompt directory does not exist: " + directory.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(directory)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path());
        std::stringstream buf;
        buf << in.rdbuf();
        lib.set(entry.path().stem().string(), buf.str());
    }
    return lib;
}

const std::string& PromptLibrary::get(std::string_view id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw ValidationError("unknown prompt template: " + std::string(id));
    return it->second;
}

void PromptLibrary::set(std::string id, std::string text) { templates_[std::move(id)] = std::move(text); }

std::string PromptLibrary::render(std::string_view id, const std::map<std::string, std::string>& vars) const {
    return render_template(get(id), vars);
}

}  // namespace coach
