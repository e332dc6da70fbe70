#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace coach {

namespace prompt_id {
inline constexpr std::string_view feedback_system = "feedback_system.v1";
inline constexpr std::string_view feedback_generation = "feedback_generation.v1";
inline constexpr std::string_view feedback_regeneration = "feedback_regeneration.v1";
inline constexpr std::string_view judge_system = "judge_system.v1";
inline constexpr std::string_view feedback_judge = "feedback_judge.v1";
inline constexpr std::string_view agent_system = "agent_system.v1";
inline constexpr std::string_view agent_user = "agent_user.v1";
inline constexpr std::string_view agent_forced_answer = "agent_forced_answer.v1";
inline constexpr std::string_view interactive_judge = "interactive_judge.v1";
inline constexpr std::string_view transcription = "transcription.v1";
}  // namespace prompt_id

// Substitutes "{{name}}" placeholders. Unknown placeholders are an error so a
// template edit cannot silently drop context.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& vars);

// Versioned prompt templates keyed by id. The built-in set can be overridden
// per id by "<id>.txt" files in a template directory.
class PromptLibrary {
public:
    static PromptLibrary defaults();
    static PromptLibrary with_overrides(const std::filesystem::path& directory);

    const std::string& get(std::string_view id) const;
    void set(std::string id, std::string text);
    std::string render(std::string_view id, const std::map<std::string, std::string>& vars) const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

}  // namespace coach
