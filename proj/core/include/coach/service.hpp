#pragma once

// The classroom workflow behind the HTTP API: sessions, transcription,
// solution submission with refined feedback, follow-up chat, and metrics.
// Per-session writes (submit, chat) are exclusive; reads never block.

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coach/agent.hpp"
#include "coach/analytics.hpp"
#include "coach/domain.hpp"
#include "coach/feedback_loop.hpp"
#include "coach/gateway.hpp"
#include "coach/prompts.hpp"
#include "coach/retrieval.hpp"
#include "coach/store.hpp"
#include "coach/toolbox.hpp"

namespace coach {

class ConflictError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class UnavailableError : public Error {
public:
    using Error::Error;
};

// Refinement failed; the partial trace was stored under trace_id.
class SubmissionError : public Error {
public:
    SubmissionError(const std::string& what, std::string trace_id) : Error(what), trace_id_(std::move(trace_id)) {}
    const std::string& trace_id() const noexcept { return trace_id_; }

private:
    std::string trace_id_;
};

struct StudyMode {
    bool enabled = false;
    int min_questions = 3;
};

struct ServiceConfig {
    std::string listen_address = "127.0.0.1:8080";
    std::filesystem::path question_bank_path;
    std::optional<std::filesystem::path> corpus_index_path;
    std::optional<std::filesystem::path> prerequisite_map_path;
    std::optional<std::filesystem::path> behaviour_descriptor_path;
    std::optional<std::filesystem::path> prompts_dir;
    EmbedderDescriptor embedder = EmbedderDescriptor::fake(256);
    BackendDescriptor generation_backend;
    BackendDescriptor judge_backend;
    BackendDescriptor agent_backend;
    std::optional<BackendDescriptor> vision_backend;  // absent: transcription disabled
    RefinementConfig refinement = deployment_preset();
    AgentLimits agent_limits;
    std::filesystem::path store_root = "store";
    StudyMode study_mode;
    int max_concurrent_model_calls = 0;  // 0: unlimited
};

// Relative paths are resolved against base_dir.
ServiceConfig service_config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});

// Reads the file and resolves relative paths against its directory.
ServiceConfig load_service_config(const std::filesystem::path& path);

// Missing referenced files, bad limits, ...
std::vector<std::string> validate_service_config(const ServiceConfig& config);

std::pair<std::string, int> split_listen_address(const std::string& address);

// A JSON array of contexts without student solutions.
std::vector<FeedbackContext> load_question_bank(const std::filesystem::path& path);

struct ServiceModels {
    std::shared_ptr<ChatModel> generator;
    std::shared_ptr<ChatModel> judge;
    std::shared_ptr<ChatModel> agent;
    std::shared_ptr<ChatModel> vision;  // may be null
};

struct SubmitResult {
    FeedbackReport report;
    int iterations_used = 0;
    RefinementTermination termination = RefinementTermination::all_pass;
    std::string report_id;
    std::string trace_id;
};

struct ChatResult {
    std::string trajectory_id;
    Trajectory trajectory;
};

struct SessionView {
    Session session;
    bool completed = false;
    int questions_asked = 0;
};

struct ServiceMetrics {
    int sessions = 0;
    int reports = 0;        // sessions holding a report
    int conversations = 0;  // sessions with at least one trajectory
    int trajectories = 0;
    std::optional<double> conversation_rate;
    std::optional<StepMetrics> step_metrics;
};

Json to_json_value(const SubmitResult& result);
Json to_json_value(const SessionView& view);
Json to_json_value(const ServiceMetrics& metrics);

std::string base64_encode(std::string_view bytes);

class FeedbackService;

// Exclusive right to run one write on a session; released on destruction.
class SessionLease {
public:
    SessionLease(SessionLease&& other) noexcept;
    SessionLease& operator=(SessionLease&&) = delete;
    SessionLease(const SessionLease&) = delete;
    ~SessionLease();

    const std::string& session_id() const { return session_id_; }

private:
    friend class FeedbackService;
    SessionLease(FeedbackService* owner, std::string session_id);

    FeedbackService* owner_;
    std::string session_id_;
};

class FeedbackService {
public:
    FeedbackService(ServiceConfig config,
                    ServiceModels models,
                    ToolRegistry registry,
                    std::vector<FeedbackContext> question_bank,
                    PromptLibrary prompts = PromptLibrary::defaults());

    // Loads every referenced resource and builds the configured backends.
    static std::unique_ptr<FeedbackService> from_config(const ServiceConfig& config);

    const ServiceConfig& config() const { return config_; }
    const ToolRegistry& registry() const { return registry_; }
    SessionStore& store() { return store_; }

    Session create_session(const std::string& course_id, const std::string& question_id);
    std::string transcribe(const std::string& session_id, std::string_view image_bytes, const std::string& mime_type);
    Session update_transcript(const std::string& session_id, const std::string& transcript);
    SubmitResult submit_solution(const std::string& session_id, const std::string& solution, bool blank = false);

    // Fails fast with ConflictError/PreconditionError before any streaming.
    SessionLease reserve_chat(const std::string& session_id);
    // The trajectory is persisted before this returns.
    ChatResult run_chat(SessionLease lease, const std::string& message, const StepCallback& on_step = {});
    ChatResult chat(const std::string& session_id, const std::string& message, const StepCallback& on_step = {});

    SessionView get_session(const std::string& session_id) const;
    Trajectory get_trajectory(const std::string& session_id, const std::string& trajectory_id) const;
    ServiceMetrics get_metrics() const;

private:
    friend class SessionLease;
    SessionLease acquire(const std::string& session_id);
    void release(const std::string& session_id);
    const FeedbackContext& question(const std::string& question_id) const;

    ServiceConfig config_;
    ServiceModels models_;
    ToolRegistry registry_;
    std::vector<FeedbackContext> question_bank_;
    PromptLibrary prompts_;
    SessionStore store_;

    mutable std::mutex busy_mutex_;
    std::set<std::string> busy_;
};

}  // namespace coach
