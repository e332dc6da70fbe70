#include "coach/service.hpp"

#include <condition_variable>
#include <fstream>
#include <random>
#include <sstream>

#include "coach/serialization.hpp"
#include "json_fields.hpp"

namespace coach {

namespace fs = std::filesystem;
using detail::Fields;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path resolve(const fs::path& base, const std::string& value) {
    fs::path p(value);
    return p.is_relative() && !base.empty() ? base / p : p;
}

Json backend_json(Json doc, const fs::path& base) {
    if (doc.is_object() && doc.contains("script_path") && doc["script_path"].is_string()) {
        doc["script_path"] = resolve(base, doc["script_path"].get<std::string>()).string();
    }
    return doc;
}

std::string fresh_session_id() {
    static std::mutex mutex;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 16; ++i) id += kHex[rng() % 16];
    return id;
}

// Caps the number of model calls in flight across every backend sharing it.
class Gate {
public:
    explicit Gate(int limit) : limit_(limit) {}

    void enter() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return active_ < limit_; });
        ++active_;
    }
    void leave() {
        {
            std::lock_guard lock(mutex_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int limit_;
    int active_ = 0;
};

class ThrottledModel final : public ChatModel {
public:
    ThrottledModel(std::shared_ptr<ChatModel> inner, std::shared_ptr<Gate> gate)
        : inner_(std::move(inner)), gate_(std::move(gate)) {}

    std::string complete(const std::vector<ChatMessage>& messages, const GenerationParams& params) override {
        gate_->enter();
        struct Leave {
            Gate* g;
            ~Leave() { g->leave(); }
        } leave{gate_.get()};
        return inner_->complete(messages, params);
    }
    std::string name() const override { return inner_->name(); }

private:
    std::shared_ptr<ChatModel> inner_;
    std::shared_ptr<Gate> gate_;
};

}  // namespace

std::string base64_encode(std::string_view bytes) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const unsigned n = static_cast<unsigned char>(bytes[i]) << 16 | static_cast<unsigned char>(bytes[i + 1]) << 8 |
                           static_cast<unsigned char>(bytes[i + 2]);
        out += kAlphabet[n >> 18 & 63];
        out += kAlphabet[n >> 12 & 63];
        out += kAlphabet[n >> 6 & 63];
        out += kAlphabet[n & 63];
    }
    if (i < bytes.size()) {
        unsigned n = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out += kAlphabet[n >> 18 & 63];
        out += kAlphabet[n >> 12 & 63];
        out += i + 1 < bytes.size() ? kAlphabet[n >> 6 & 63] : '=';
        out += '=';
    }
    return out;
}

// --- Configuration ---------------------------------------------------------

ServiceConfig service_config_from_json(const Json& doc, const fs::path& base_dir) {
    Fields f(doc, "ServiceConfig");
    ServiceConfig c;
    if (auto v = f.optional<std::string>("listen_address")) c.listen_address = *v;
    c.question_bank_path = resolve(base_dir, f.required<std::string>("question_bank_path"));
    if (auto v = f.optional<std::string>("corpus_index_path")) c.corpus_index_path = resolve(base_dir, *v);
    if (auto v = f.optional<std::string>("prerequisite_map_path")) c.prerequisite_map_path = resolve(base_dir, *v);
    if (auto v = f.optional<std::string>("behaviour_descriptor_path")) c.behaviour_descriptor_path = resolve(base_dir, *v);
    if (auto v = f.optional<std::string>("prompts_dir")) c.prompts_dir = resolve(base_dir, *v);
    if (auto v = f.optional<EmbedderDescriptor>("embedder")) c.embedder = *v;
    c.generation_backend = backend_json(f.raw("generation_backend"), base_dir).get<BackendDescriptor>();
    c.judge_backend = backend_json(f.raw("judge_backend"), base_dir).get<BackendDescriptor>();
    c.agent_backend = backend_json(f.raw("agent_backend"), base_dir).get<BackendDescriptor>();
    if (doc.contains("vision_backend") && !doc["vision_backend"].is_null()) {
        c.vision_backend = backend_json(f.raw("vision_backend"), base_dir).get<BackendDescriptor>();
    } else {
        f.optional<std::string>("vision_backend");
    }
    if (auto v = f.optional<RefinementConfig>("refinement")) c.refinement = *v;
    if (doc.contains("agent_limits")) {
        Fields limits(f.raw("agent_limits"), "ServiceConfig.agent_limits");
        c.agent_limits.max_steps = limits.optional<int>("max_steps").value_or(c.agent_limits.max_steps);
        c.agent_limits.max_consecutive_parse_errors =
            limits.optional<int>("max_consecutive_parse_errors").value_or(c.agent_limits.max_consecutive_parse_errors);
        limits.finish();
    }
    if (auto v = f.optional<std::string>("store_root")) c.store_root = resolve(base_dir, *v);
    else c.store_root = resolve(base_dir, "store");
    if (doc.contains("study_mode")) {
        Fields study(f.raw("study_mode"), "ServiceConfig.study_mode");
        c.study_mode.enabled = study.optional<bool>("enabled").value_or(false);
        c.study_mode.min_questions = study.optional<int>("min_questions").value_or(c.study_mode.min_questions);
        study.finish();
    }
    c.max_concurrent_model_calls = f.optional<int>("max_concurrent_model_calls").value_or(0);
    f.finish();
    return c;
}

ServiceConfig load_service_config(const fs::path& path) {
    Json doc;
    try {
        doc = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw ParseError("ServiceConfig: invalid JSON: " + std::string(e.what()));
    }
    return service_config_from_json(doc, fs::absolute(path).parent_path());
}

std::vector<std::string> validate_service_config(const ServiceConfig& c) {
    std::vector<std::string> out;
    auto must_exist = [&out](const char* field, const fs::path& p) {
        if (!fs::exists(p)) out.push_back(std::string(field) + ": no such file: " + p.string());
    };
    must_exist("question_bank_path", c.question_bank_path);
    if (c.corpus_index_path) must_exist("corpus_index_path", *c.corpus_index_path);
    if (c.prerequisite_map_path) must_exist("prerequisite_map_path", *c.prerequisite_map_path);
    if (c.behaviour_descriptor_path) must_exist("behaviour_descriptor_path", *c.behaviour_descriptor_path);
    if (c.prompts_dir) must_exist("prompts_dir", *c.prompts_dir);
    if (!c.corpus_index_path && !c.prerequisite_map_path && !c.behaviour_descriptor_path) {
        out.emplace_back("at least one tool resource must be configured");
    }
    if (c.study_mode.min_questions < 0) out.emplace_back("study_mode.min_questions: must be >= 0");
    if (c.agent_limits.max_steps < 1) out.emplace_back("agent_limits.max_steps: must be >= 1");
    if (c.agent_limits.max_consecutive_parse_errors < 1) {
        out.emplace_back("agent_limits.max_consecutive_parse_errors: must be >= 1");
    }
    if (c.max_concurrent_model_calls < 0) out.emplace_back("max_concurrent_model_calls: must be >= 0");
    try {
        split_listen_address(c.listen_address);
    } catch (const ValidationError& e) {
        out.emplace_back(e.what());
    }
    for (const auto& v : validate_config(c.refinement)) out.push_back("refinement: " + v);
    return out;
}

std::pair<std::string, int> split_listen_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ValidationError("listen_address: expected host:port");
    try {
        std::size_t used = 0;
        const int port = std::stoi(address.substr(colon + 1), &used);
        if (used != address.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range("port");
        return {address.substr(0, colon), port};
    } catch (const std::exception&) {
        throw ValidationError("listen_address: invalid port in " + address);
    }
}

std::vector<FeedbackContext> load_question_bank(const fs::path& path) {
    Json doc;
    try {
        doc = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw ParseError("question bank: invalid JSON: " + std::string(e.what()));
    }
    if (!doc.is_array()) throw ParseError("question bank: expected an array");
    std::vector<FeedbackContext> bank;
    std::set<std::string> ids;
    for (const auto& entry : doc) {
        Fields f(entry, "Question");
        FeedbackContext ctx;
        ctx.question_id = f.required<std::string>("question_id");
        ctx.question_text = f.required<std::string>("question_text");
        ctx.reference_solution = f.required<std::string>("reference_solution");
        ctx.course_id = f.required<std::string>("course_id");
        f.finish();
        if (!ids.insert(ctx.question_id).second) throw ParseError("question bank: duplicate question_id " + ctx.question_id);
        bank.push_back(std::move(ctx));
    }
    return bank;
}

// --- JSON views ------------------------------------------------------------

Json to_json_value(const SubmitResult& r) {
    return {{"report", r.report},
            {"iterations_used", r.iterations_used},
            {"termination", std::string(to_string(r.termination))},
            {"report_id", r.report_id},
            {"trace_id", r.trace_id}};
}

Json to_json_value(const SessionView& v) {
    return {{"session", v.session}, {"completed", v.completed}, {"questions_asked", v.questions_asked}};
}

Json to_json_value(const ServiceMetrics& m) {
    return {{"sessions", m.sessions},
            {"reports", m.reports},
            {"conversations", m.conversations},
            {"trajectories", m.trajectories},
            {"conversation_rate", m.conversation_rate ? Json(*m.conversation_rate) : Json(nullptr)},
            {"step_metrics", m.step_metrics ? Json(*m.step_metrics) : Json(nullptr)}};
}

// --- Leases ----------------------------------------------------------------

SessionLease::SessionLease(FeedbackService* owner, std::string session_id)
    : owner_(owner), session_id_(std::move(session_id)) {}

SessionLease::SessionLease(SessionLease&& other) noexcept
    : owner_(std::exchange(other.owner_, nullptr)), session_id_(std::move(other.session_id_)) {}

SessionLease::~SessionLease() {
    if (owner_ != nullptr) owner_->release(session_id_);
}

SessionLease FeedbackService::acquire(const std::string& session_id) {
    std::lock_guard lock(busy_mutex_);
    if (!busy_.insert(session_id).second) throw ConflictError("session " + session_id + " is busy");
    return SessionLease(this, session_id);
}

void FeedbackService::release(const std::string& session_id) {
    std::lock_guard lock(busy_mutex_);
    busy_.erase(session_id);
}

// --- Service ---------------------------------------------------------------

FeedbackService::FeedbackService(ServiceConfig config,
                                 ServiceModels models,
                                 ToolRegistry registry,
                                 std::vector<FeedbackContext> question_bank,
                                 PromptLibrary prompts)
    : config_(std::move(config)),
      models_(std::move(models)),
      registry_(std::move(registry)),
      question_bank_(std::move(question_bank)),
      prompts_(std::move(prompts)),
      store_(config_.store_root) {
    if (!models_.generator || !models_.judge || !models_.agent) {
        throw ValidationError("generation, judge and agent backends are required");
    }
    if (config_.max_concurrent_model_calls > 0) {
        auto gate = std::make_shared<Gate>(config_.max_concurrent_model_calls);
        for (auto* m : {&models_.generator, &models_.judge, &models_.agent, &models_.vision}) {
            if (*m) *m = std::make_shared<ThrottledModel>(*m, gate);
        }
    }
}

std::unique_ptr<FeedbackService> FeedbackService::from_config(const ServiceConfig& config) {
    if (auto v = validate_service_config(config); !v.empty()) throw ValidationError("invalid service config: " + v.front());

    ServiceModels models{make_chat_model(config.generation_backend), make_chat_model(config.judge_backend),
                         make_chat_model(config.agent_backend),
                         config.vision_backend ? make_chat_model(*config.vision_backend) : nullptr};

    ToolResources resources;
    resources.embedder = std::make_shared<Embedder>(config.embedder);
    if (config.corpus_index_path) {
        resources.index = std::make_shared<CorpusIndex>(load_index(*config.corpus_index_path, config.embedder.embedder_id));
    }
    if (config.prerequisite_map_path) {
        resources.topics = std::make_shared<TopicGraph>(load_topic_graph(config.prerequisite_map_path->string()));
    }
    if (config.behaviour_descriptor_path) {
        resources.behaviours = std::make_shared<std::vector<BehaviourDescriptor>>(
            load_behaviour_descriptors(config.behaviour_descriptor_path->string()));
    }
    auto prompts = config.prompts_dir ? PromptLibrary::with_overrides(*config.prompts_dir) : PromptLibrary::defaults();
    return std::make_unique<FeedbackService>(config, std::move(models), make_default_registry(resources),
                                             load_question_bank(config.question_bank_path), std::move(prompts));
}

const FeedbackContext& FeedbackService::question(const std::string& question_id) const {
    for (const auto& q : question_bank_) {
        if (q.question_id == question_id) return q;
    }
    throw NotFoundError("unknown question: " + question_id);
}

Session FeedbackService::create_session(const std::string& course_id, const std::string& question_id) {
    const auto& q = question(question_id);
    if (!course_id.empty() && course_id != q.course_id) {
        throw NotFoundError("question " + question_id + " does not belong to course " + course_id);
    }
    Session session;
    do {
        session.session_id = fresh_session_id();
    } while (store_.has_session(session.session_id));
    session.context = q;
    session.created_at = utc_now_rfc3339();
    store_.save_session(session);
    return session;
}

std::string FeedbackService::transcribe(const std::string& session_id,
                                        std::string_view image_bytes,
                                        const std::string& mime_type) {
    if (!models_.vision) throw UnavailableError("transcription is not configured");
    if (image_bytes.empty()) throw ValidationError("image: empty upload");
    auto lease = acquire(session_id);
    Session session = store_.load_session(session_id);

    ChatMessage request{Role::user, prompts_.get(prompt_id::transcription),
                        {"data:" + (mime_type.empty() ? std::string("image/png") : mime_type) + ";base64," +
                         base64_encode(image_bytes)}};
    const ModelTurn turn = complete_chat(*models_.vision, {request}, GenerationParams::for_judging());
    session.transcript = std::string(trim(turn.text));
    store_.save_session(session);
    return *session.transcript;
}

Session FeedbackService::update_transcript(const std::string& session_id, const std::string& transcript) {
    auto lease = acquire(session_id);
    Session session = store_.load_session(session_id);
    session.transcript = transcript;
    store_.save_session(session);
    return session;
}

SubmitResult FeedbackService::submit_solution(const std::string& session_id, const std::string& solution, bool blank) {
    if (trim(solution).empty() && !blank) {
        throw ValidationError("solution: empty; set blank to submit an empty solution deliberately");
    }
    auto lease = acquire(session_id);
    Session session = store_.load_session(session_id);
    FeedbackContext ctx = session.context;
    ctx.student_solution = blank ? std::string() : solution;

    LoopOptions options;
    options.prompts = prompts_;
    RefinementTrace trace;
    try {
        trace = refine(ctx, config_.refinement, *models_.generator, *models_.judge, options);
    } catch (const RefinementError& e) {
        const auto trace_id = store_.append_trace(session_id, e.partial_trace());
        throw SubmissionError(std::string(e.what()) + " (partial trace " + trace_id + ")", trace_id);
    }

    SubmitResult result;
    result.report = trace.iterations.back().report;
    result.iterations_used = static_cast<int>(trace.iterations.size());
    result.termination = trace.termination;
    result.trace_id = store_.append_trace(session_id, trace);
    result.report_id = store_.append_report(session_id, result.report);

    session.context = ctx;
    session.report = result.report;
    session.refinement_trace_ref = result.trace_id;
    store_.save_session(session);
    return result;
}

SessionLease FeedbackService::reserve_chat(const std::string& session_id) {
    const Session session = store_.load_session(session_id);
    if (!session.report) throw PreconditionError("session " + session_id + " has no feedback report yet");
    return acquire(session_id);
}

ChatResult FeedbackService::run_chat(SessionLease lease, const std::string& message, const StepCallback& on_step) {
    if (trim(message).empty()) throw ValidationError("message: empty");
    const std::string& session_id = lease.session_id();
    Session session = store_.load_session(session_id);
    if (!session.report) throw PreconditionError("session " + session_id + " has no feedback report yet");

    std::vector<QaPair> history;
    for (const auto& id : session.trajectories) {
        const auto t = store_.load_trajectory(session_id, id);
        history.push_back({t.query, t.final_answer});
    }

    AgentOptions options;
    options.prompts = prompts_;
    Trajectory trajectory = run_trajectory(message, *session.report, registry_, *models_.agent, config_.agent_limits,
                                           options, history, on_step);
    const auto reports = store_.list(session_id, "report");
    trajectory.report_ref = reports.empty() ? "" : reports.back();

    ChatResult result;
    result.trajectory_id = store_.append_trajectory(session_id, trajectory);
    result.trajectory = std::move(trajectory);
    session.trajectories.push_back(result.trajectory_id);
    store_.save_session(session);
    return result;
}

ChatResult FeedbackService::chat(const std::string& session_id, const std::string& message, const StepCallback& on_step) {
    return run_chat(reserve_chat(session_id), message, on_step);
}

SessionView FeedbackService::get_session(const std::string& session_id) const {
    SessionView view;
    view.session = store_.load_session(session_id);
    view.questions_asked = static_cast<int>(view.session.trajectories.size());
    view.completed = view.session.report.has_value() &&
                     (!config_.study_mode.enabled || view.questions_asked >= config_.study_mode.min_questions);
    return view;
}

Trajectory FeedbackService::get_trajectory(const std::string& session_id, const std::string& trajectory_id) const {
    const Session session = store_.load_session(session_id);
    if (std::find(session.trajectories.begin(), session.trajectories.end(), trajectory_id) == session.trajectories.end()) {
        throw NotFoundError("unknown trajectory: " + trajectory_id);
    }
    return store_.load_trajectory(session_id, trajectory_id);
}

ServiceMetrics FeedbackService::get_metrics() const {
    ServiceMetrics m;
    std::vector<Trajectory> all;
    for (const auto& id : store_.session_ids()) {
        const Session s = store_.load_session(id);
        ++m.sessions;
        if (s.report) ++m.reports;
        if (!s.trajectories.empty()) ++m.conversations;
        for (const auto& tid : s.trajectories) all.push_back(store_.load_trajectory(id, tid));
    }
    m.trajectories = static_cast<int>(all.size());
    if (m.reports > 0) m.conversation_rate = static_cast<double>(m.conversations) / m.reports;
    if (!all.empty()) m.step_metrics = step_metrics(all);
    return m;
}

}  // namespace coach
