#include "coach/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "coach/serialization.hpp"

namespace coach {

namespace fs = std::filesystem;

namespace {

bool safe_id(const std::string& id) {
    return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
}

// "trace-12" -> 12 for the given prefix, or -1.
long document_number(const std::string& id, const std::string& prefix) {
    if (id.size() <= prefix.size() + 1 || id.compare(0, prefix.size(), prefix) != 0 || id[prefix.size()] != '-') {
        return -1;
    }
    const auto digits = id.substr(prefix.size() + 1);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) || digits.size() > 9) {
        return -1;
    }
    return std::stol(digits);
}

template <typename T>
T decode(const std::string& body, const std::string& what) {
    try {
        return from_document<T>(body);
    } catch (const ParseError& e) {
        throw StoreError("corrupt document " + what + ": " + e.what());
    }
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& body) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write " + tmp.string());
        out << body;
        out.flush();
        if (!out) throw StoreError("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw StoreError("cannot move " + tmp.string() + " into place: " + ec.message());
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) throw StoreError("cannot create store root " + root_.string());
}

fs::path SessionStore::session_dir(const std::string& session_id) const {
    if (!safe_id(session_id)) throw NotFoundError("unknown session: " + session_id);
    return root_ / session_id;
}

bool SessionStore::has_session(const std::string& session_id) const {
    return safe_id(session_id) && fs::exists(root_ / session_id / "session.json");
}

void SessionStore::save_session(const Session& session) {
    const auto dir = session_dir(session.session_id);
    fs::create_directories(dir);
    write_file_atomic(dir / "session.json", to_document(session));
}

Session SessionStore::load_session(const std::string& session_id) const {
    if (!has_session(session_id)) throw NotFoundError("unknown session: " + session_id);
    return decode<Session>(read(session_id, "session"), session_id + "/session");
}

std::vector<std::string> SessionStore::session_ids() const {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root_)) {
        const auto name = entry.path().filename().string();
        if (entry.is_directory() && has_session(name)) ids.push_back(name);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<std::string> SessionStore::list(const std::string& session_id, const std::string& prefix) const {
    std::vector<std::pair<long, std::string>> found;
    const auto dir = session_dir(session_id);
    if (!fs::is_directory(dir)) return {};
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        const auto stem = entry.path().stem().string();
        if (auto n = document_number(stem, prefix); n >= 0) found.emplace_back(n, stem);
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& [n, id] : found) out.push_back(std::move(id));
    return out;
}

std::string SessionStore::append(const std::string& session_id, const std::string& prefix, const std::string& body) {
    std::lock_guard lock(append_mutex_);
    const auto dir = session_dir(session_id);
    fs::create_directories(dir);
    long next = 1;
    for (const auto& id : list(session_id, prefix)) next = std::max(next, document_number(id, prefix) + 1);
    const std::string id = prefix + "-" + std::to_string(next);
    write_file_atomic(dir / (id + ".json"), body);
    return id;
}

std::string SessionStore::read(const std::string& session_id, const std::string& document_id) const {
    if (!safe_id(document_id)) throw NotFoundError("unknown document: " + document_id);
    const auto path = session_dir(session_id) / (document_id + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("unknown document: " + session_id + "/" + document_id);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string SessionStore::append_report(const std::string& session_id, const FeedbackReport& report) {
    return append(session_id, "report", to_document(report));
}

std::string SessionStore::append_trace(const std::string& session_id, const RefinementTrace& trace) {
    return append(session_id, "trace", to_document(trace));
}

std::string SessionStore::append_trajectory(const std::string& session_id, const Trajectory& trajectory) {
    return append(session_id, "trajectory", to_document(trajectory));
}

FeedbackReport SessionStore::load_report(const std::string& session_id, const std::string& report_id) const {
    if (document_number(report_id, "report") < 0) throw NotFoundError("unknown report: " + report_id);
    return decode<FeedbackReport>(read(session_id, report_id), session_id + "/" + report_id);
}

RefinementTrace SessionStore::load_trace(const std::string& session_id, const std::string& trace_id) const {
    if (document_number(trace_id, "trace") < 0) throw NotFoundError("unknown trace: " + trace_id);
    return decode<RefinementTrace>(read(session_id, trace_id), session_id + "/" + trace_id);
}

Trajectory SessionStore::load_trajectory(const std::string& session_id, const std::string& trajectory_id) const {
    if (document_number(trajectory_id, "trajectory") < 0) throw NotFoundError("unknown trajectory: " + trajectory_id);
    return decode<Trajectory>(read(session_id, trajectory_id), session_id + "/" + trajectory_id);
}

}  // namespace coach
