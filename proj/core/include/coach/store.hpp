#pragma once

// File-backed document store:
//
//   <root>/<session_id>/session.json
//   <root>/<session_id>/report-<n>.json
//   <root>/<session_id>/trace-<n>.json
//   <root>/<session_id>/trajectory-<n>.json
//
// Numbered documents are written once and never replaced; only session.json
// is rewritten as the session advances. Every write goes through a temporary
// file and a rename.

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"

namespace coach {

class NotFoundError : public Error {
public:
    using Error::Error;
};

class StoreError : public Error {
public:
    using Error::Error;
};

class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    bool has_session(const std::string& session_id) const;
    void save_session(const Session& session);
    Session load_session(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;  // sorted

    // Each returns the new document id ("report-3", ...).
    std::string append_report(const std::string& session_id, const FeedbackReport& report);
    std::string append_trace(const std::string& session_id, const RefinementTrace& trace);
    std::string append_trajectory(const std::string& session_id, const Trajectory& trajectory);

    FeedbackReport load_report(const std::string& session_id, const std::string& report_id) const;
    RefinementTrace load_trace(const std::string& session_id, const std::string& trace_id) const;
    Trajectory load_trajectory(const std::string& session_id, const std::string& trajectory_id) const;

    // Ids of the numbered documents with this prefix, in numeric order.
    std::vector<std::string> list(const std::string& session_id, const std::string& prefix) const;

private:
    std::filesystem::path session_dir(const std::string& session_id) const;
    std::string append(const std::string& session_id, const std::string& prefix, const std::string& body);
    std::string read(const std::string& session_id, const std::string& document_id) const;

    std::filesystem::path root_;
    std::mutex append_mutex_;
};

// Writes body to path via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& body);

}  // namespace coach
