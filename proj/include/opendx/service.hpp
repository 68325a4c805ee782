#pragma once
// Session-oriented HTTP/JSON service over the policy engine.
//
//   POST /v1/sessions                 start a session          -> 201
//   GET  /v1/sessions/{id}            current state            -> 200
//   POST /v1/sessions/{id}/events     exam_result / exam_unavailable
//
// Errors carry {"error": {"code", "message"}}: 400 malformed or invalid input,
// 404 unknown session, 409 closed session or out-of-protocol event.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "opendx/errors.hpp"
#include "opendx/policy.hpp"

namespace httplib {
class Server;
}

namespace opendx {

/// API form of an action: kind, category (request_exam), label (diagnosis),
/// probabilities {unknown, ad, cn}.
nlohmann::json action_to_json(const Action& a);
nlohmann::json probs_to_json(const OutcomeProbs& p);
nlohmann::json session_to_json(const SessionState& s);

/// Parses a session-start body: {"base_block": [..]? , "indicators": {..}?,
/// "history": [visit]?, "visit_index": int?, "capability": [category]?}.
/// Without base_block the Base block is encoded from the indicators.
SessionStart session_start_from_json(const nlohmann::json& body, const IndicatorTable& table, std::size_t width);

/// Parses {"type": "exam_result"|"exam_unavailable", "category", "block"?, "indicators"?}.
SessionEvent session_event_from_json(const nlohmann::json& body);

class ApiError : public Error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : Error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

/// In-memory sessions. Each session has its own lock; different sessions
/// proceed concurrently.
class SessionRegistry {
public:
    SessionRegistry(const PolicyEngine& engine, IndicatorTable table,
                    std::optional<std::filesystem::path> audit_log = std::nullopt);

    /// Each returns the session JSON; failures throw ApiError.
    nlohmann::json create(const nlohmann::json& body);
    nlohmann::json get(const std::string& id) const;
    nlohmann::json post_event(const std::string& id, const nlohmann::json& body);

    std::size_t size() const;

private:
    struct Entry {
        std::mutex mutex;
        SessionState state;
    };
    std::shared_ptr<Entry> find(const std::string& id) const;
    void audit(const std::string& id, const char* what, const nlohmann::json& request, const nlohmann::json& action);

    const PolicyEngine& engine_;
    IndicatorTable table_;
    mutable std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t next_id_ = 1;
    std::mutex audit_mutex_;
    std::unique_ptr<std::ofstream> audit_;
};

/// Installs the /v1 routes on an httplib server.
void install_routes(httplib::Server& server, SessionRegistry& registry);

}  // namespace opendx
