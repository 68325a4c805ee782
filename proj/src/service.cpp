#include "opendx/service.hpp"

#include "opendx/cohort_io.hpp"
#include "opendx/errors.hpp"

// After Eigen: <resolv.h>, pulled in here, defines a `_res` macro.
#include <httplib.h>

namespace opendx {

nlohmann::json probs_to_json(const OutcomeProbs& p) {
    return {{"unknown", p[static_cast<std::size_t>(Outcome::Unknown)]},
            {"ad", p[static_cast<std::size_t>(Outcome::AD)]},
            {"cn", p[static_cast<std::size_t>(Outcome::CN)]}};
}

nlohmann::json action_to_json(const Action& a) {
    nlohmann::json j{{"kind", std::string(to_string(a.kind))}, {"probabilities", probs_to_json(a.probs)}};
    if (a.category) j["category"] = std::string(to_string(*a.category));
    if (a.label) j["label"] = std::string(to_string(*a.label));
    if (a.kind == ActionKind::RequestExam) j["fallback"] = a.fallback;
    return j;
}

nlohmann::json session_to_json(const SessionState& s) {
    nlohmann::json trail = nlohmann::json::array();
    for (const auto& p : s.trail) trail.push_back(probs_to_json(p));
    return {{"session_id", s.session_id},
            {"status", std::string(to_string(s.status))},
            {"action", action_to_json(s.last_action)},
            {"trail", trail},
            {"acquired", category_names(s.acquired)},
            {"refused", category_names(s.refused)},
            {"pending", s.pending ? nlohmann::json(std::string(to_string(*s.pending))) : nlohmann::json(nullptr)}};
}

namespace {

ExamCategory category_field(const nlohmann::json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || !it->is_string()) throw ApiError(400, "invalid_request", std::string("missing ") + key);
    const auto c = parse_category(it->get<std::string>());
    if (!c) throw ApiError(400, "invalid_request", "unknown category " + it->dump());
    return *c;
}

std::map<std::string, double> indicators_field(const nlohmann::json& body) {
    std::map<std::string, double> out;
    const auto it = body.find("indicators");
    if (it == body.end() || it->is_null()) return out;
    if (!it->is_object()) throw ApiError(400, "invalid_request", "indicators must be an object");
    for (const auto& [k, v] : it->items()) {
        if (!v.is_number()) throw ApiError(400, "invalid_request", "indicator " + k + " must be a number");
        out[k] = v.get<double>();
    }
    return out;
}

Block block_field(const nlohmann::json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || it->is_null()) return {};
    if (!it->is_array()) throw ApiError(400, "invalid_request", std::string(key) + " must be an array of numbers");
    Block b;
    for (const auto& v : *it) {
        if (!v.is_number()) throw ApiError(400, "invalid_request", std::string(key) + " must be an array of numbers");
        b.push_back(v.get<double>());
    }
    return b;
}

}  // namespace

SessionStart session_start_from_json(const nlohmann::json& body, const IndicatorTable& table, std::size_t width) {
    if (!body.is_object()) throw ApiError(400, "invalid_request", "session body must be an object");
    SessionStart s;
    s.indicators = indicators_field(body);
    s.base_block = block_field(body, "base_block");
    if (s.base_block.empty()) {
        if (s.indicators.empty()) throw ApiError(400, "invalid_request", "base_block or indicators required");
        s.base_block = encode_indicator_block(table, ExamCategory::Base, s.indicators, width);
    }
    if (auto it = body.find("visit_index"); it != body.end()) {
        if (!it->is_number_integer() || it->get<int>() < 0)
            throw ApiError(400, "invalid_request", "visit_index must be a non-negative integer");
        s.visit_index = it->get<int>();
    }
    if (auto it = body.find("history"); it != body.end() && !it->is_null()) {
        if (!it->is_array()) throw ApiError(400, "invalid_request", "history must be an array of visits");
        try {
            for (const auto& v : *it) s.history.push_back(visit_from_json(v));
        } catch (const Error& e) {
            throw ApiError(400, "invalid_request", std::string("history: ") + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ApiError(400, "invalid_request", std::string("history: ") + e.what());
        }
        if (body.find("visit_index") == body.end()) {
            int next = 0;
            for (const auto& v : s.history) next = std::max(next, v.visit_index + 1);
            s.visit_index = next;
        }
    }
    if (auto it = body.find("capability"); it != body.end() && !it->is_null()) {
        if (!it->is_array()) throw ApiError(400, "invalid_request", "capability must be an array of categories");
        InstitutionCapability cap;
        for (const auto& name : *it) {
            const auto c = name.is_string() ? parse_category(name.get<std::string>()) : std::nullopt;
            if (!c) throw ApiError(400, "invalid_request", "unknown category " + name.dump());
            cap.insert(*c);
        }
        s.capability = cap;
    }
    return s;
}

SessionEvent session_event_from_json(const nlohmann::json& body) {
    if (!body.is_object()) throw ApiError(400, "invalid_request", "event body must be an object");
    SessionEvent e;
    const auto type = body.find("type");
    if (type == body.end() || !type->is_string()) throw ApiError(400, "invalid_request", "missing type");
    if (*type == "exam_result") {
        e.type = SessionEvent::Type::ExamResult;
    } else if (*type == "exam_unavailable") {
        e.type = SessionEvent::Type::ExamUnavailable;
    } else {
        throw ApiError(400, "invalid_request", "type must be exam_result or exam_unavailable");
    }
    e.category = category_field(body, "category");
    e.block = block_field(body, "block");
    e.indicators = indicators_field(body);
    if (e.type == SessionEvent::Type::ExamResult && e.block.empty() && e.indicators.empty())
        throw ApiError(400, "invalid_request", "exam_result needs a block or indicators");
    return e;
}

SessionRegistry::SessionRegistry(const PolicyEngine& engine, IndicatorTable table,
                                 std::optional<std::filesystem::path> audit_log)
    : engine_(engine), table_(std::move(table)) {
    if (audit_log) {
        audit_ = std::make_unique<std::ofstream>(*audit_log, std::ios::app);
        if (!*audit_) throw Error("cannot open audit log " + audit_log->string());
    }
}

std::size_t SessionRegistry::size() const {
    std::lock_guard lock(map_mutex_);
    return sessions_.size();
}

std::shared_ptr<SessionRegistry::Entry> SessionRegistry::find(const std::string& id) const {
    std::lock_guard lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "not_found", "no session " + id);
    return it->second;
}

void SessionRegistry::audit(const std::string& id, const char* what, const nlohmann::json& request,
                            const nlohmann::json& action) {
    if (!audit_) return;
    std::lock_guard lock(audit_mutex_);
    *audit_ << nlohmann::json{{"session_id", id}, {"what", what}, {"request", request}, {"action", action}}.dump()
            << '\n';
    audit_->flush();
}

nlohmann::json SessionRegistry::create(const nlohmann::json& body) {
    SessionStart start = session_start_from_json(body, table_, engine_.model().width());
    {
        std::lock_guard lock(map_mutex_);
        char buf[32];
        std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
        start.session_id = buf;
    }
    auto entry = std::make_shared<Entry>();
    try {
        entry->state = engine_.start_session(std::move(start));
    } catch (const InvalidCapability& e) {
        throw ApiError(400, "invalid_capability", e.what());
    } catch (const InvalidVisit& e) {
        throw ApiError(400, "invalid_request", e.what());
    } catch (const ShapeError& e) {
        throw ApiError(400, "shape_error", e.what());
    }
    const auto out = session_to_json(entry->state);
    {
        std::lock_guard lock(map_mutex_);
        sessions_[entry->state.session_id] = entry;
    }
    audit(entry->state.session_id, "start", body, out["action"]);
    return out;
}

nlohmann::json SessionRegistry::get(const std::string& id) const {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return session_to_json(entry->state);
}

nlohmann::json SessionRegistry::post_event(const std::string& id, const nlohmann::json& body) {
    const auto entry = find(id);
    const SessionEvent event = session_event_from_json(body);
    nlohmann::json out;
    {
        std::lock_guard lock(entry->mutex);
        try {
            engine_.step(entry->state, event);
        } catch (const SessionClosed& e) {
            throw ApiError(409, "session_closed", e.what());
        } catch (const ProtocolError& e) {
            throw ApiError(409, "protocol_error", e.what());
        } catch (const ShapeError& e) {
            throw ApiError(400, "shape_error", e.what());
        }
        out = session_to_json(entry->state);
    }
    audit(id, "event", body, out["action"]);
    return out;
}

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    reply(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

template <class Fn>
void guarded(httplib::Response& res, int ok_status, Fn&& fn) {
    try {
        reply(res, ok_status, fn());
    } catch (const ApiError& e) {
        reply_error(res, e.status(), e.code(), e.what());
    } catch (const nlohmann::json::parse_error& e) {
        reply_error(res, 400, "malformed_json", e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, "internal", e.what());
    }
}

}  // namespace

void install_routes(httplib::Server& server, SessionRegistry& registry) {
    server.Post("/v1/sessions", [&registry](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 201, [&] { return registry.create(nlohmann::json::parse(req.body)); });
    });
    server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+))", [&registry](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return registry.get(req.matches[1]); });
    });
    server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/events)",
                [&registry](const httplib::Request& req, httplib::Response& res) {
                    guarded(res, 200, [&] { return registry.post_event(req.matches[1], nlohmann::json::parse(req.body)); });
                });
}

}  // namespace opendx
