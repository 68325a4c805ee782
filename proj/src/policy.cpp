#include "opendx/policy.hpp"

#include <algorithm>
#include <string>

#include "opendx/errors.hpp"

namespace opendx {

void DecisionThresholds::validate() const {
    auto in_range = [](double v) { return v > 0 && v <= 1; };
    if (!in_range(delta.ad) || !in_range(delta.cn) || !in_range(delta.unknown))
        throw ConfigError("outcome thresholds must lie in (0, 1]");
    for (double g : gamma)
        if (!in_range(g)) throw ConfigError("exam request thresholds must lie in (0, 1]");
}

CostTable::CostTable() {
    for (std::size_t i = 0; i < kNumExamHeads; ++i) order_[i] = category_of_head(i);
}

CostTable::CostTable(const std::vector<ExamCategory>& order) {
    if (order.size() != kNumExamHeads) throw ConfigError("cost order must list the 12 non-Base categories");
    CategorySet seen;
    for (std::size_t i = 0; i < kNumExamHeads; ++i) {
        if (order[i] == ExamCategory::Base || seen.contains(order[i]))
            throw ConfigError("cost order must be a permutation of the non-Base categories");
        seen.insert(order[i]);
        order_[i] = order[i];
    }
}

std::size_t CostTable::rank(ExamCategory c) const {
    const auto it = std::find(order_.begin(), order_.end(), c);
    if (it == order_.end()) throw ConfigError("category has no cost rank");
    return static_cast<std::size_t>(it - order_.begin());
}

std::optional<Outcome> threshold_outcome(const OutcomeProbs& p, const OutcomeThresholds& delta) noexcept {
    for (Outcome o : {Outcome::AD, Outcome::CN, Outcome::Unknown})
        if (p[static_cast<std::size_t>(o)] >= delta.of(o)) return o;
    return std::nullopt;
}

Outcome decide_outcome(const OutcomeProbs& p, const OutcomeThresholds& delta) noexcept {
    return threshold_outcome(p, delta).value_or(Outcome::Unknown);
}

std::string_view to_string(Outcome o) noexcept {
    switch (o) {
        case Outcome::Unknown: return "Unknown";
        case Outcome::AD: return "AD";
        case Outcome::CN: return "CN";
    }
    return "?";
}

std::string_view to_string(ActionKind k) noexcept {
    switch (k) {
        case ActionKind::RequestExam: return "request_exam";
        case ActionKind::Diagnose: return "diagnosis";
        case ActionKind::ReferUnknown: return "refer_unknown";
    }
    return "?";
}

std::string_view to_string(SessionStatus s) noexcept {
    switch (s) {
        case SessionStatus::AwaitingExam: return "awaiting_exam";
        case SessionStatus::Diagnosed: return "diagnosed";
        case SessionStatus::ReferredUnknown: return "referred_unknown";
    }
    return "?";
}

OpenSetModel::OpenSetModel(ModelBundle bundle, OpenMaxModel openmax, IndicatorTable table)
    : bundle_(std::move(bundle)), openmax_(std::move(openmax)), table_(std::move(table)) {
    if (!openmax_.fitted()) throw ModelNotFitted("OpenMax model has no centers");
}

Assessment OpenSetModel::assess(const FeatureSequence& sequence,
                                const std::map<std::string, double>& indicators) const {
    const BackboneModel& backbone = bundle_.route(sequence.current_visit());
    const ForwardResult f = forward(backbone, sequence);
    Assessment a;
    a.probs = openmax_probs(extract_abnormal_pattern(indicators, table_), f.activations, openmax_);
    a.exam_scores = f.exam_scores;
    return a;
}

nlohmann::json policy_config_to_json(const PolicyConfig& c) {
    return {{"delta", {{"ad", c.thresholds.delta.ad}, {"cn", c.thresholds.delta.cn}, {"unknown", c.thresholds.delta.unknown}}},
            {"gamma", c.thresholds.gamma},
            {"cost_order", [&] {
                 nlohmann::json a = nlohmann::json::array();
                 for (auto cat : c.costs.order()) a.push_back(std::string(to_string(cat)));
                 return a;
             }()}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
    PolicyConfig c;
    if (auto it = j.find("delta"); it != j.end()) {
        c.thresholds.delta.ad = it->value("ad", c.thresholds.delta.ad);
        c.thresholds.delta.cn = it->value("cn", c.thresholds.delta.cn);
        c.thresholds.delta.unknown = it->value("unknown", c.thresholds.delta.unknown);
    }
    if (auto it = j.find("gamma"); it != j.end()) {
        if (it->is_number()) {
            c.thresholds.gamma = DecisionThresholds::filled_gamma(it->get<double>());
        } else {
            const auto g = it->get<std::vector<double>>();
            if (g.size() != kNumExamHeads) throw ConfigError("gamma must be a number or 12 values");
            std::copy(g.begin(), g.end(), c.thresholds.gamma.begin());
        }
    }
    if (auto it = j.find("cost_order"); it != j.end()) {
        std::vector<ExamCategory> order;
        for (const auto& name : *it) {
            const auto cat = parse_category(name.get<std::string>());
            if (!cat) throw ConfigError("unknown category in cost_order: " + name.dump());
            order.push_back(*cat);
        }
        c.costs = CostTable(order);
    }
    c.thresholds.validate();
    return c;
}

PolicyEngine::PolicyEngine(const DiagnosisModel& model, PolicyConfig config, IndicatorTable table)
    : model_(model), config_(std::move(config)), table_(std::move(table)) {
    config_.thresholds.validate();
}

namespace {
void check_width(const Block& b, ExamCategory c, std::size_t width) {
    if (b.size() != width)
        throw ShapeError(std::string(to_string(c)) + " block has width " + std::to_string(b.size()) +
                         ", model expects " + std::to_string(width));
}
}  // namespace

SessionState PolicyEngine::start_session(SessionStart start) const {
    if (!start.capability.contains(ExamCategory::Base))
        throw InvalidCapability("institution capability must include Base");
    if (start.base_block.empty()) throw InvalidVisit("session start needs a base block");
    check_width(start.base_block, ExamCategory::Base, model_.width());
    for (const auto& v : start.history)
        for (const auto& [c, b] : v.blocks) check_width(b, c, model_.width());
    SessionState s;
    s.session_id = std::move(start.session_id);
    s.history = std::move(start.history);
    std::erase_if(s.history, [&](const VisitRecord& v) { return v.visit_index >= start.visit_index; });
    s.current.subject_id = s.history.empty() ? std::string{} : s.history.front().subject_id;
    s.current.visit_index = start.visit_index;
    s.current.blocks[ExamCategory::Base] = std::move(start.base_block);
    s.current.indicators = std::move(start.indicators);
    s.acquired = {ExamCategory::Base};
    s.capability = start.capability;
    decide(s);
    return s;
}

const Action& PolicyEngine::step(SessionState& s, const SessionEvent& e) const {
    if (s.terminal()) throw SessionClosed("session " + s.session_id + " is closed");
    if (!s.pending || e.category != *s.pending)
        throw ProtocolError("event for " + std::string(to_string(e.category)) + " does not answer the pending request" +
                            (s.pending ? " for " + std::string(to_string(*s.pending)) : std::string{}));
    if (e.type == SessionEvent::Type::ExamUnavailable) {
        s.refused.insert(e.category);
        s.pending.reset();
        request_or_refer(s);
        return s.last_action;
    }
    Block block = e.block;
    if (block.empty()) {
        if (e.indicators.empty()) throw ProtocolError("exam result carries neither a block nor indicators");
        block = encode_indicator_block(table_, e.category, e.indicators, model_.width());
    }
    check_width(block, e.category, model_.width());
    for (const auto& [name, value] : e.indicators) s.current.indicators[name] = value;
    s.current.blocks[e.category] = std::move(block);
    s.acquired.insert(e.category);
    s.pending.reset();
    decide(s);
    return s.last_action;
}

std::optional<ExamCategory> PolicyEngine::select_fallback_exam(const SessionState& s) const {
    for (auto c : config_.costs.order())
        if (s.capability.contains(c) && !s.acquired.contains(c) && !s.refused.contains(c)) return c;
    return std::nullopt;
}

void PolicyEngine::decide(SessionState& s) const {
    const FeatureSequence seq = build_feature_sequence(s.history, s.current, s.acquired);
    s.last_assessment = model_.assess(seq, s.current.indicators);
    s.trail.push_back(s.last_assessment.probs);
    ++s.decision_steps;
    const auto& p = s.last_assessment.probs;
    if (const auto o = threshold_outcome(p, config_.thresholds.delta)) {
        if (*o == Outcome::Unknown) {
            s.status = SessionStatus::ReferredUnknown;
            s.last_action = {ActionKind::ReferUnknown, std::nullopt, std::nullopt, p, false};
        } else {
            s.status = SessionStatus::Diagnosed;
            s.last_action = {ActionKind::Diagnose, std::nullopt, *o, p, false};
        }
        return;
    }
    request_or_refer(s);
}

void PolicyEngine::request_or_refer(SessionState& s) const {
    const auto& p = s.last_assessment.probs;
    std::optional<ExamCategory> pick;
    double best = -1;
    for (std::size_t i = 0; i < kNumExamHeads; ++i) {
        const ExamCategory c = category_of_head(i);
        const double score = s.last_assessment.exam_scores[i];
        if (score < config_.thresholds.gamma[i] || !s.capability.contains(c) || s.acquired.contains(c) ||
            s.refused.contains(c))
            continue;
        if (score > best) {
            best = score;
            pick = c;
        }
    }
    bool fallback = false;
    if (!pick) {
        pick = select_fallback_exam(s);
        fallback = pick.has_value();
    }
    if (!pick) {
        s.status = SessionStatus::ReferredUnknown;
        s.pending.reset();
        s.last_action = {ActionKind::ReferUnknown, std::nullopt, std::nullopt, p, false};
        return;
    }
    s.status = SessionStatus::AwaitingExam;
    s.pending = pick;
    ++s.requests;
    if (fallback) ++s.fallback_requests;
    s.last_action = {ActionKind::RequestExam, pick, std::nullopt, p, fallback};
}

}  // namespace opendx
