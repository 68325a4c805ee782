#pragma once
// Live diagnosis sessions: assess, check the outcome thresholds, request the
// next examination, fall back on refusal, refer when nothing is left.

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opendx/backbone.hpp"
#include "opendx/exam.hpp"
#include "opendx/indicators.hpp"
#include "opendx/openmax.hpp"
#include "opendx/visit.hpp"

namespace opendx {

struct OutcomeThresholds {
    double ad = 0.95;
    double cn = 0.95;
    double unknown = 0.8;

    double of(Outcome o) const noexcept { return o == Outcome::AD ? ad : o == Outcome::CN ? cn : unknown; }
    bool operator==(const OutcomeThresholds&) const = default;
};

struct DecisionThresholds {
    OutcomeThresholds delta{};
    std::array<double, kNumExamHeads> gamma = filled_gamma(0.5);

    /// Throws ConfigError unless every value lies in (0, 1].
    void validate() const;
    bool operator==(const DecisionThresholds&) const = default;

    static constexpr std::array<double, kNumExamHeads> filled_gamma(double g) {
        std::array<double, kNumExamHeads> a{};
        for (auto& x : a) x = g;
        return a;
    }
};

/// Ascending-cost order over the 12 non-Base categories.
class CostTable {
public:
    CostTable();  // Cog < CE < Neur < FB < PE < Blood < Urine < MRI < FDG < AV45 < Gene < CSF
    /// Throws ConfigError unless `order` is a permutation of the non-Base categories.
    explicit CostTable(const std::vector<ExamCategory>& order);

    const std::array<ExamCategory, kNumExamHeads>& order() const noexcept { return order_; }
    std::size_t rank(ExamCategory c) const;

    bool operator==(const CostTable&) const = default;

private:
    std::array<ExamCategory, kNumExamHeads> order_{};
};

/// First outcome, in the order AD, CN, Unknown, whose probability reaches its
/// threshold.
std::optional<Outcome> threshold_outcome(const OutcomeProbs& p, const OutcomeThresholds& delta) noexcept;

/// Terminal decision from probabilities alone: a met threshold, otherwise
/// Unknown (referral).
Outcome decide_outcome(const OutcomeProbs& p, const OutcomeThresholds& delta) noexcept;

std::string_view to_string(Outcome o) noexcept;

struct Assessment {
    OutcomeProbs probs{};
    std::array<double, kNumExamHeads> exam_scores{};
};

/// Source of outcome probabilities and exam scores for the current evidence.
class DiagnosisModel {
public:
    virtual ~DiagnosisModel() = default;
    virtual Assessment assess(const FeatureSequence& sequence,
                              const std::map<std::string, double>& indicators) const = 0;
    /// Width of the blocks the model consumes.
    virtual std::size_t width() const = 0;
};

/// Backbone bundle plus OpenMax calibration on the indicator pattern.
class OpenSetModel final : public DiagnosisModel {
public:
    OpenSetModel(ModelBundle bundle, OpenMaxModel openmax, IndicatorTable table);

    Assessment assess(const FeatureSequence& sequence,
                      const std::map<std::string, double>& indicators) const override;
    std::size_t width() const override { return bundle_.main.shape().width; }

    const ModelBundle& bundle() const noexcept { return bundle_; }
    const OpenMaxModel& openmax() const noexcept { return openmax_; }
    const IndicatorTable& table() const noexcept { return table_; }

private:
    ModelBundle bundle_;
    OpenMaxModel openmax_;
    IndicatorTable table_;
};

enum class ActionKind { RequestExam, Diagnose, ReferUnknown };
std::string_view to_string(ActionKind k) noexcept;

struct Action {
    ActionKind kind = ActionKind::ReferUnknown;
    std::optional<ExamCategory> category;  // RequestExam
    std::optional<Outcome> label;          // Diagnose (AD or CN)
    OutcomeProbs probs{};
    /// The request came from the cost-order fallback.
    bool fallback = false;

    bool operator==(const Action&) const = default;
};

enum class SessionStatus { AwaitingExam, Diagnosed, ReferredUnknown };
std::string_view to_string(SessionStatus s) noexcept;

struct SessionStart {
    std::string session_id;
    std::vector<VisitRecord> history;
    int visit_index = 0;
    Block base_block;
    std::map<std::string, double> indicators;
    InstitutionCapability capability = InstitutionCapability::all();
};

struct SessionEvent {
    enum class Type { ExamResult, ExamUnavailable };
    Type type = Type::ExamResult;
    ExamCategory category = ExamCategory::Cog;
    /// Empty with indicators present: the engine encodes the indicators.
    Block block;
    std::map<std::string, double> indicators;
};

struct SessionState {
    std::string session_id;
    std::vector<VisitRecord> history;
    VisitRecord current;
    StrategyMask acquired;
    InstitutionCapability capability;
    CategorySet refused;
    std::vector<OutcomeProbs> trail;
    SessionStatus status = SessionStatus::AwaitingExam;
    std::optional<ExamCategory> pending;
    Action last_action;
    Assessment last_assessment;
    std::size_t decision_steps = 0;
    std::size_t requests = 0;
    std::size_t fallback_requests = 0;

    bool terminal() const noexcept { return status != SessionStatus::AwaitingExam; }
};

struct PolicyConfig {
    DecisionThresholds thresholds{};
    CostTable costs{};

    bool operator==(const PolicyConfig&) const = default;
};

nlohmann::json policy_config_to_json(const PolicyConfig& c);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

class PolicyEngine {
public:
    /// `model` must outlive the engine.
    PolicyEngine(const DiagnosisModel& model, PolicyConfig config, IndicatorTable table = IndicatorTable::defaults());

    /// Acquires Base and runs the first decision step. Throws InvalidCapability
    /// when Base is not available, InvalidVisit without a base block and
    /// ShapeError when a block's width differs from the model's.
    SessionState start_session(SessionStart start) const;

    /// Applies an event to a waiting session. Throws SessionClosed on a
    /// terminal session and ProtocolError when the event does not answer the
    /// pending request; ShapeError on a block of the wrong width. A rejected
    /// event leaves the session unchanged.
    const Action& step(SessionState& state, const SessionEvent& event) const;

    /// Cheapest category that is available, not acquired and not refused.
    std::optional<ExamCategory> select_fallback_exam(const SessionState& state) const;

    const PolicyConfig& config() const noexcept { return config_; }
    const DiagnosisModel& model() const noexcept { return model_; }

private:
    void decide(SessionState& state) const;
    void request_or_refer(SessionState& state) const;

    const DiagnosisModel& model_;
    PolicyConfig config_;
    IndicatorTable table_;
};

}  // namespace opendx
