#pragma once
// Next-examination targets from nested-strategy prediction gains.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "opendx/exam.hpp"

namespace opendx {

struct StrategyPrediction {
    StrategyMask mask;
    std::array<double, 2> y_true{};  // one-hot over (AD, CN)
    std::array<double, 2> y_pred{};  // class probabilities
};

/// Improvement in the prediction from strategy i to its superset j: gain in
/// true-class mass plus loss in wrong-class mass.
double strategy_gain(const StrategyPrediction& i, const StrategyPrediction& j) noexcept;

/// For every strategy, the union of exam heads added by the supersets that
/// improve on it. Throws DuplicateStrategy on repeated masks.
std::map<std::uint16_t, ExamHeadTarget> label_next_examinations(std::vector<StrategyPrediction> strategies);

struct ExamLabelRecord {
    std::string subject_id;
    int visit_index = 0;
    StrategyMask mask;
    ExamHeadTarget targets{};

    bool operator==(const ExamLabelRecord&) const = default;
};

nlohmann::json label_record_to_json(const ExamLabelRecord& r);
/// Throws SchemaError.
ExamLabelRecord label_record_from_json(const nlohmann::json& j);

void write_labels(std::ostream& out, const std::vector<ExamLabelRecord>& labels);
/// Throws ParseError with the 1-based line number.
std::vector<ExamLabelRecord> read_labels(std::istream& in);

}  // namespace opendx
