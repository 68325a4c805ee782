#include "opendx/exam_labeler.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "opendx/errors.hpp"

namespace opendx {

double strategy_gain(const StrategyPrediction& i, const StrategyPrediction& j) noexcept {
    double gain = 0;
    for (std::size_t k = 0; k < 2; ++k) {
        const double t = i.y_true[k];
        gain += t * j.y_pred[k] - t * i.y_pred[k];
        gain += (1.0 - t) * i.y_pred[k] - (1.0 - t) * j.y_pred[k];
    }
    return gain;
}

std::map<std::uint16_t, ExamHeadTarget> label_next_examinations(std::vector<StrategyPrediction> strategies) {
    std::sort(strategies.begin(), strategies.end(),
              [](const auto& a, const auto& b) { return CategorySet::canonical_less(a.mask, b.mask); });
    std::map<std::uint16_t, ExamHeadTarget> out;
    for (std::size_t i = 0; i < strategies.size(); ++i) {
        if (i > 0 && strategies[i].mask == strategies[i - 1].mask)
            throw DuplicateStrategy("strategy listed twice");
        out[strategies[i].mask.bits()] = ExamHeadTarget{};
    }
    for (std::size_t i = 0; i < strategies.size(); ++i) {
        auto& target = out[strategies[i].mask.bits()];
        for (std::size_t j = i + 1; j < strategies.size(); ++j) {
            if (!strategies[i].mask.is_proper_subset_of(strategies[j].mask)) continue;
            if (!(strategy_gain(strategies[i], strategies[j]) > 0)) continue;
            for (auto c : strategies[j].mask.minus(strategies[i].mask).members())
                if (c != ExamCategory::Base) target[head_of(c)] = true;
        }
    }
    return out;
}

nlohmann::json label_record_to_json(const ExamLabelRecord& r) {
    nlohmann::json targets = nlohmann::json::array();
    for (bool t : r.targets) targets.push_back(t ? 1 : 0);
    return {{"subject_id", r.subject_id},
            {"visit_index", r.visit_index},
            {"mask", category_names(r.mask)},
            {"targets", targets}};
}

ExamLabelRecord label_record_from_json(const nlohmann::json& j) {
    try {
        ExamLabelRecord r;
        r.subject_id = j.at("subject_id").get<std::string>();
        r.visit_index = j.at("visit_index").get<int>();
        for (const auto& name : j.at("mask")) {
            const auto c = parse_category(name.get<std::string>());
            if (!c) throw SchemaError("unknown category " + name.dump());
            r.mask.insert(*c);
        }
        if (!r.mask.contains(ExamCategory::Base)) throw SchemaError("mask must contain Base");
        const auto& t = j.at("targets");
        if (!t.is_array() || t.size() != kNumExamHeads) throw SchemaError("targets must hold 12 entries");
        for (std::size_t i = 0; i < kNumExamHeads; ++i) {
            const int v = t[i].get<int>();
            if (v != 0 && v != 1) throw SchemaError("targets must be 0 or 1");
            r.targets[i] = v == 1;
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(e.what());
    }
}

void write_labels(std::ostream& out, const std::vector<ExamLabelRecord>& labels) {
    for (const auto& r : labels) out << label_record_to_json(r).dump() << '\n';
}

std::vector<ExamLabelRecord> read_labels(std::istream& in) {
    std::vector<ExamLabelRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(label_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(n, e.what());
        } catch (const SchemaError& e) {
            throw ParseError(n, e.what());
        }
    }
    return out;
}

}  // namespace opendx
