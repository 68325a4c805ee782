#include "opendx/visit.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "opendx/errors.hpp"

namespace opendx {

namespace {
constexpr std::array<std::string_view, 5> kLabelNames = {"AD", "CN", "MCI", "SMC", "Unlabeled"};
}

std::string_view to_string(Label l) noexcept { return kLabelNames[static_cast<std::size_t>(l)]; }

std::optional<Label> parse_label(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kLabelNames.size(); ++i)
        if (kLabelNames[i] == s) return static_cast<Label>(i);
    return std::nullopt;
}

StrategyMask VisitRecord::present() const noexcept {
    StrategyMask m;
    for (const auto& [c, _] : blocks) m.insert(c);
    return m;
}

std::size_t Cohort::visit_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.visits.size();
    return n;
}

void validate(const Cohort& cohort) {
    for (const auto& subject : cohort.subjects) {
        int last = -1;
        for (const auto& v : subject.visits) {
            if (v.subject_id != subject.id)
                throw SchemaError("visit of '" + v.subject_id + "' filed under subject '" + subject.id + "'");
            if (v.visit_index <= last)
                throw SchemaError("subject '" + subject.id + "': visit indices must be strictly increasing");
            last = v.visit_index;
            if (!v.has(ExamCategory::Base))
                throw InvalidVisit("subject '" + subject.id + "' visit " + std::to_string(v.visit_index) +
                                   " has no Base block");
            for (const auto& [c, block] : v.blocks)
                if (block.size() != cohort.width)
                    throw SchemaError("subject '" + subject.id + "' visit " + std::to_string(v.visit_index) + " " +
                                      std::string(to_string(c)) + " block has width " +
                                      std::to_string(block.size()) + ", expected " + std::to_string(cohort.width));
        }
    }
}

int FeatureSequence::current_visit() const {
    if (entries.empty()) throw ShapeError("empty feature sequence");
    return entries.back().visit_index;
}

StrategyMask FeatureSequence::current_mask() const {
    const int cur = current_visit();
    StrategyMask m;
    for (const auto& e : entries)
        if (e.visit_index == cur) m.insert(e.category);
    return m;
}

std::size_t FeatureSequence::visit_span() const {
    std::set<int> visits;
    for (const auto& e : entries) visits.insert(e.visit_index);
    return visits.size();
}

std::vector<StrategyMask> enumerate_strategies(StrategyMask present) {
    if (!present.contains(ExamCategory::Base)) throw InvalidVisit("strategy enumeration requires a Base block");
    const auto optional = present.minus(StrategyMask{ExamCategory::Base});
    std::vector<StrategyMask> out;
    out.reserve(std::size_t{1} << optional.size());
    // Standard submask walk over the optional categories.
    const std::uint16_t full = optional.bits();
    std::uint16_t sub = full;
    while (true) {
        out.push_back(StrategyMask(static_cast<std::uint16_t>(sub | 1u)));
        if (sub == 0) break;
        sub = static_cast<std::uint16_t>((sub - 1) & full);
    }
    std::sort(out.begin(), out.end(), CategorySet::canonical_less);
    return out;
}

std::vector<StrategyMask> enumerate_strategies(const VisitRecord& visit) {
    if (!visit.has(ExamCategory::Base))
        throw InvalidVisit("subject '" + visit.subject_id + "' visit " + std::to_string(visit.visit_index) +
                           " has no Base block");
    return enumerate_strategies(visit.present());
}

FeatureSequence build_feature_sequence(std::span<const VisitRecord> history, const VisitRecord& current,
                                       StrategyMask mask) {
    if (!mask.is_subset_of(current.present()))
        throw MissingExamData("strategy requests categories absent from visit " +
                              std::to_string(current.visit_index) + " of '" + current.subject_id + "'");

    std::vector<const VisitRecord*> prior;
    prior.reserve(history.size());
    for (const auto& v : history)
        if (v.visit_index < current.visit_index) prior.push_back(&v);
    std::stable_sort(prior.begin(), prior.end(),
                     [](const VisitRecord* a, const VisitRecord* b) { return a->visit_index < b->visit_index; });

    FeatureSequence seq;
    for (const auto* v : prior)
        for (const auto& [c, block] : v->blocks) seq.entries.push_back({v->visit_index, c, block});
    for (const auto& [c, block] : current.blocks)
        if (mask.contains(c)) seq.entries.push_back({current.visit_index, c, block});
    return seq;
}

}  // namespace opendx
