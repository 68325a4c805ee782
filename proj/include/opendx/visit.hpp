#pragma once
// Subjects, visits and the feature-sequence layout consumed by the backbone.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opendx/exam.hpp"

namespace opendx {

enum class Label { AD, CN, MCI, SMC, Unlabeled };

std::string_view to_string(Label l) noexcept;
std::optional<Label> parse_label(std::string_view s) noexcept;

/// AD and CN are the known classes; MCI and SMC are treated as unknown.
constexpr bool is_known(Label l) noexcept { return l == Label::AD || l == Label::CN; }

/// Canonical width of one feature block.
inline constexpr std::size_t kCanonicalBlockWidth = 2090;

using Block = std::vector<double>;

struct VisitRecord {
    std::string subject_id;
    int visit_index = 0;  // 0 = first visit
    Label label = Label::Unlabeled;
    std::map<ExamCategory, Block> blocks;
    std::map<std::string, double> indicators;

    StrategyMask present() const noexcept;
    bool has(ExamCategory c) const noexcept { return blocks.count(c) != 0; }

    bool operator==(const VisitRecord&) const = default;
};

struct Subject {
    std::string id;
    std::vector<VisitRecord> visits;  // strictly increasing visit_index

    bool operator==(const Subject&) const = default;
};

struct Cohort {
    std::size_t width = 0;
    std::vector<Subject> subjects;

    std::size_t visit_count() const noexcept;
    bool operator==(const Cohort&) const = default;
};

/// Throws SchemaError on a width mismatch or non-increasing visit indices, and
/// InvalidVisit on a visit without a Base block.
void validate(const Cohort& cohort);

struct SequenceEntry {
    int visit_index = 0;
    ExamCategory category = ExamCategory::Base;
    Block block;

    bool operator==(const SequenceEntry&) const = default;
};

/// History blocks first (older visits farther from the end), then the current
/// visit. Ordered by (visit_index, category index).
struct FeatureSequence {
    std::vector<SequenceEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
    /// Visit index of the last (current) entry.
    int current_visit() const;
    /// Categories carried by the current visit.
    StrategyMask current_mask() const;
    /// Number of distinct visits in the sequence.
    std::size_t visit_span() const;

    bool operator==(const FeatureSequence&) const = default;
};

/// Every subset of the visit's present categories that contains Base, ordered
/// by ascending cardinality then lexicographically by category index.
std::vector<StrategyMask> enumerate_strategies(const VisitRecord& visit);

/// Same enumeration for a bare category set (must contain Base).
std::vector<StrategyMask> enumerate_strategies(StrategyMask present);

/// All blocks of all prior visits, followed by the current visit's blocks
/// restricted to `mask`.
FeatureSequence build_feature_sequence(std::span<const VisitRecord> history, const VisitRecord& current,
                                       StrategyMask mask);

}  // namespace opendx
