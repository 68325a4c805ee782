#pragma once
// Clinical indicators and their per-class normal ranges.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opendx/exam.hpp"
#include "opendx/visit.hpp"

namespace opendx {

inline constexpr std::size_t kNumIndicators = 14;

struct IndicatorRange {
    std::string name;
    double ad_low = 0, ad_high = 0;
    double cn_low = 0, cn_high = 0;
    /// Category whose examination yields this indicator.
    ExamCategory source = ExamCategory::Base;

    bool inside_ad(double v) const noexcept { return v >= ad_low && v <= ad_high; }
    bool inside_cn(double v) const noexcept { return v >= cn_low && v <= cn_high; }

    bool operator==(const IndicatorRange&) const = default;
};

class IndicatorTable {
public:
    IndicatorTable() = default;
    explicit IndicatorTable(std::vector<IndicatorRange> rows);

    /// The 14 indicators with the guideline-derived AD / CN normal ranges.
    static IndicatorTable defaults();

    const std::vector<IndicatorRange>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    std::optional<std::size_t> find(const std::string& name) const;

    bool operator==(const IndicatorTable&) const = default;

private:
    std::vector<IndicatorRange> rows_;
};

/// Encodes operator-entered indicator values into a block of `width`: the
/// indicators owned by `category` are min-max scaled over the union of their
/// AD / CN ranges into the leading slots (table order), and every other slot is
/// 0.5. Missing indicators are also 0.5.
Block encode_indicator_block(const IndicatorTable& table, ExamCategory category,
                             const std::map<std::string, double>& values, std::size_t width);

}  // namespace opendx
