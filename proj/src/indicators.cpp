#include "opendx/indicators.hpp"

#include <algorithm>

#include "opendx/errors.hpp"

namespace opendx {

IndicatorTable::IndicatorTable(std::vector<IndicatorRange> rows) : rows_(std::move(rows)) {
    for (const auto& r : rows_) {
        if (r.ad_low > r.ad_high || r.cn_low > r.cn_high)
            throw ConfigError("indicator '" + r.name + "' has an inverted range");
    }
    for (std::size_t i = 0; i < rows_.size(); ++i)
        for (std::size_t j = i + 1; j < rows_.size(); ++j)
            if (rows_[i].name == rows_[j].name) throw ConfigError("duplicate indicator '" + rows_[i].name + "'");
}

IndicatorTable IndicatorTable::defaults() {
    using C = ExamCategory;
    return IndicatorTable({
        {"MH_Psychiatric", 0, 0, 0, 0, C::Base},
        {"MH_Neurologic", 0, 0, 0, 0, C::Base},
        {"SYM_Present_count_21", 0, 6, 0, 6, C::Base},
        {"SYM_Present_count_28", 0, 8, 0, 8, C::Base},
        {"CCI_Score_12", 32.2188, 60, 12, 13.5634, C::Cog},
        {"CCI_Score_20", 50.3438, 100, 20, 22.0845, C::Cog},
        {"CDRSB", 2, 18, 0, 0, C::Cog},
        {"ADAS11", 10, 70, 0, 11.264, C::Cog},
        {"ADAS13", 18, 85, 0, 17.67, C::Cog},
        {"ADASQ4", 5, 10, 0, 6, C::Cog},
        {"MMSE", 0, 27, 25, 30, C::Cog},
        {"MOCA", 0, 23, 26, 30, C::Cog},
        {"mPACCdigit", -30.0745, -7.6955, -5.1733, 4.7304, C::CE},
        {"mPACCtrailsB", -29.7277, -6.7798, -4.8523, 4.3338, C::CE},
    });
}

std::optional<std::size_t> IndicatorTable::find(const std::string& name) const {
    for (std::size_t i = 0; i < rows_.size(); ++i)
        if (rows_[i].name == name) return i;
    return std::nullopt;
}

Block encode_indicator_block(const IndicatorTable& table, ExamCategory category,
                             const std::map<std::string, double>& values, std::size_t width) {
    Block block(width, 0.5);
    std::size_t slot = 0;
    for (const auto& row : table.rows()) {
        if (row.source != category) continue;
        if (slot >= width) break;
        if (auto it = values.find(row.name); it != values.end()) {
            const double lo = std::min(row.ad_low, row.cn_low);
            const double hi = std::max(row.ad_high, row.cn_high);
            const double span = hi - lo;
            block[slot] = span > 0 ? std::clamp((it->second - lo) / span, 0.0, 1.0) : (it->second == lo ? 0.0 : 1.0);
        }
        ++slot;
    }
    return block;
}

}  // namespace opendx
