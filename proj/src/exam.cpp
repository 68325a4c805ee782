#include "opendx/exam.hpp"

#include <algorithm>

namespace opendx {

namespace {
constexpr std::array<std::string_view, kNumCategories> kNames = {
    "Base", "Cog", "CE", "Neur", "FB", "PE", "Blood", "Urine", "MRI", "FDG", "AV45", "Gene", "CSF",
};
}  // namespace

std::string_view to_string(ExamCategory c) noexcept { return kNames[index_of(c)]; }

std::optional<ExamCategory> parse_category(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == name) return category_at(i);
    return std::nullopt;
}

std::vector<ExamCategory> CategorySet::members() const {
    std::vector<ExamCategory> out;
    out.reserve(size());
    for (auto c : kAllCategories)
        if (contains(c)) out.push_back(c);
    return out;
}

bool CategorySet::canonical_less(CategorySet a, CategorySet b) noexcept {
    if (a.size() != b.size()) return a.size() < b.size();
    // Equal cardinality: compare ascending member lists lexicographically. The
    // first differing category decides; the set holding the lower one sorts first.
    const auto diff = static_cast<std::uint16_t>(a.bits_ ^ b.bits_);
    if (diff == 0) return false;
    const auto lowest = static_cast<std::uint16_t>(diff & -diff);
    return (a.bits_ & lowest) != 0;
}

std::vector<std::string> category_names(CategorySet s) {
    std::vector<std::string> out;
    for (auto c : s.members()) out.emplace_back(to_string(c));
    return out;
}

}  // namespace opendx
