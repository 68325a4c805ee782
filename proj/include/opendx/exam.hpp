#pragma once
// Examination categories and strategy masks.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace opendx {

/// The 13 examination categories, in canonical order. Base is always index 0.
enum class ExamCategory : std::uint8_t {
    Base = 0,
    Cog,
    CE,
    Neur,
    FB,
    PE,
    Blood,
    Urine,
    MRI,
    FDG,
    AV45,
    Gene,
    CSF,
};

inline constexpr std::size_t kNumCategories = 13;
/// One examination head per non-Base category.
inline constexpr std::size_t kNumExamHeads = kNumCategories - 1;

inline constexpr std::array<ExamCategory, kNumCategories> kAllCategories = {
    ExamCategory::Base, ExamCategory::Cog,   ExamCategory::CE,   ExamCategory::Neur, ExamCategory::FB,
    ExamCategory::PE,   ExamCategory::Blood, ExamCategory::Urine, ExamCategory::MRI, ExamCategory::FDG,
    ExamCategory::AV45, ExamCategory::Gene,  ExamCategory::CSF,
};

constexpr std::size_t index_of(ExamCategory c) noexcept { return static_cast<std::size_t>(c); }
constexpr ExamCategory category_at(std::size_t i) noexcept { return static_cast<ExamCategory>(i); }

/// Head index of a non-Base category (Cog -> 0 ... CSF -> 11).
constexpr std::size_t head_of(ExamCategory c) noexcept { return index_of(c) - 1; }
constexpr ExamCategory category_of_head(std::size_t head) noexcept { return category_at(head + 1); }

std::string_view to_string(ExamCategory c) noexcept;
std::optional<ExamCategory> parse_category(std::string_view name) noexcept;

/// Set over the 13 categories, stored as a bit field (bit i = category i).
class CategorySet {
public:
    constexpr CategorySet() noexcept = default;
    constexpr explicit CategorySet(std::uint16_t bits) noexcept : bits_(bits & kFull) {}
    constexpr CategorySet(std::initializer_list<ExamCategory> cats) noexcept {
        for (auto c : cats) bits_ |= bit(c);
    }

    static constexpr CategorySet all() noexcept { return CategorySet(kFull); }

    constexpr bool contains(ExamCategory c) const noexcept { return (bits_ & bit(c)) != 0; }
    constexpr void insert(ExamCategory c) noexcept { bits_ |= bit(c); }
    constexpr void erase(ExamCategory c) noexcept { bits_ &= static_cast<std::uint16_t>(~bit(c)); }
    constexpr std::size_t size() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint16_t bits() const noexcept { return bits_; }

    /// Subset test (not necessarily proper).
    constexpr bool is_subset_of(CategorySet other) const noexcept { return (bits_ & ~other.bits_) == 0; }
    constexpr bool is_proper_subset_of(CategorySet other) const noexcept {
        return is_subset_of(other) && bits_ != other.bits_;
    }
    constexpr CategorySet operator|(CategorySet o) const noexcept { return CategorySet(bits_ | o.bits_); }
    constexpr CategorySet operator&(CategorySet o) const noexcept { return CategorySet(bits_ & o.bits_); }
    constexpr CategorySet minus(CategorySet o) const noexcept {
        return CategorySet(static_cast<std::uint16_t>(bits_ & ~o.bits_));
    }
    constexpr bool operator==(const CategorySet&) const noexcept = default;

    /// Members in ascending category index.
    std::vector<ExamCategory> members() const;

    /// Canonical strategy order: ascending cardinality, then lexicographic on
    /// the ascending list of member indices.
    static bool canonical_less(CategorySet a, CategorySet b) noexcept;

private:
    static constexpr std::uint16_t kFull = (1u << kNumCategories) - 1;
    static constexpr std::uint16_t bit(ExamCategory c) noexcept {
        return static_cast<std::uint16_t>(1u << index_of(c));
    }
    std::uint16_t bits_ = 0;
};

/// A diagnosis strategy: the categories acquired for one visit. Always holds Base.
using StrategyMask = CategorySet;

/// Sites differ in which categories they can execute. Base is always available.
using InstitutionCapability = CategorySet;

std::vector<std::string> category_names(CategorySet s);

/// Next-examination flags, one per examination head.
using ExamHeadTarget = std::array<bool, kNumExamHeads>;

}  // namespace opendx
