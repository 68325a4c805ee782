#pragma once
// Synthetic cohort generation.
//
// Blocks are Gaussian around 0.5 with per-category class offsets: the AD and CN
// means of every category sit `separation` noise standard deviations apart along
// a category direction that shares a common component across categories, so
// pooling more blocks sharpens the AD/CN contrast. MCI and SMC are offset along
// directions orthogonal to it. Indicators are drawn against the indicator table:
// known classes fall inside their own normal range with probability
// `indicator_in_range_prob` per indicator, unknown classes mostly fall between
// the AD and CN ranges.

#include <array>
#include <cstddef>
#include <cstdint>

#include "opendx/indicators.hpp"
#include "opendx/visit.hpp"

namespace opendx {

struct ClassCounts {
    std::size_t ad = 0, cn = 0, mci = 0, smc = 0;

    std::size_t total() const noexcept { return ad + cn + mci + smc; }
    bool operator==(const ClassCounts&) const = default;
};

struct CohortConfig {
    ClassCounts n_subjects{100, 100, 100, 100};
    std::size_t width = 32;
    double separation = 3.0;
    double block_noise = 0.1;
    /// Per-category probability that a visit lacks the block. Base is never dropped.
    std::array<double, kNumCategories> missingness = filled(0.4);
    std::size_t max_visits = 3;
    double indicator_in_range_prob = 0.95;
    double indicator_missing_prob = 0.0;
    /// Probability that an MCI / SMC indicator lands between the AD and CN ranges.
    double mci_between_prob = 0.8;
    double smc_between_prob = 0.6;
    std::uint64_t seed = 1;

    /// Throws ConfigError.
    void validate() const;

    bool operator==(const CohortConfig&) const = default;

    static constexpr std::array<double, kNumCategories> filled(double p) {
        std::array<double, kNumCategories> a{};
        for (auto& x : a) x = p;
        a[0] = 0.0;
        return a;
    }
};

Cohort generate_cohort(const CohortConfig& config, const IndicatorTable& table = IndicatorTable::defaults());

}  // namespace opendx
