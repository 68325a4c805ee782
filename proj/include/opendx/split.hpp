#pragma once
// Train / validation / test assignment for the real-world and closed settings.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "opendx/visit.hpp"

namespace opendx {

enum class SettingMode { RealWorld, Closed };
enum class Partition { Train, Validation, Test };

std::string_view to_string(SettingMode m) noexcept;
std::string_view to_string(Partition p) noexcept;
std::optional<SettingMode> parse_mode(std::string_view s) noexcept;
std::optional<Partition> parse_partition(std::string_view s) noexcept;

struct SplitSpec {
    SettingMode mode = SettingMode::RealWorld;
    std::uint64_t seed = 0;
    /// Subjects absent from the map take part in no partition.
    std::map<std::string, Partition> assignment;

    std::optional<Partition> partition_of(const std::string& subject_id) const;
    std::size_t count(Partition p) const;

    bool operator==(const SplitSpec&) const = default;
};

/// Subject-level label: a subject with any MCI / SMC visit is unknown; a
/// subject whose labeled visits are all AD / CN takes the label of its last
/// labeled visit; a subject without labeled visits is Unlabeled.
Label subject_label(const Subject& subject);

/// Known subjects draw u in [0,1) from (seed, subject id): Train below 0.8,
/// Validation below 0.85, Test otherwise. RealWorld sends every MCI / SMC
/// subject to Test; Closed drops them. Throws DegenerateSplit in RealWorld mode
/// when exactly one of AD / CN has no subjects.
SplitSpec split_clinical_aibench(const Cohort& cohort, SettingMode mode, std::uint64_t seed);

/// The u draw used by the split, exposed for tests.
double split_draw(std::uint64_t seed, std::string_view subject_id) noexcept;

}  // namespace opendx
