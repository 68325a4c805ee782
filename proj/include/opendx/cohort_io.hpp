#pragma once
// Cohort files and the JSON forms of cohort-side configuration.
//
// Cohort file: UTF-8 JSONL, one visit per line:
//   {"subject_id": str, "visit_index": int, "label": "AD"|"CN"|"MCI"|"SMC"|null,
//    "blocks": {"<Category>": [float, ...]}, "indicators": {"<name>": float}}
// Visits of one subject are grouped in order of first appearance and sorted by
// visit_index.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include <json.hpp>

#include "opendx/cohort.hpp"
#include "opendx/indicators.hpp"
#include "opendx/split.hpp"

namespace opendx {

/// Throws ParseError (with line number) or SchemaError.
Cohort read_cohort(std::istream& in, std::optional<std::size_t> expected_width = std::nullopt);
Cohort load_cohort(const std::filesystem::path& path, std::optional<std::size_t> expected_width = std::nullopt);

void write_cohort(std::ostream& out, const Cohort& cohort);
void save_cohort(const std::filesystem::path& path, const Cohort& cohort);

nlohmann::json visit_to_json(const VisitRecord& v);
VisitRecord visit_from_json(const nlohmann::json& j);

/// Indicator table as a JSON array of {name, ad_low, ad_high, cn_low, cn_high, source?}.
nlohmann::json indicator_table_to_json(const IndicatorTable& t);
IndicatorTable indicator_table_from_json(const nlohmann::json& j);
IndicatorTable load_indicator_table(const std::filesystem::path& path);

/// Flat CSV with a header `subject_id,visit_index,<indicator>...`; empty cells
/// are missing values. Returns (subject_id, visit_index) -> values.
using IndicatorSheet = std::map<std::pair<std::string, int>, std::map<std::string, double>>;
IndicatorSheet read_indicator_csv(std::istream& in, const IndicatorTable& table);

/// Replaces the indicators of every visit listed in the sheet.
void merge_indicators(Cohort& cohort, const IndicatorSheet& sheet);

nlohmann::json split_to_json(const SplitSpec& s);
SplitSpec split_from_json(const nlohmann::json& j);

nlohmann::json cohort_config_to_json(const CohortConfig& c);
/// Missing keys keep their defaults.
CohortConfig cohort_config_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace opendx
