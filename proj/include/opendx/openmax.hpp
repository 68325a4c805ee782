#pragma once
// Open-set calibration on abnormal indicator patterns.
//
// A visit's pattern holds, for each of the 14 indicators, one flag for "outside
// the AD normal range" and one for "outside the CN normal range" (entries 2i and
// 2i+1). Each known class keeps a few pattern centers, a Weibull model of how far
// its own correctly classified visits fall from them, and a distance threshold.
// Scoring moves activation mass to an extra Unknown outcome as the distance
// grows.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "opendx/indicators.hpp"
#include "opendx/kmeans.hpp"
#include "opendx/visit.hpp"
#include "opendx/weibull.hpp"

namespace opendx {

inline constexpr std::size_t kPatternSize = 2 * kNumIndicators;

using AbnormalPattern = std::array<std::uint8_t, kPatternSize>;

/// Outcome order of calibrated probabilities.
enum class Outcome { Unknown = 0, AD = 1, CN = 2 };
inline constexpr std::size_t kNumOutcomes = 3;
using OutcomeProbs = std::array<double, kNumOutcomes>;

AbnormalPattern extract_abnormal_pattern(const std::map<std::string, double>& indicators, const IndicatorTable& table);
AbnormalPattern extract_abnormal_pattern(const VisitRecord& visit, const IndicatorTable& table);

Point to_point(const AbnormalPattern& p);

/// Euclidean distance divided by sqrt(28), so patterns lie within distance 1.
double normalized_distance(const Point& a, const Point& b);

/// sqrt(m_own^2 + (1 - m_other)^2), m = nearest normalized distance to a center
/// set. Throws ModelNotFitted when either set is empty.
double pattern_distance(const Point& x, const std::vector<Point>& own_centers, const std::vector<Point>& other_centers);

struct OpenMaxOptions {
    std::array<std::size_t, 2> centers{3, 3};       // per class (AD, CN)
    std::array<double, 2> quantile{0.95, 0.95};    // per class
    std::size_t alpha = 2;
    bool abnormal_penalty = true;
    WeibullFitOptions tail{};
    std::size_t kmeans_batch = 64;
    std::size_t kmeans_iterations = 100;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const OpenMaxOptions&) const = default;
};

struct ClassModel {
    std::vector<Point> centers;
    WeibullTail tail;
    double threshold = 0;

    bool operator==(const ClassModel&) const = default;
};

struct OpenMaxModel {
    std::array<ClassModel, 2> classes;  // AD, CN
    std::size_t alpha = 2;
    bool abnormal_penalty = true;
    std::uint64_t seed = 0;

    bool fitted() const noexcept { return !classes[0].centers.empty() && !classes[1].centers.empty(); }
    /// Distance of x to class c (0 = AD, 1 = CN).
    double distance(const Point& x, std::size_t c) const;

    bool operator==(const OpenMaxModel&) const = default;
};

/// Nearest-rank quantile: the smallest value with at least q of the sample at
/// or below it.
double nearest_rank_quantile(std::vector<double> values, double q);

/// Fits centers, tails and thresholds from correctly classified training
/// patterns of each class (index 0 = AD, 1 = CN).
OpenMaxModel fit_openmax(const std::array<std::vector<AbnormalPattern>, 2>& patterns, const OpenMaxOptions& options);

/// Calibrated (Unknown, AD, CN) probabilities from a pattern and the two class
/// activations.
OutcomeProbs openmax_probs(const AbnormalPattern& x, const std::array<double, 2>& activations,
                           const OpenMaxModel& model);

/// Same computation from precomputed distances and tails.
OutcomeProbs openmax_from_distances(const std::array<double, 2>& distances, const std::array<double, 2>& activations,
                                    const std::array<WeibullTail, 2>& tails, const std::array<double, 2>& thresholds,
                                    std::size_t alpha, bool abnormal_penalty);

/// Shrinks each known probability by its abnormality score and hands the
/// removed mass to Unknown.
OutcomeProbs apply_abnormal_penalty(const OutcomeProbs& probs, const std::array<double, 2>& abnormality);

/// clamp((d - thr) / thr, 0, 1) above the threshold, 0 otherwise.
double abnormality_score(double distance, double threshold) noexcept;

nlohmann::json openmax_to_json(const OpenMaxModel& m);
OpenMaxModel openmax_from_json(const nlohmann::json& j);
nlohmann::json openmax_options_to_json(const OpenMaxOptions& o);
OpenMaxOptions openmax_options_from_json(const nlohmann::json& j);

}  // namespace opendx
