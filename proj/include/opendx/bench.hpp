#pragma once
// Benchmark evaluation: AUC, operating-point sensitivities, bootstrap
// intervals and whole-session replay over a test partition.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "opendx/policy.hpp"
#include "opendx/split.hpp"

namespace opendx {

/// Mann-Whitney AUC with average ranks (ties count one half). Throws
/// UndefinedMetric unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const bool> positive);

struct OutcomeCase {
    OutcomeProbs probs{};
    Outcome truth = Outcome::Unknown;
};

/// Ground truth outcome of a visit label: MCI and SMC count as Unknown.
std::optional<Outcome> outcome_of(Label l) noexcept;

/// Fraction of class-`c` cases whose threshold decision is `c`. Throws
/// UndefinedMetric when the class has no cases.
double sensitivity(std::span<const OutcomeCase> cases, Outcome c, const OutcomeThresholds& delta);

/// Sensitivity of every outcome, empty where the class has no cases.
std::array<std::optional<double>, kNumOutcomes> sensitivities_at_operating_point(std::span<const OutcomeCase> cases,
                                                                                const OutcomeThresholds& delta);

struct BootstrapOptions {
    std::size_t n_sample = 2500;
    std::size_t n_trials = 2000;
    std::uint64_t seed = 0;
    /// Fraction of skipped trials above which the interval is rejected.
    double max_skip_fraction = 0.1;
};

struct Interval {
    double lo = 0, hi = 0;
    std::size_t skipped = 0;
};

/// Metric over a resample, given as indices into the case list. Throwing
/// UndefinedMetric skips the trial.
using ResampleMetric = std::function<double(std::span<const std::size_t>)>;

/// Percentile interval (nearest-rank 2.5th / 97.5th) of the metric over
/// with-replacement resamples. Throws UnstableMetric when more than
/// max_skip_fraction of the trials are skipped.
Interval bootstrap_ci(const ResampleMetric& metric, std::size_t n_cases, const BootstrapOptions& options);

struct MetricEstimate {
    double value = 0;
    double lo = 0, hi = 0;
    std::size_t skipped = 0;
};

struct SessionTrace {
    std::string subject_id;
    int visit_index = 0;
    Label label = Label::Unlabeled;
    Outcome truth = Outcome::Unknown;
    InstitutionCapability capability;
    StrategyMask acquired;
    CategorySet refused;
    Outcome decision = Outcome::Unknown;
    OutcomeProbs probs{};
    std::size_t steps = 0;
    std::size_t requests = 0;
    std::size_t fallback_requests = 0;
};

struct EvaluationOptions {
    SettingMode mode = SettingMode::RealWorld;
    std::uint64_t seed = 0;
    /// Probability that a non-Base category is available to a session.
    double capability_prob = 0.8;
    /// Fixed capability for every session instead of sampling.
    std::optional<InstitutionCapability> capability;
    BootstrapOptions bootstrap{};
    std::size_t threads = 1;

    void validate() const;
};

struct EvaluationReport {
    SettingMode mode = SettingMode::RealWorld;
    std::size_t sessions = 0;
    std::array<std::size_t, kNumOutcomes> class_counts{};
    std::optional<MetricEstimate> auc_ad, auc_cn;
    std::array<std::optional<MetricEstimate>, kNumOutcomes> sensitivity;
    MetricEstimate accuracy;
    std::array<std::size_t, kNumCategories> exam_usage{};
    std::map<std::string, std::size_t> strategy_census;
    std::size_t requests = 0;
    std::size_t fallback_requests = 0;
    std::size_t refusals = 0;
    std::vector<SessionTrace> traces;
};

/// Capability sample of one session.
InstitutionCapability sample_capability(std::uint64_t seed, const std::string& subject_id, int visit_index,
                                        double prob);

/// Runs one session over a recorded visit: requested exams present in the
/// record are answered with its block, the others are refused.
SessionTrace replay_visit(const PolicyEngine& engine, const Subject& subject, std::size_t visit_position,
                          const InstitutionCapability& capability);

/// A session per labeled visit of every Test subject, then metric aggregation.
/// Closed mode keeps AD / CN visits only.
EvaluationReport evaluate_system(const SplitSpec& split, const Cohort& cohort, const PolicyEngine& engine,
                                 const EvaluationOptions& options);

/// Metrics and bootstrap intervals from traces alone.
EvaluationReport summarize(std::vector<SessionTrace> traces, SettingMode mode, const OutcomeThresholds& delta,
                           const BootstrapOptions& bootstrap);

nlohmann::json report_to_json(const EvaluationReport& r);
void write_report_text(std::ostream& out, const EvaluationReport& r);
void write_traces_csv(std::ostream& out, const EvaluationReport& r);

}  // namespace opendx
