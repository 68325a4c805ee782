#pragma once
// End-to-end glue: training sets from a cohort split, two-stage training with
// in-process exam labeling, OpenMax fitting and evaluation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "opendx/bench.hpp"
#include "opendx/cohort.hpp"
#include "opendx/exam_labeler.hpp"
#include "opendx/openmax.hpp"
#include "opendx/policy.hpp"
#include "opendx/split.hpp"
#include "opendx/training.hpp"

namespace opendx {

/// Which backbone a label record was computed with.
enum class ModelRole { Main, FirstVisit };

struct LabeledStrategy {
    ModelRole role = ModelRole::Main;
    ExamLabelRecord record;
};

/// Label records with a "model" field ("main" or "first_visit").
void write_labeled(std::ostream& out, const std::vector<LabeledStrategy>& labels);
/// Throws ParseError with the 1-based line number.
std::vector<LabeledStrategy> read_labeled(std::istream& in);

/// Up to `cap` strategies: the smallest (Base only), the largest and a seeded
/// sample of the rest, in canonical order. cap 0 keeps all.
std::vector<StrategyMask> sample_strategies(const std::vector<StrategyMask>& canonical, std::size_t cap,
                                            std::uint64_t seed);

/// Pooled stage-1 examples for every known-label visit of the Train partition,
/// strategies sampled per visit up to strategies_per_visit.
std::vector<PooledExample> build_stage1_examples(const Cohort& cohort, const SplitSpec& split, const TrainConfig& config,
                                           bool first_visit_only = false);

/// Exam labels for every strategy of every known-label Train visit.
std::vector<ExamLabelRecord> label_training_visits(const BackboneModel& model, const Cohort& cohort,
                                                   const SplitSpec& split, bool first_visit_only = false);

/// Stage-2 examples from label records: per visit the full and Base-only
/// strategies plus a seeded sample, up to labeled_per_visit.
std::vector<PooledExample> build_stage2_examples(const Cohort& cohort, const std::vector<ExamLabelRecord>& labels,
                                           const TrainConfig& config);

struct TrainOutcome {
    ModelBundle bundle;
    std::vector<LabeledStrategy> labels;
};

/// Stage 1, labeling and stage 2 for the main model and, when requested, the
/// first-visit variant.
TrainOutcome train_system(const Cohort& cohort, const SplitSpec& split, const TrainConfig& config,
                          bool first_visit_variant, const EpochObserver& observer = {});

/// Stage 1 only (exam heads left at zero) for both models.
ModelBundle train_stage1_bundle(const Cohort& cohort, const SplitSpec& split, const TrainConfig& config,
                                bool first_visit_variant, const EpochObserver& observer = {});

/// Labels every Train strategy with the model that serves it.
std::vector<LabeledStrategy> label_bundle(const ModelBundle& bundle, const Cohort& cohort, const SplitSpec& split);

/// Stage 2 for both models of a stage-1 bundle.
ModelBundle train_stage2_bundle(ModelBundle bundle, const Cohort& cohort, const std::vector<LabeledStrategy>& labels,
                                const TrainConfig& config, const EpochObserver& observer = {});

/// Abnormal patterns of Train visits whose full-strategy prediction is correct,
/// grouped by class (0 = AD, 1 = CN).
std::array<std::vector<AbnormalPattern>, 2> correct_training_patterns(const ModelBundle& bundle, const Cohort& cohort,
                                                                     const SplitSpec& split,
                                                                     const IndicatorTable& table);

OpenMaxModel fit_openmax_for(const ModelBundle& bundle, const Cohort& cohort, const SplitSpec& split,
                             const IndicatorTable& table, const OpenMaxOptions& options);

struct PipelineConfig {
    CohortConfig cohort{};
    SettingMode mode = SettingMode::RealWorld;
    std::uint64_t split_seed = 11;
    TrainConfig train{};
    bool first_visit_variant = true;
    OpenMaxOptions openmax{};
    PolicyConfig policy{};
    EvaluationOptions evaluation{};

    void validate() const;
};

/// Sections: cohort, split {mode, seed}, train, first_visit_variant, openmax,
/// policy, evaluation. Missing keys keep their defaults.
nlohmann::json pipeline_config_to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json evaluation_options_to_json(const EvaluationOptions& o);
EvaluationOptions evaluation_options_from_json(const nlohmann::json& j);

/// Applies a top-level --seed to every stream of the configuration.
void reseed(PipelineConfig& c, std::uint64_t seed);

struct PipelineResult {
    Cohort cohort;
    SplitSpec split;
    ModelBundle bundle;
    OpenMaxModel openmax;
    EvaluationReport report;
};

/// Generate, split, train, label, fit and evaluate.
PipelineResult run_pipeline(const PipelineConfig& config, const IndicatorTable& table = IndicatorTable::defaults(),
                            const EpochObserver& observer = {});

}  // namespace opendx
