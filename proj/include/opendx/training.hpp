#pragma once
// Two-stage training of the backbone with Adam.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "opendx/backbone.hpp"
#include "opendx/losses.hpp"

namespace opendx {

struct TrainConfig {
    double learning_rate = 0.0005;
    std::size_t batch_size = 64;
    std::size_t stage1_epochs = 30;
    std::size_t stage2_epochs = 20;
    std::uint64_t seed = 7;
    std::size_t hidden = 32;
    std::size_t exam_hidden = 32;
    LossMix mix{};
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Strategy samples drawn per training visit for stage 1 (full and
    /// Base-only strategies always included). 0 = every strategy.
    std::size_t strategies_per_visit = 24;
    /// Same cap for the labeled stage-2 samples.
    std::size_t labeled_per_visit = 24;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Index into (AD, CN).
enum class KnownClass : std::uint8_t { AD = 0, CN = 1 };
std::optional<KnownClass> known_class_of(Label l) noexcept;

struct Example {
    FeatureSequence sequence;
    KnownClass target = KnownClass::AD;
    std::optional<ExamHeadTarget> exam_target;
};

/// Pooled form used by the trainer.
struct PooledExample {
    Eigen::VectorXd input;
    KnownClass target = KnownClass::AD;
    std::optional<ExamHeadTarget> exam_target;
    int visit_index = 0;
};

PooledExample pool_example(const Example& e, std::size_t width);

/// Mean stage-1 loss over the batch; when `grad` is given it receives the
/// gradient with respect to the flat stage-1 parameters.
double stage1_loss(const BackboneModel& model, std::span<const PooledExample> batch, const LossMix& mix,
                   Eigen::VectorXd* grad = nullptr);

/// Per-head positive / negative counts of a labeled set.
std::array<HeadCounts, kNumExamHeads> count_heads(std::span<const PooledExample> labeled);

/// Mean exam-selection loss over the batch (samples without an exam target are
/// skipped); gradient with respect to the flat stage-2 parameters.
double stage2_loss(const BackboneModel& model, std::span<const PooledExample> batch,
                   const std::array<HeadCounts, kNumExamHeads>& counts, Eigen::VectorXd* grad = nullptr);

class Adam {
public:
    Adam(Eigen::Index n, double lr, double beta1, double beta2, double epsilon);
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

private:
    Eigen::VectorXd m_, v_;
    double lr_, beta1_, beta2_, epsilon_;
    double beta1_t_ = 1.0, beta2_t_ = 1.0;
};

/// Per-epoch mean loss, reported to an optional observer.
using EpochObserver = std::function<void(int stage, std::size_t epoch, double loss)>;

BackboneModel train_stage1(std::span<const PooledExample> data, const TrainConfig& config, std::size_t width,
                           const EpochObserver& observer = {});

/// Trains the exam heads and log sigmas of `model` with stage 1 frozen.
BackboneModel train_stage2(BackboneModel model, std::span<const PooledExample> labeled, const TrainConfig& config,
                           const EpochObserver& observer = {});

/// Stage 1 on every example, then stage 2 on the examples carrying an exam
/// target (skipped when none do). Throws EmptyDataset or TrainingDiverged.
BackboneModel train(std::span<const Example> data, const TrainConfig& config, const EpochObserver& observer = {});

/// `train` restricted to first-visit (visit index 0) examples.
BackboneModel train_first_visit_variant(std::span<const Example> data, const TrainConfig& config,
                                        const EpochObserver& observer = {});

}  // namespace opendx
