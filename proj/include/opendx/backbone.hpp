#pragma once
// Reference scoring backbone.
//
//   pooled  p = [mean of sequence blocks (W) | current-visit presence mask (13) | 1 - 1/visits]
//   stage 1 h = tanh(W1 p + b1)
//           activations z = Wd h + bd            (AD, CN)
//           reconstruction r = sigmoid(Wr h + br) (W + 14, target p)
//   stage 2 g = tanh(A [p | softmax(z)] + a)
//           exam scores e = sigmoid(B g + b)     (12 heads, Cog .. CSF)
//           log sigma (12), one per exam head
//
// Stage 1 plays the role of encoder / decoder / diagnosis classifier, stage 2
// the exam-selection sub-model whose input is raw data plus class probabilities.
// Each stage's parameters live in one flat vector so optimizers, gradient checks
// and checkpoints handle them uniformly.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include <Eigen/Dense>
#include <json.hpp>

#include "opendx/exam.hpp"
#include "opendx/visit.hpp"

namespace opendx {

inline constexpr std::size_t kNumKnownClasses = 2;  // AD, CN
/// Width added to the mean block by pooling: presence mask plus visit scalar.
inline constexpr std::size_t kPoolExtra = kNumCategories + 1;

struct BackboneShape {
    std::size_t width = 32;
    std::size_t hidden = 32;
    std::size_t exam_hidden = 32;

    std::size_t input_dim() const noexcept { return width + kPoolExtra; }
    std::size_t stage1_size() const noexcept;
    std::size_t stage2_size() const noexcept;

    bool operator==(const BackboneShape&) const = default;
};

struct ForwardResult {
    std::array<double, kNumKnownClasses> activations{};
    std::array<double, kNumKnownClasses> class_probs{};
    std::array<double, kNumExamHeads> exam_scores{};
    Eigen::VectorXd reconstruction;
};

class BackboneModel {
public:
    /// All parameters zero.
    explicit BackboneModel(const BackboneShape& shape = {});

    /// Scaled Gaussian weights, zero biases, log sigma = 0. The diagnosis head
    /// starts antisymmetric (CN row = -AD row); two-class cross-entropy updates
    /// preserve that up to rounding, so activations stay centred on 0.
    static BackboneModel initialized(const BackboneShape& shape, std::uint64_t seed);

    const BackboneShape& shape() const noexcept { return shape_; }

    Eigen::VectorXd& stage1() noexcept { return stage1_; }
    const Eigen::VectorXd& stage1() const noexcept { return stage1_; }
    Eigen::VectorXd& stage2() noexcept { return stage2_; }
    const Eigen::VectorXd& stage2() const noexcept { return stage2_; }

    /// Last 12 entries of stage 2.
    Eigen::Ref<const Eigen::VectorXd> log_sigmas() const;

    bool operator==(const BackboneModel& o) const {
        return shape_ == o.shape_ && stage1_ == o.stage1_ && stage2_ == o.stage2_;
    }

private:
    BackboneShape shape_;
    Eigen::VectorXd stage1_;
    Eigen::VectorXd stage2_;
};

/// Views onto the flat parameter vectors.
struct Stage1View {
    Eigen::Map<const Eigen::MatrixXd> w1;
    Eigen::Map<const Eigen::VectorXd> b1;
    Eigen::Map<const Eigen::MatrixXd> wd;
    Eigen::Map<const Eigen::VectorXd> bd;
    Eigen::Map<const Eigen::MatrixXd> wr;
    Eigen::Map<const Eigen::VectorXd> br;
};
struct Stage1MutView {
    Eigen::Map<Eigen::MatrixXd> w1;
    Eigen::Map<Eigen::VectorXd> b1;
    Eigen::Map<Eigen::MatrixXd> wd;
    Eigen::Map<Eigen::VectorXd> bd;
    Eigen::Map<Eigen::MatrixXd> wr;
    Eigen::Map<Eigen::VectorXd> br;
};
struct Stage2View {
    Eigen::Map<const Eigen::MatrixXd> a;
    Eigen::Map<const Eigen::VectorXd> a_bias;
    Eigen::Map<const Eigen::MatrixXd> b;
    Eigen::Map<const Eigen::VectorXd> b_bias;
    Eigen::Map<const Eigen::VectorXd> log_sigma;
};
struct Stage2MutView {
    Eigen::Map<Eigen::MatrixXd> a;
    Eigen::Map<Eigen::VectorXd> a_bias;
    Eigen::Map<Eigen::MatrixXd> b;
    Eigen::Map<Eigen::VectorXd> b_bias;
    Eigen::Map<Eigen::VectorXd> log_sigma;
};

Stage1View stage1_view(const BackboneShape& s, const Eigen::VectorXd& flat);
Stage1MutView stage1_view(const BackboneShape& s, Eigen::VectorXd& flat);
Stage2View stage2_view(const BackboneShape& s, const Eigen::VectorXd& flat);
Stage2MutView stage2_view(const BackboneShape& s, Eigen::VectorXd& flat);

/// Pools a sequence into the model input. Throws ShapeError on an empty
/// sequence or a block whose width is not `width`.
Eigen::VectorXd pool_sequence(const FeatureSequence& seq, std::size_t width);

ForwardResult forward(const BackboneModel& model, const FeatureSequence& seq);
ForwardResult forward_pooled(const BackboneModel& model, const Eigen::Ref<const Eigen::VectorXd>& pooled);

nlohmann::json backbone_to_json(const BackboneModel& model);
BackboneModel backbone_from_json(const nlohmann::json& j);

/// Main model plus the optional first-visit variant, saved together.
struct ModelBundle {
    BackboneModel main;
    std::optional<BackboneModel> first_visit;
    nlohmann::json config_echo = nlohmann::json::object();

    /// First-visit sessions use the variant when one was trained.
    const BackboneModel& route(int visit_index) const noexcept {
        return visit_index == 0 && first_visit ? *first_visit : main;
    }
};

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace opendx
