#include "opendx/training.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (hidden == 0 || exam_hidden == 0) throw ConfigError("hidden widths must be >= 1");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
        throw ConfigError("Adam betas must lie in [0,1)");
    if (!(adam_epsilon > 0)) throw ConfigError("adam_epsilon must be > 0");
    if (mix.diagnosis < 0 || mix.reconstruction < 0) throw ConfigError("loss-mix weights must be >= 0");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"stage1_epochs", c.stage1_epochs},
            {"stage2_epochs", c.stage2_epochs},
            {"seed", c.seed},
            {"hidden", c.hidden},
            {"exam_hidden", c.exam_hidden},
            {"mix", {{"diagnosis", c.mix.diagnosis}, {"reconstruction", c.mix.reconstruction}}},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"strategies_per_visit", c.strategies_per_visit},
            {"labeled_per_visit", c.labeled_per_visit}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.seed = j.value("seed", c.seed);
    c.hidden = j.value("hidden", c.hidden);
    c.exam_hidden = j.value("exam_hidden", c.exam_hidden);
    if (auto it = j.find("mix"); it != j.end()) {
        c.mix.diagnosis = it->value("diagnosis", c.mix.diagnosis);
        c.mix.reconstruction = it->value("reconstruction", c.mix.reconstruction);
    }
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.strategies_per_visit = j.value("strategies_per_visit", c.strategies_per_visit);
    c.labeled_per_visit = j.value("labeled_per_visit", c.labeled_per_visit);
    c.validate();
    return c;
}

std::optional<KnownClass> known_class_of(Label l) noexcept {
    if (l == Label::AD) return KnownClass::AD;
    if (l == Label::CN) return KnownClass::CN;
    return std::nullopt;
}

PooledExample pool_example(const Example& e, std::size_t width) {
    return {pool_sequence(e.sequence, width), e.target, e.exam_target, e.sequence.current_visit()};
}

namespace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

MatrixXd stack_inputs(std::span<const PooledExample> batch, std::size_t dim) {
    MatrixXd x(static_cast<Index>(dim), static_cast<Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (static_cast<std::size_t>(batch[b].input.size()) != dim)
            throw ShapeError("pooled example has size " + std::to_string(batch[b].input.size()) + ", expected " +
                             std::to_string(dim));
        x.col(static_cast<Index>(b)) = batch[b].input;
    }
    return x;
}

struct Stage1Pass {
    MatrixXd h, z, probs, recon;
};

Stage1Pass stage1_pass(const BackboneModel& model, const MatrixXd& x) {
    const auto s1 = stage1_view(model.shape(), model.stage1());
    Stage1Pass p;
    p.h = ((s1.w1 * x).colwise() + s1.b1).array().tanh().matrix();
    p.z = (s1.wd * p.h).colwise() + s1.bd;
    p.probs.resize(p.z.rows(), p.z.cols());
    for (Index b = 0; b < p.z.cols(); ++b) {
        const double m = p.z.col(b).maxCoeff();
        const auto e = (p.z.col(b).array() - m).exp();
        p.probs.col(b) = (e / e.sum()).matrix();
    }
    const ArrayXXd pre = ((s1.wr * p.h).colwise() + s1.br).array();
    p.recon = (1.0 / (1.0 + (-pre).exp())).matrix();
    return p;
}

}  // namespace

double stage1_loss(const BackboneModel& model, std::span<const PooledExample> batch, const LossMix& mix,
                   VectorXd* grad) {
    const auto& shape = model.shape();
    if (batch.empty()) {
        if (grad) *grad = VectorXd::Zero(model.stage1().size());
        return 0.0;
    }
    const auto d = static_cast<double>(shape.input_dim());
    const auto n = static_cast<double>(batch.size());
    const MatrixXd x = stack_inputs(batch, shape.input_dim());
    const Stage1Pass p = stage1_pass(model, x);

    double loss = 0;
    MatrixXd dz = p.probs;
    for (Index b = 0; b < x.cols(); ++b) {
        const auto t = static_cast<Index>(batch[static_cast<std::size_t>(b)].target);
        const double m = p.z.col(b).maxCoeff();
        const double lse = m + std::log((p.z.col(b).array() - m).exp().sum());
        loss += mix.diagnosis * (lse - p.z(t, b));
        dz(t, b) -= 1.0;
    }
    const ArrayXXd log_diff = p.recon.array().log1p() - x.array().log1p();
    loss += mix.reconstruction * (log_diff.square().sum() / d);
    loss /= n;

    if (grad) {
        const auto s1 = stage1_view(shape, model.stage1());
        grad->setZero(model.stage1().size());
        auto g = stage1_view(shape, *grad);
        dz *= mix.diagnosis / n;
        const MatrixXd dr_pre = (mix.reconstruction * 2.0 / (d * n) * log_diff / (1.0 + p.recon.array()) *
                                 p.recon.array() * (1.0 - p.recon.array()))
                                    .matrix();
        g.wr = dr_pre * p.h.transpose();
        g.br = dr_pre.rowwise().sum();
        g.wd = dz * p.h.transpose();
        g.bd = dz.rowwise().sum();
        const MatrixXd dh_pre =
            ((s1.wd.transpose() * dz + s1.wr.transpose() * dr_pre).array() * (1.0 - p.h.array().square())).matrix();
        g.w1 = dh_pre * x.transpose();
        g.b1 = dh_pre.rowwise().sum();
    }
    return loss;
}

std::array<HeadCounts, kNumExamHeads> count_heads(std::span<const PooledExample> labeled) {
    std::array<HeadCounts, kNumExamHeads> counts{};
    for (const auto& e : labeled) {
        if (!e.exam_target) continue;
        for (std::size_t i = 0; i < kNumExamHeads; ++i) ((*e.exam_target)[i] ? counts[i].positives : counts[i].negatives)++;
    }
    return counts;
}

double stage2_loss(const BackboneModel& model, std::span<const PooledExample> batch,
                   const std::array<HeadCounts, kNumExamHeads>& counts, VectorXd* grad) {
    const auto& shape = model.shape();
    std::vector<PooledExample> labeled;
    for (const auto& e : batch)
        if (e.exam_target) labeled.push_back(e);
    if (grad) grad->setZero(model.stage2().size());
    if (labeled.empty()) return 0.0;

    const auto n = static_cast<double>(labeled.size());
    const MatrixXd x = stack_inputs(labeled, shape.input_dim());
    const Stage1Pass p1 = stage1_pass(model, x);
    MatrixXd q(x.rows() + p1.probs.rows(), x.cols());
    q << x, p1.probs;

    const auto s2 = stage2_view(shape, model.stage2());
    const MatrixXd g = ((s2.a * q).colwise() + s2.a_bias).array().tanh().matrix();
    const MatrixXd u = (s2.b * g).colwise() + s2.b_bias;

    double loss = 0;
    MatrixXd du = MatrixXd::Zero(u.rows(), u.cols());
    VectorXd dsig = VectorXd::Zero(static_cast<Index>(kNumExamHeads));
    for (std::size_t i = 0; i < kNumExamHeads; ++i) {
        if (counts[i].positives == 0 || counts[i].negatives == 0) continue;
        const ClassWeights w = class_weights(counts[i]);
        const double s = s2.log_sigma[static_cast<Index>(i)];
        const double precision = std::exp(-2.0 * s);
        double bce_sum = 0;
        for (Index b = 0; b < u.cols(); ++b) {
            const double ui = u(static_cast<Index>(i), b);
            const double yhat = 1.0 / (1.0 + std::exp(-ui));
            if ((*labeled[static_cast<std::size_t>(b)].exam_target)[i]) {
                bce_sum += w.positive * softplus(-ui);
                du(static_cast<Index>(i), b) = 0.5 * precision / n * w.positive * (yhat - 1.0);
            } else {
                bce_sum += w.negative * softplus(ui);
                du(static_cast<Index>(i), b) = 0.5 * precision / n * w.negative * yhat;
            }
        }
        const double mean_bce = bce_sum / n;
        loss += 0.5 * precision * mean_bce + s;
        dsig[static_cast<Index>(i)] = -precision * mean_bce + 1.0;
    }

    if (grad) {
        auto gv = stage2_view(shape, *grad);
        gv.b = du * g.transpose();
        gv.b_bias = du.rowwise().sum();
        gv.log_sigma = dsig;
        const MatrixXd dg_pre = ((s2.b.transpose() * du).array() * (1.0 - g.array().square())).matrix();
        gv.a = dg_pre * q.transpose();
        gv.a_bias = dg_pre.rowwise().sum();
    }
    return loss;
}

Adam::Adam(Index n, double lr, double beta1, double beta2, double epsilon)
    : m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
    beta1_t_ *= beta1_;
    beta2_t_ *= beta2_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - beta1_t_;
    const double c2 = 1.0 - beta2_t_;
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    return order;
}

template <class LossFn>
void run_epochs(Eigen::VectorXd& params, std::span<const PooledExample> data, const TrainConfig& config,
                std::size_t epochs, int stage, const LossFn& loss_fn, const EpochObserver& observer) {
    Adam adam(params.size(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
    std::vector<PooledExample> batch;
    VectorXd grad;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto order =
            shuffled(data.size(), derive_seed(config.seed, "stage" + std::to_string(stage) + "-epoch-" + std::to_string(epoch)));
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
            const double loss = loss_fn(params, batch, grad);
            if (!std::isfinite(loss) || !grad.allFinite()) throw TrainingDiverged(static_cast<int>(epoch));
            total += loss * static_cast<double>(batch.size());
            adam.step(params, grad);
        }
        if (observer) observer(stage, epoch, total / static_cast<double>(data.size()));
    }
}

std::size_t sequence_width(const FeatureSequence& seq) {
    if (seq.empty()) throw ShapeError("empty feature sequence in training data");
    return seq.entries.front().block.size();
}

}  // namespace

BackboneModel train_stage1(std::span<const PooledExample> data, const TrainConfig& config, std::size_t width,
                           const EpochObserver& observer) {
    config.validate();
    if (data.empty()) throw EmptyDataset("stage-1 training set is empty");
    const BackboneShape shape{width, config.hidden, config.exam_hidden};
    BackboneModel model = BackboneModel::initialized(shape, config.seed);
    run_epochs(
        model.stage1(), data, config, config.stage1_epochs, 1,
        [&](const VectorXd& params, std::span<const PooledExample> batch, VectorXd& grad) {
            model.stage1() = params;
            return stage1_loss(model, batch, config.mix, &grad);
        },
        observer);
    return model;
}

BackboneModel train_stage2(BackboneModel model, std::span<const PooledExample> labeled, const TrainConfig& config,
                           const EpochObserver& observer) {
    config.validate();
    std::vector<PooledExample> data;
    for (const auto& e : labeled)
        if (e.exam_target) data.push_back(e);
    if (data.empty()) throw EmptyDataset("stage-2 training set has no labeled examples");
    const auto counts = count_heads(data);
    // Parameters are copied into the model before every loss evaluation; the
    // working copy is what Adam updates.
    VectorXd params = model.stage2();
    run_epochs(
        params, data, config, config.stage2_epochs, 2,
        [&](const VectorXd& p, std::span<const PooledExample> batch, VectorXd& grad) {
            model.stage2() = p;
            return stage2_loss(model, batch, counts, &grad);
        },
        observer);
    model.stage2() = params;
    return model;
}

BackboneModel train(std::span<const Example> data, const TrainConfig& config, const EpochObserver& observer) {
    if (data.empty()) throw EmptyDataset("training set is empty");
    const std::size_t width = sequence_width(data.front().sequence);
    std::vector<PooledExample> pooled;
    pooled.reserve(data.size());
    bool any_labeled = false;
    for (const auto& e : data) {
        pooled.push_back(pool_example(e, width));
        any_labeled = any_labeled || e.exam_target.has_value();
    }
    BackboneModel model = train_stage1(pooled, config, width, observer);
    if (any_labeled) model = train_stage2(std::move(model), pooled, config, observer);
    return model;
}

BackboneModel train_first_visit_variant(std::span<const Example> data, const TrainConfig& config,
                                        const EpochObserver& observer) {
    std::vector<Example> first;
    for (const auto& e : data)
        if (!e.sequence.empty() && e.sequence.current_visit() == 0 && e.sequence.visit_span() == 1)
            first.push_back(e);
    if (first.empty()) throw EmptyDataset("no first-visit examples");
    return train(first, config, observer);
}

}  // namespace opendx
