#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include "opendx/cohort.hpp"
#include "opendx/errors.hpp"
#include "opendx/training.hpp"
#include "oracles.hpp"

using namespace opendx;

namespace {

constexpr std::size_t kWidth = 6;

std::vector<PooledExample> random_batch(std::mt19937_64& rng, std::size_t n, bool labeled) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<PooledExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        PooledExample e;
        e.input = Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(kWidth + kPoolExtra), [&] { return u(rng); });
        e.target = rng() % 2 ? KnownClass::AD : KnownClass::CN;
        if (labeled) {
            ExamHeadTarget t{};
            for (auto& b : t) b = rng() % 2;
            e.exam_target = t;
        }
        out.push_back(std::move(e));
    }
    return out;
}

BackboneModel random_model(std::uint64_t seed) {
    auto m = BackboneModel::initialized({kWidth, 5, 4}, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& x : m.stage2().reshaped()) x += n(rng);
    for (auto& x : m.stage1().reshaped()) x += 0.1 * n(rng);
    return m;
}

std::vector<Example> toy_examples(std::size_t per_class, std::uint64_t seed) {
    CohortConfig c;
    c.n_subjects = {per_class, per_class, 0, 0};
    c.width = kWidth;
    c.seed = seed;
    c.max_visits = 2;
    const auto cohort = generate_cohort(c);
    std::vector<Example> out;
    for (const auto& s : cohort.subjects)
        for (std::size_t v = 0; v < s.visits.size(); ++v) {
            const auto& visit = s.visits[v];
            std::span<const VisitRecord> hist(s.visits.data(), v);
            for (auto mask : {CategorySet{ExamCategory::Base}, visit.present()}) {
                Example e{build_feature_sequence(hist, visit, mask), *known_class_of(visit.label), std::nullopt};
                ExamHeadTarget t{};
                for (auto cat : visit.present().minus(mask).members()) t[head_of(cat)] = true;
                e.exam_target = t;
                out.push_back(std::move(e));
            }
        }
    return out;
}

}  // namespace

TEST_CASE("backbone shapes, zero model output and JSON round-trip") {
    const BackboneShape shape{kWidth, 5, 4};
    const BackboneModel zero(shape);
    CHECK(zero.stage1().size() == static_cast<Eigen::Index>(shape.stage1_size()));
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(shape.input_dim()), 0.5);
    const auto out = forward_pooled(zero, p);
    CHECK(out.class_probs[0] == doctest::Approx(0.5));
    for (double e : out.exam_scores) CHECK(e == doctest::Approx(0.5));
    CHECK(out.reconstruction.size() == p.size());
    CHECK_THROWS_AS(forward_pooled(zero, Eigen::VectorXd::Zero(3)), ShapeError);

    const auto m = BackboneModel::initialized(shape, 9);
    CHECK(backbone_from_json(backbone_to_json(m)) == m);
    auto j = backbone_to_json(m);
    j["stage1"].erase(0);
    CHECK_THROWS_AS(backbone_from_json(j), SchemaError);
    CHECK(BackboneModel::initialized(shape, 9) == m);
}

TEST_CASE("bundles route first visits to the variant") {
    ModelBundle b{BackboneModel::initialized({kWidth, 5, 4}, 1), BackboneModel::initialized({kWidth, 5, 4}, 2), {}};
    CHECK(&b.route(0) == &*b.first_visit);
    CHECK(&b.route(1) == &b.main);
    const auto back = bundle_from_json(bundle_to_json(b));
    CHECK(back.main == b.main);
    CHECK(*back.first_visit == *b.first_visit);
    b.first_visit.reset();
    CHECK(&b.route(0) == &b.main);
}

TEST_CASE("pooling: mean block, presence mask and visit scalar") {
    FeatureSequence seq;
    seq.entries.push_back({0, ExamCategory::Base, Block(kWidth, 0.2)});
    seq.entries.push_back({1, ExamCategory::Base, Block(kWidth, 0.4)});
    seq.entries.push_back({1, ExamCategory::MRI, Block(kWidth, 0.9)});
    const auto p = pool_sequence(seq, kWidth);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[kWidth + index_of(ExamCategory::Base)] == 1.0);
    CHECK(p[kWidth + index_of(ExamCategory::MRI)] == 1.0);
    CHECK(p[kWidth + index_of(ExamCategory::Cog)] == 0.0);
    CHECK(p[kWidth + kNumCategories] == doctest::Approx(0.5));
    CHECK_THROWS_AS(pool_sequence(seq, kWidth + 1), ShapeError);
    CHECK_THROWS_AS(pool_sequence(FeatureSequence{}, kWidth), ShapeError);
}

TEST_CASE("stage-1 loss agrees with the per-sample diagnosis loss") {
    std::mt19937_64 rng(4);
    const auto model = random_model(4);
    const auto batch = random_batch(rng, 7, false);
    double want = 0;
    for (const auto& e : batch) {
        const auto f = forward_pooled(model, e.input);
        const std::vector<double> t = e.target == KnownClass::AD ? std::vector<double>{1, 0} : std::vector<double>{0, 1};
        want += diagnosis_loss(f.class_probs, t, {f.reconstruction.data(), static_cast<std::size_t>(f.reconstruction.size())},
                               {e.input.data(), static_cast<std::size_t>(e.input.size())});
    }
    CHECK(stage1_loss(model, batch, {}) == doctest::Approx(want / 7));
}

TEST_CASE("stage-2 loss agrees with the per-sample exam loss") {
    std::mt19937_64 rng(5);
    const auto model = random_model(5);
    auto batch = random_batch(rng, 9, true);
    batch[3].exam_target.reset();
    auto counts = count_heads(batch);
    counts[4] = {0, 8};  // excluded head
    double want = 0;
    std::size_t n = 0;
    for (const auto& e : batch) {
        if (!e.exam_target) continue;
        const auto f = forward_pooled(model, e.input);
        std::vector<double> ls(model.log_sigmas().begin(), model.log_sigmas().end());
        want += exam_selection_loss(f.exam_scores, *e.exam_target, ls, counts).value;
        ++n;
    }
    CHECK(stage2_loss(model, batch, counts) == doctest::Approx(want / static_cast<double>(n)));
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(6);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto model = random_model(seed + 10);
        const auto batch = random_batch(rng, 5, true);
        Eigen::VectorXd g1, g2;
        stage1_loss(model, batch, {}, &g1);
        auto f1 = [&](const Eigen::VectorXd& x) {
            auto m = model;
            m.stage1() = x;
            return stage1_loss(m, batch, {});
        };
        const auto n1 = oracle::numeric_gradient(f1, model.stage1(), 1e-6);
        CHECK((g1 - n1).cwiseAbs().maxCoeff() < 1e-6);

        const auto counts = count_heads(batch);
        stage2_loss(model, batch, counts, &g2);
        auto f2 = [&](const Eigen::VectorXd& x) {
            auto m = model;
            m.stage2() = x;
            return stage2_loss(m, batch, counts);
        };
        const auto n2 = oracle::numeric_gradient(f2, model.stage2(), 1e-6);
        CHECK((g2 - n2).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("training lowers both losses and is deterministic") {
    const auto data = toy_examples(30, 2);
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.exam_hidden = 8;
    cfg.stage1_epochs = 12;
    cfg.stage2_epochs = 12;
    cfg.learning_rate = 0.01;
    std::vector<double> s1, s2;
    const auto model = train(data, cfg, [&](int stage, std::size_t, double loss) {
        (stage == 1 ? s1 : s2).push_back(loss);
    });
    REQUIRE(s1.size() == 12);
    REQUIRE(s2.size() == 12);
    CHECK(s1.back() < s1.front());
    CHECK(s2.back() < s2.front());
    CHECK(train(data, cfg) == model);

    const auto variant = train_first_visit_variant(data, cfg);
    CHECK_FALSE(variant == model);
}

TEST_CASE("stage 2 leaves stage 1 untouched") {
    const auto data = toy_examples(10, 3);
    TrainConfig cfg;
    cfg.hidden = 4;
    cfg.exam_hidden = 4;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 2;
    std::vector<PooledExample> pooled;
    for (const auto& e : data) pooled.push_back(pool_example(e, kWidth));
    const auto m1 = train_stage1(pooled, cfg, kWidth);
    const auto m2 = train_stage2(m1, pooled, cfg);
    CHECK(m2.stage1() == m1.stage1());
    CHECK_FALSE(m2.stage2() == m1.stage2());
}

TEST_CASE("training errors") {
    TrainConfig cfg;
    CHECK_THROWS_AS(train(std::vector<Example>{}, cfg), EmptyDataset);
    auto data = toy_examples(5, 4);
    for (auto& e : data) e.sequence.entries.erase(e.sequence.entries.begin(), e.sequence.entries.end() - 1);
    std::vector<Example> later;
    for (auto& e : data)
        if (e.sequence.current_visit() > 0) later.push_back(e);
    CHECK_THROWS_AS(train_first_visit_variant(later, cfg), EmptyDataset);

    cfg.stage1_epochs = 3;
    cfg.hidden = 4;
    auto poisoned = toy_examples(5, 4);
    poisoned[2].sequence.entries.back().block[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(poisoned, cfg);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch() == 0);
    }
    cfg.learning_rate = -1;
    CHECK_THROWS_AS(train(toy_examples(5, 4), cfg), ConfigError);
}

TEST_CASE("train config JSON round-trip") {
    TrainConfig c;
    c.seed = 99;
    c.mix = {0.5, 0.5};
    CHECK(train_config_from_json(train_config_to_json(c)) == c);
}
