#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "opendx/cohort_io.hpp"
#include "opendx/errors.hpp"
#include "opendx/pipeline.hpp"

using namespace opendx;

namespace {

PipelineConfig small_pipeline() {
    return pipeline_config_from_json(read_json_file(OPENDX_DATA_DIR "/synthetic_small.json"));
}

}  // namespace

TEST_CASE("strategy sampling keeps both ends and canonical order") {
    const auto all = enumerate_strategies(StrategyMask::all());
    const auto s = sample_strategies(all, 10, 3);
    REQUIRE(s.size() == 10);
    CHECK(s.front() == all.front());
    CHECK(s.back() == all.back());
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(CategorySet::canonical_less(s[i - 1], s[i]));
    CHECK(s == sample_strategies(all, 10, 3));
    CHECK_FALSE(s == sample_strategies(all, 10, 4));
    CHECK(sample_strategies(all, 0, 3) == all);
    const std::vector<StrategyMask> few(all.begin(), all.begin() + 4);
    CHECK(sample_strategies(few, 10, 3) == few);
}

TEST_CASE("labeled strategies round-trip with their model role") {
    std::vector<LabeledStrategy> v;
    v.push_back({ModelRole::Main, {"AD-00001", 1, {ExamCategory::Base, ExamCategory::FDG}, {}}});
    v.push_back({ModelRole::FirstVisit, {"CN-00002", 0, {ExamCategory::Base}, {}}});
    v.back().record.targets[0] = true;
    std::stringstream ss;
    write_labeled(ss, v);
    CHECK(ss.str().find("\"model\":\"first_visit\"") != std::string::npos);
    const auto back = read_labeled(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[1].role == ModelRole::FirstVisit);
    CHECK(back[1].record == v[1].record);
}

TEST_CASE("pipeline config round-trips and reseed touches every stream") {
    auto c = small_pipeline();
    CHECK(c.cohort.n_subjects.ad == 40);
    CHECK(c.openmax.tail.tail_fraction == 0.5);
    const auto back = pipeline_config_from_json(pipeline_config_to_json(c));
    CHECK(pipeline_config_to_json(back) == pipeline_config_to_json(c));

    auto r = c;
    reseed(r, 123);
    CHECK(r.cohort.seed != c.cohort.seed);
    CHECK(r.split_seed != c.split_seed);
    CHECK(r.train.seed != c.train.seed);
    CHECK(r.openmax.seed != c.openmax.seed);
    CHECK(r.evaluation.seed != c.evaluation.seed);

    auto j = pipeline_config_to_json(c);
    j["split"]["mode"] = "sideways";
    CHECK_THROWS_AS(pipeline_config_from_json(j), ConfigError);
}

TEST_CASE("small pipeline is deterministic and routes first visits") {
    const auto c = small_pipeline();
    const auto a = run_pipeline(c);
    const auto b = run_pipeline(c);
    CHECK(report_to_json(a.report).dump() == report_to_json(b.report).dump());
    CHECK(a.bundle.first_visit.has_value());
    CHECK(a.openmax.fitted());

    const OpenSetModel model(a.bundle, a.openmax, IndicatorTable::defaults());
    for (const auto& s : a.cohort.subjects) {
        const auto& v = s.visits.front();
        const auto seq = build_feature_sequence({}, v, v.present());
        const auto got = model.assess(seq, v.indicators);
        const auto f = forward(*a.bundle.first_visit, seq);
        const auto want = openmax_probs(extract_abnormal_pattern(v.indicators, IndicatorTable::defaults()),
                                        f.activations, a.openmax);
        CHECK(got.probs == want);
        CHECK(got.exam_scores == f.exam_scores);
        break;
    }
}

TEST_CASE("closed-mode AUC on a modest cohort") {
    auto c = small_pipeline();
    c.cohort.n_subjects = {120, 120, 0, 0};
    c.mode = SettingMode::Closed;
    c.train.stage1_epochs = 15;
    c.evaluation.bootstrap = {300, 200, 1, 0.1};
    const auto r = run_pipeline(c);
    REQUIRE(r.report.auc_ad);
    REQUIRE(r.report.auc_cn);
    CHECK(r.report.auc_ad->value >= 0.95);
    CHECK(r.report.auc_cn->value >= 0.95);
    CHECK(r.report.class_counts[0] == 0);
}

TEST_CASE("pipeline stages: labels cover every strategy of every training visit") {
    auto c = small_pipeline();
    c.cohort.n_subjects = {10, 10, 0, 0};
    const auto cohort = generate_cohort(c.cohort);
    const auto split = split_clinical_aibench(cohort, c.mode, c.split_seed);
    const auto bundle = train_stage1_bundle(cohort, split, c.train, false);
    const auto labels = label_training_visits(bundle.main, cohort, split);
    std::size_t want = 0;
    for (const auto& s : cohort.subjects)
        if (split.partition_of(s.id) == Partition::Train)
            for (const auto& v : s.visits) want += enumerate_strategies(v).size();
    CHECK(labels.size() == want);
    std::set<std::tuple<std::string, int, std::uint16_t>> keys;
    for (const auto& l : labels) keys.insert({l.subject_id, l.visit_index, l.mask.bits()});
    CHECK(keys.size() == labels.size());
    const auto stage2 = build_stage2_examples(cohort, labels, c.train);
    for (const auto& e : stage2) CHECK(e.exam_target.has_value());
}
