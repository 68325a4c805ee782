#include <doctest.h>

#include <sstream>

#include "opendx/backbone.hpp"
#include "opendx/cohort_io.hpp"
#include "opendx/errors.hpp"
#include "oracles.hpp"

using namespace opendx;

namespace {
CohortConfig small_config() {
    CohortConfig c;
    c.n_subjects = {30, 30, 20, 20};
    c.width = 12;
    c.seed = 17;
    return c;
}
}  // namespace

TEST_CASE("generator is deterministic and honours counts, width and Base presence") {
    const auto a = generate_cohort(small_config());
    const auto b = generate_cohort(small_config());
    CHECK(a == b);
    CHECK(a.subjects.size() == 100);
    CHECK(a.subjects.front().id == "AD-00000");
    for (const auto& s : a.subjects) {
        CHECK(s.visits.size() >= 1);
        CHECK(s.visits.size() <= 3);
        for (const auto& v : s.visits) {
            CHECK(v.has(ExamCategory::Base));
            for (const auto& [c, blk] : v.blocks) {
                CHECK(blk.size() == 12);
                for (double x : blk) CHECK((x >= 0.0 && x <= 1.0));
            }
        }
    }
    auto other = small_config();
    other.seed = 18;
    CHECK_FALSE(generate_cohort(other) == a);
}

TEST_CASE("missingness rate tracks the configuration") {
    auto c = small_config();
    c.n_subjects = {200, 200, 0, 0};
    c.missingness = CohortConfig::filled(0.3);
    const auto cohort = generate_cohort(c);
    double present = 0, total = 0;
    for (const auto& s : cohort.subjects)
        for (const auto& v : s.visits) {
            present += static_cast<double>(v.blocks.size() - 1);
            total += kNumExamHeads;
        }
    CHECK(present / total == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("known-class indicators mostly fall inside their own range") {
    auto c = small_config();
    c.n_subjects = {150, 150, 0, 0};
    const auto cohort = generate_cohort(c);
    const auto table = IndicatorTable::defaults();
    double inside = 0, total = 0;
    for (const auto& s : cohort.subjects)
        for (const auto& v : s.visits)
            for (const auto& row : table.rows()) {
                const double x = v.indicators.at(row.name);
                inside += v.label == Label::AD ? row.inside_ad(x) : row.inside_cn(x);
                total += 1;
            }
    CHECK(inside / total == doctest::Approx(0.95).epsilon(0.02));
}

TEST_CASE("pooled full visits separate AD from CN for a nearest-centroid classifier") {
    auto c = small_config();
    c.n_subjects = {150, 150, 0, 0};
    const auto cohort = generate_cohort(c);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (const auto& s : cohort.subjects)
        for (const auto& v : s.visits) {
            const auto seq = build_feature_sequence({}, v, v.present());
            const auto p = pool_sequence(seq, c.width);
            x.emplace_back(p.data(), p.data() + c.width);
            y.push_back(v.label == Label::AD ? 0 : 1);
        }
    CHECK(oracle::nearest_centroid_accuracy(x, y) >= 0.95);
}

TEST_CASE("cohort JSONL round-trips and reports bad lines") {
    const auto cohort = generate_cohort(small_config());
    std::stringstream ss;
    write_cohort(ss, cohort);
    CHECK(read_cohort(ss) == cohort);

    std::stringstream bad("{\"subject_id\":\"A\",\"visit_index\":0,\"label\":\"AD\",\"blocks\":{\"Base\":[0.1]}}\nnot json\n");
    try {
        read_cohort(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    std::stringstream wide;
    write_cohort(wide, cohort);
    CHECK_THROWS_AS(read_cohort(wide, std::size_t{99}), SchemaError);
}

TEST_CASE("split thresholds, unknown routing and closed mode") {
    const auto cohort = generate_cohort(small_config());
    const auto rw = split_clinical_aibench(cohort, SettingMode::RealWorld, 9);
    const auto closed = split_clinical_aibench(cohort, SettingMode::Closed, 9);
    for (const auto& s : cohort.subjects) {
        const Label l = subject_label(s);
        if (!is_known(l)) {
            CHECK(rw.partition_of(s.id) == Partition::Test);
            CHECK_FALSE(closed.partition_of(s.id));
            continue;
        }
        const double u = split_draw(9, s.id);
        const Partition want = u < 0.8 ? Partition::Train : u < 0.85 ? Partition::Validation : Partition::Test;
        CHECK(rw.partition_of(s.id) == want);
        CHECK(closed.partition_of(s.id) == want);
    }
    CHECK(split_from_json(split_to_json(rw)) == rw);
}

TEST_CASE("split degenerate cases") {
    auto c = small_config();
    c.n_subjects = {0, 10, 5, 0};
    CHECK_THROWS_AS(split_clinical_aibench(generate_cohort(c), SettingMode::RealWorld, 1), DegenerateSplit);
    c.n_subjects = {0, 0, 5, 5};
    const auto only_unknown = split_clinical_aibench(generate_cohort(c), SettingMode::RealWorld, 1);
    CHECK(only_unknown.count(Partition::Test) == 10);
    CHECK(only_unknown.count(Partition::Train) == 0);
}

TEST_CASE("indicator blocks and CSV sheets") {
    const auto table = IndicatorTable::defaults();
    const auto block = encode_indicator_block(table, ExamCategory::Cog, {{"MMSE", 30.0}, {"CDRSB", 0.0}}, 10);
    REQUIRE(block.size() == 10);
    // Cog owns CCI_Score_12, CCI_Score_20, CDRSB, ADAS11, ADAS13, ADASQ4, MMSE, MOCA in table order.
    CHECK(block[0] == 0.5);
    CHECK(block[2] == doctest::Approx(0.0));
    CHECK(block[6] == doctest::Approx(1.0));
    CHECK(block[9] == 0.5);

    auto cohort = generate_cohort(small_config());
    const std::string id = cohort.subjects.front().id;
    std::stringstream csv("subject_id,visit_index,MMSE,MOCA\n" + id + ",0,29.5,\n");
    const auto sheet = read_indicator_csv(csv, table);
    merge_indicators(cohort, sheet);
    CHECK(cohort.subjects.front().visits.front().indicators.at("MMSE") == 29.5);
    CHECK(cohort.subjects.front().visits.front().indicators.count("MOCA") == 0);
}

TEST_CASE("cohort configuration JSON round-trips and rejects bad values") {
    auto c = small_config();
    c.missingness[3] = 0.25;
    CHECK(cohort_config_from_json(cohort_config_to_json(c)) == c);
    auto j = cohort_config_to_json(c);
    j["separation"] = -1.0;
    CHECK_THROWS_AS(cohort_config_from_json(j), ConfigError);
    const auto table = IndicatorTable::defaults();
    CHECK(indicator_table_from_json(indicator_table_to_json(table)) == table);
}

TEST_CASE("split fractions concentrate and subjects are never divided") {
    Cohort big;
    big.width = 1;
    for (int i = 0; i < 10000; ++i) {
        const Label l = i % 2 ? Label::AD : Label::CN;
        Subject s{"S" + std::to_string(i), {}};
        for (int v = 0; v < (i == 7 ? 5 : 1); ++v) s.visits.push_back({s.id, v, l, {{ExamCategory::Base, {0.5}}}, {}});
        big.subjects.push_back(std::move(s));
    }
    const auto split = split_clinical_aibench(big, SettingMode::RealWorld, 42);
    CHECK(static_cast<double>(split.count(Partition::Train)) / 10000.0 == doctest::Approx(0.8).epsilon(0.025));
    CHECK(split.count(Partition::Train) + split.count(Partition::Validation) + split.count(Partition::Test) == 10000);
    CHECK(split.assignment.size() == 10000);  // one partition per subject, so all five visits of S7 share it
}
