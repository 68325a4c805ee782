#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "opendx/errors.hpp"
#include "opendx/exam_labeler.hpp"
#include "opendx/visit.hpp"
#include "oracles.hpp"

using namespace opendx;

namespace {

using C = ExamCategory;

StrategyPrediction pred(StrategyMask m, double p_ad, bool ad = true) {
    StrategyPrediction s;
    s.mask = m;
    s.y_true = ad ? std::array<double, 2>{1, 0} : std::array<double, 2>{0, 1};
    s.y_pred = {p_ad, 1 - p_ad};
    return s;
}

std::vector<StrategyPrediction> random_visit(std::mt19937_64& rng, std::size_t max_strategies) {
    StrategyMask present{C::Base};
    while (true) {
        present = StrategyMask{C::Base};
        for (std::size_t i = 1; i < kNumCategories; ++i)
            if (rng() % 6 == 0) present.insert(category_at(i));
        if (enumerate_strategies(present).size() <= max_strategies) break;
    }
    const bool ad = rng() % 2;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<StrategyPrediction> out;
    for (auto m : enumerate_strategies(present)) out.push_back(pred(m, std::round(u(rng) * 8) / 8, ad));
    return out;
}

}  // namespace

TEST_CASE("labeler examples") {
    const StrategyMask i{C::Base, C::Cog}, j{C::Base, C::Cog, C::CE};
    CHECK(strategy_gain(pred(i, 0.6), pred(j, 0.8)) == doctest::Approx(0.4));
    auto labels = label_next_examinations({pred(j, 0.8), pred(i, 0.6)});
    CHECK(labels.at(i.bits())[head_of(C::CE)]);
    CHECK(std::count(labels.at(i.bits()).begin(), labels.at(i.bits()).end(), true) == 1);
    CHECK(labels.at(j.bits()) == ExamHeadTarget{});

    labels = label_next_examinations({pred(i, 0.6), pred(j, 0.6)});
    CHECK(labels.at(i.bits()) == ExamHeadTarget{});
}

TEST_CASE("positives accumulate over improving supersets") {
    const StrategyMask b{C::Base}, bm{C::Base, C::MRI}, bc{C::Base, C::CSF}, all{C::Base, C::MRI, C::CSF};
    const auto labels = label_next_examinations({pred(b, 0.5), pred(bm, 0.7), pred(bc, 0.4), pred(all, 0.9)});
    const auto& t = labels.at(b.bits());
    CHECK(t[head_of(C::MRI)]);
    CHECK(t[head_of(C::CSF)]);
    CHECK(labels.at(bc.bits())[head_of(C::MRI)]);
    CHECK(labels.at(bm.bits())[head_of(C::CSF)]);
}

TEST_CASE("labeler matches the brute-force pair oracle") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const auto visit = random_visit(rng, 16);
        const auto got = label_next_examinations(visit);
        const auto want = oracle::exam_labels(visit);
        REQUIRE(got.size() == want.size());
        for (const auto& [bits, t] : want) CHECK(got.at(bits) == t);
    }
}

TEST_CASE("labeler properties: antisymmetry, maximal mask, order independence") {
    std::mt19937_64 rng(78);
    for (int trial = 0; trial < 100; ++trial) {
        auto visit = random_visit(rng, 32);
        if (visit.size() >= 2) {
            auto a = visit.front(), b = visit.back();
            auto a_swapped = a, b_swapped = b;
            std::swap(a_swapped.y_pred, b_swapped.y_pred);
            CHECK(strategy_gain(a_swapped, b_swapped) == doctest::Approx(-strategy_gain(a, b)));
        }
        const auto labels = label_next_examinations(visit);
        CHECK(labels.at(visit.back().mask.bits()) == ExamHeadTarget{});
        std::shuffle(visit.begin(), visit.end(), rng);
        CHECK(label_next_examinations(visit) == labels);
    }
}

TEST_CASE("labeler rejects duplicate masks") {
    const StrategyMask m{C::Base, C::Cog};
    CHECK_THROWS_AS(label_next_examinations({pred(m, 0.2), pred(m, 0.3)}), DuplicateStrategy);
}

TEST_CASE("label records round-trip through JSONL") {
    std::vector<ExamLabelRecord> recs;
    recs.push_back({"AD-00001", 2, {C::Base, C::MRI}, {}});
    recs.back().targets[head_of(C::CSF)] = true;
    recs.push_back({"CN-00004", 0, {C::Base}, {}});
    std::stringstream ss;
    write_labels(ss, recs);
    CHECK(read_labels(ss) == recs);

    std::stringstream bad(ss.str());
    bad.str(label_record_to_json(recs[0]).dump() + "\n{\"subject_id\":1}\n");
    try {
        read_labels(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    auto j = label_record_to_json(recs[0]);
    j["mask"] = {"Cog"};
    CHECK_THROWS_AS(label_record_from_json(j), SchemaError);
}
