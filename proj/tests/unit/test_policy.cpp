#include <doctest.h>

#include <random>

#include "opendx/errors.hpp"
#include "opendx/policy.hpp"
#include "oracles.hpp"

using namespace opendx;
using oracle::assessment;
using C = ExamCategory;

namespace {

SessionStart start_with(InstitutionCapability cap = InstitutionCapability::all(), std::size_t width = 4) {
    SessionStart s;
    s.session_id = "t";
    s.base_block = Block(width, 0.5);
    s.capability = cap;
    return s;
}

SessionEvent result(C c, std::size_t width = 4) { return {SessionEvent::Type::ExamResult, c, Block(width, 0.3), {}}; }
SessionEvent refusal(C c) { return {SessionEvent::Type::ExamUnavailable, c, {}, {}}; }

}  // namespace

TEST_CASE("threshold checks run AD, CN, Unknown in order") {
    const OutcomeThresholds d{0.5, 0.5, 0.5};
    CHECK(threshold_outcome({0.0, 0.5, 0.5}, d) == Outcome::AD);
    CHECK(threshold_outcome({0.6, 0.0, 0.4}, d) == Outcome::Unknown);
    CHECK_FALSE(threshold_outcome({0.3, 0.3, 0.4}, OutcomeThresholds{}));
    CHECK(decide_outcome({0.3, 0.3, 0.4}, OutcomeThresholds{}) == Outcome::Unknown);
    CHECK(decide_outcome({0.0, 0.02, 0.98}, OutcomeThresholds{}) == Outcome::CN);
}

TEST_CASE("confident first assessment diagnoses immediately") {
    oracle::ScriptedModel m({assessment(0.01, 0.97, 0.02)});
    const PolicyEngine engine(m, {});
    auto s = engine.start_session(start_with());
    CHECK(s.status == SessionStatus::Diagnosed);
    CHECK(s.last_action.label == Outcome::AD);
    CHECK(s.decision_steps == 1);
    CHECK_THROWS_AS(engine.step(s, result(C::Cog)), SessionClosed);
}

TEST_CASE("highest eligible exam score is requested, then the diagnosis follows") {
    oracle::ScriptedModel m({assessment(0.2, 0.5, 0.3, {{C::MRI, 0.9}, {C::CSF, 0.7}}), assessment(0.0, 0.03, 0.97)});
    const PolicyEngine engine(m, {});
    auto s = engine.start_session(start_with());
    REQUIRE(s.last_action.kind == ActionKind::RequestExam);
    CHECK(s.last_action.category == C::MRI);
    CHECK_FALSE(s.last_action.fallback);
    CHECK_THROWS_AS(engine.step(s, result(C::CSF)), ProtocolError);
    engine.step(s, result(C::MRI));
    CHECK(s.status == SessionStatus::Diagnosed);
    CHECK(s.last_action.label == Outcome::CN);
    CHECK(s.trail.size() == 2);
    CHECK(s.acquired == StrategyMask{C::Base, C::MRI});
}

TEST_CASE("refusal moves to the next eligible head without a new assessment") {
    oracle::ScriptedModel m({assessment(0.2, 0.5, 0.3, {{C::MRI, 0.9}, {C::CSF, 0.7}})});
    const PolicyEngine engine(m, {});
    auto s = engine.start_session(start_with());
    engine.step(s, refusal(C::MRI));
    CHECK(m.calls() == 1);
    CHECK(s.last_action.category == C::CSF);
    CHECK(s.refused == CategorySet{C::MRI});
    engine.step(s, refusal(C::CSF));
    // No head above gamma remains: cheapest available category.
    CHECK(s.last_action.category == C::Cog);
    CHECK(s.last_action.fallback);
    CHECK(s.fallback_requests == 1);
}

TEST_CASE("capability limits requests and exhaustion refers") {
    oracle::ScriptedModel m({assessment(0.2, 0.5, 0.3, {{C::MRI, 0.9}})});
    const PolicyEngine engine(m, {});
    auto s = engine.start_session(start_with(InstitutionCapability{C::Base, C::Blood}));
    CHECK(s.last_action.category == C::Blood);
    CHECK(s.last_action.fallback);
    engine.step(s, result(C::Blood));
    CHECK(s.status == SessionStatus::ReferredUnknown);
    CHECK(s.last_action.kind == ActionKind::ReferUnknown);
    CHECK(s.decision_steps == 2);

    CHECK_THROWS_AS(engine.start_session(start_with(InstitutionCapability{C::Cog})), InvalidCapability);
    auto no_base = start_with();
    no_base.base_block.clear();
    CHECK_THROWS_AS(engine.start_session(no_base), InvalidVisit);
}

TEST_CASE("cost order fallback follows the configured table") {
    oracle::ScriptedModel m({assessment(0.2, 0.5, 0.3)});
    PolicyConfig cfg;
    cfg.costs = CostTable({C::CSF, C::Gene, C::AV45, C::FDG, C::MRI, C::Urine, C::Blood, C::PE, C::FB, C::Neur, C::CE,
                           C::Cog});
    const PolicyEngine engine(m, cfg);
    const auto s = engine.start_session(start_with());
    CHECK(s.last_action.category == C::CSF);
    CHECK(engine.select_fallback_exam(s) == C::CSF);
    CHECK_THROWS_AS(CostTable({C::Cog, C::Cog}), ConfigError);
    CHECK(CostTable().rank(C::Cog) == 0);
    CHECK(CostTable().rank(C::CSF) == 11);
}

TEST_CASE("indicator-only events are encoded against the table") {
    oracle::ScriptedModel m({assessment(0.2, 0.5, 0.3, {{C::Cog, 0.9}}), assessment(0.2, 0.5, 0.3)}, 10);
    const PolicyEngine engine(m, {});
    auto s = engine.start_session(start_with(InstitutionCapability::all(), 10));
    engine.step(s, {SessionEvent::Type::ExamResult, C::Cog, {}, {{"MMSE", 30.0}}});
    REQUIRE(s.current.blocks.count(C::Cog));
    CHECK(s.current.blocks.at(C::Cog).size() == 10);
    CHECK(s.current.indicators.at("MMSE") == 30.0);
    CHECK_THROWS_AS(engine.step(s, {SessionEvent::Type::ExamResult, *s.pending, {}, {}}), ProtocolError);
}

TEST_CASE("policy config JSON round-trip and validation") {
    PolicyConfig c;
    c.thresholds.delta.unknown = 0.7;
    c.thresholds.gamma[3] = 0.25;
    CHECK(policy_config_from_json(policy_config_to_json(c)) == c);
    CHECK(policy_config_from_json({{"gamma", 0.4}}).thresholds.gamma[11] == 0.4);
    CHECK_THROWS_AS(policy_config_from_json({{"delta", {{"ad", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(policy_config_from_json({{"gamma", {0.5, 0.5}}}), ConfigError);
}

TEST_CASE("random sessions keep the protocol invariants") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1500; ++trial) {
        const oracle::RandomModel model(rng(), 4, 0.15);
        PolicyConfig cfg;
        std::uniform_real_distribution<double> u(0.3, 1.0);
        cfg.thresholds.delta = {u(rng), u(rng), u(rng)};
        cfg.thresholds.gamma = DecisionThresholds::filled_gamma(u(rng));
        const PolicyEngine engine(model, cfg);
        InstitutionCapability cap{C::Base};
        for (std::size_t i = 1; i < kNumCategories; ++i)
            if (rng() % 2) cap.insert(category_at(i));
        auto s = engine.start_session(start_with(cap));
        CategorySet requested;
        std::size_t events = 0;
        while (!s.terminal()) {
            REQUIRE(s.pending);
            const C c = *s.pending;
            CHECK_FALSE(requested.contains(c));
            CHECK(cap.contains(c));
            requested.insert(c);
            engine.step(s, rng() % 4 == 0 ? refusal(c) : result(c));
            REQUIRE(++events <= kNumExamHeads);
        }
        CHECK(s.decision_steps <= kNumCategories);
        CHECK((s.refused & s.acquired).empty());
        if (s.status == SessionStatus::Diagnosed) {
            const Outcome o = *s.last_action.label;
            CHECK(s.last_action.probs[static_cast<std::size_t>(o)] >= cfg.thresholds.delta.of(o));
        }
    }
}

TEST_CASE("raising delta never shortens a scripted session") {
    const std::vector<Assessment> script{assessment(0.1, 0.6, 0.3), assessment(0.05, 0.8, 0.15),
                                         assessment(0.02, 0.9, 0.08), assessment(0.01, 0.97, 0.02)};
    std::size_t prev = 0;
    for (double d : {0.55, 0.75, 0.85, 0.95, 0.99}) {
        oracle::ScriptedModel m(script);
        PolicyConfig cfg;
        cfg.thresholds.delta = {d, d, d};
        const PolicyEngine engine(m, cfg);
        auto s = engine.start_session(start_with());
        while (!s.terminal()) engine.step(s, result(*s.pending));
        CHECK(s.decision_steps >= prev);
        prev = s.decision_steps;
    }
}

TEST_CASE("blocks of the wrong width are rejected without touching the session") {
    oracle::ScriptedModel m({assessment(0.2, 0.5, 0.3, {{C::MRI, 0.9}})});
    const PolicyEngine engine(m, {});
    CHECK_THROWS_AS(engine.start_session(start_with(InstitutionCapability::all(), 3)), ShapeError);
    auto s = engine.start_session(start_with());
    CHECK_THROWS_AS(engine.step(s, result(C::MRI, 5)), ShapeError);
    CHECK(s.pending == C::MRI);
    CHECK(s.acquired == StrategyMask{C::Base});
}
