#include <doctest.h>

#include <cmath>
#include <random>

#include "opendx/errors.hpp"
#include "opendx/openmax.hpp"
#include "oracles.hpp"

using namespace opendx;

namespace {

Point corner(std::size_t ones_from, std::size_t ones_to) {
    Point p(kPatternSize, 0.0);
    for (std::size_t i = ones_from; i < ones_to; ++i) p[i] = 1.0;
    return p;
}

AbnormalPattern random_pattern(std::mt19937_64& rng, double p_one) {
    std::bernoulli_distribution b(p_one);
    AbnormalPattern x{};
    for (auto& v : x) v = b(rng);
    return x;
}

WeibullTail always_one() { return {0.0, 1e-9, 1.0}; }
WeibullTail never() { return {1e9, 1.0, 1.0}; }

}  // namespace

TEST_CASE("abnormal pattern examples") {
    const auto table = IndicatorTable::defaults();
    const std::size_t mmse = *table.find("MMSE");
    auto p = extract_abnormal_pattern(std::map<std::string, double>{{"MMSE", 26.0}}, table);
    CHECK(p[2 * mmse] == 0);
    CHECK(p[2 * mmse + 1] == 0);
    p = extract_abnormal_pattern(std::map<std::string, double>{{"MMSE", 30.0}}, table);
    CHECK(p[2 * mmse] == 1);
    CHECK(p[2 * mmse + 1] == 0);
    CHECK(extract_abnormal_pattern(std::map<std::string, double>{}, table) == AbnormalPattern{});
    CHECK_THROWS_AS(extract_abnormal_pattern(std::map<std::string, double>{}, IndicatorTable({table.rows()[0]})), ShapeError);
}

TEST_CASE("pattern distance examples and naive oracle") {
    const Point zero = corner(0, 0), full = corner(0, kPatternSize);
    CHECK(normalized_distance(zero, full) == doctest::Approx(1.0));
    CHECK(pattern_distance(zero, {zero}, {full}) == 0.0);

    // m_own = 0.6 and m_other = 0.2 with both as exact normalized distances.
    Point own(kPatternSize, 0.0), other(kPatternSize, 0.0);
    own[0] = 0.6 * std::sqrt(28.0);
    other[1] = 0.2 * std::sqrt(28.0);
    CHECK(pattern_distance(zero, {own}, {other}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(pattern_distance(zero, {}, {full}), ModelNotFitted);

    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const Point x = to_point(random_pattern(rng, 0.3));
        std::array<std::vector<Point>, 2> sets;
        for (auto& s : sets)
            for (std::size_t k = 0; k < 1 + rng() % 4; ++k) s.push_back(to_point(random_pattern(rng, 0.4)));
        std::array<double, 2> m{1e9, 1e9};
        for (std::size_t c = 0; c < 2; ++c)
            for (const auto& p : sets[c]) {
                double sq = 0;
                for (std::size_t i = 0; i < kPatternSize; ++i) sq += (x[i] - p[i]) * (x[i] - p[i]);
                m[c] = std::min(m[c], std::sqrt(sq / 28.0));
            }
        const double want = std::sqrt(m[0] * m[0] + (1 - m[1]) * (1 - m[1]));
        CHECK(std::abs(pattern_distance(x, sets[0], sets[1]) - want) < 1e-12);
    }
}

TEST_CASE("k-means degenerate and exact cases") {
    std::mt19937_64 rng(2);
    std::vector<Point> pts;
    for (int i = 0; i < 6; ++i) pts.push_back(to_point(random_pattern(rng, 0.5)));
    const auto full = minibatch_kmeans(pts, {6, 4, 20, 1});
    CHECK(full.inertia == doctest::Approx(0.0));

    const auto one = minibatch_kmeans(pts, {1, 4, 20, 1});
    for (std::size_t i = 0; i < kPatternSize; ++i) {
        double mean = 0;
        for (const auto& p : pts) mean += p[i];
        CHECK(one.centers[0][i] == doctest::Approx(mean / 6));
    }
    CHECK_THROWS_AS(minibatch_kmeans(pts, {7, 4, 20, 1}), TooFewPoints);
    CHECK(minibatch_kmeans(pts, {3, 4, 20, 5}).centers == minibatch_kmeans(pts, {3, 4, 20, 5}).centers);
}

TEST_CASE("two-means on separated corners agrees with the exhaustive oracle") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Point> pts;
        const std::size_t n = 6 + rng() % 7;
        for (std::size_t i = 0; i < n; ++i) {
            Point p = i % 2 ? corner(0, 14) : corner(14, 28);
            p[rng() % kPatternSize] = 1.0 - p[rng() % kPatternSize];
            pts.push_back(p);
        }
        const auto want = oracle::best_two_means(pts);
        const auto got = minibatch_kmeans(pts, {2, 4, 50, static_cast<std::uint64_t>(trial)});
        for (const auto& w : want) {
            const double best = std::min(normalized_distance(w, got.centers[0]), normalized_distance(w, got.centers[1]));
            CHECK(best < 0.1);
        }
    }
}

TEST_CASE("Weibull fit recovers parameters and agrees with the grid oracle") {
    std::mt19937_64 rng(21);
    std::weibull_distribution<double> w(1.5, 2.0);
    std::vector<double> x(5000);
    for (auto& v : x) v = w(rng);
    WeibullFitOptions o;
    o.full_sample = true;
    const auto tail = weibull_fit_high(x, o);
    CHECK(tail.tau == 0.0);
    CHECK(tail.kappa == doctest::Approx(1.5).epsilon(0.1));
    CHECK(tail.lambda == doctest::Approx(2.0).epsilon(0.1));
    const auto [k, l] = oracle::weibull_grid_mle(x);
    CHECK(tail.kappa == doctest::Approx(k).epsilon(1e-3));
    CHECK(tail.lambda == doctest::Approx(l).epsilon(1e-3));
    CHECK(weibull_log_likelihood(x, tail.lambda, tail.kappa) >= weibull_log_likelihood(x, l, k) - 1e-6);
}

TEST_CASE("Weibull tail: CDF properties and degeneracy") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> d(200);
    for (auto& v : d) v = u(rng);
    const auto tail = weibull_fit_high(d);
    CHECK(tail.w_score(tail.tau) == 0.0);
    CHECK(tail.w_score(tail.tau - 1) == 0.0);
    double prev = 0;
    for (double t = 0; t <= 2.0; t += 0.01) {
        const double s = tail.w_score(t);
        CHECK(s >= prev);
        CHECK(s <= 1.0);
        prev = s;
    }
    const std::vector<double> constant(50, 0.4);
    CHECK_THROWS_AS(weibull_fit_high(constant), InsufficientTail);
    const std::vector<double> few{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(weibull_mle(few), InsufficientTail);
}

TEST_CASE("nearest-rank quantile") {
    CHECK(nearest_rank_quantile({5, 1, 3, 2, 4}, 0.5) == 3);
    CHECK(nearest_rank_quantile({5, 1, 3, 2, 4}, 0.95) == 5);
    CHECK(nearest_rank_quantile({5, 1, 3, 2, 4}, 0.2) == 1);
    CHECK_THROWS_AS(nearest_rank_quantile({}, 0.5), EmptyDataset);
}

TEST_CASE("fit_openmax: thresholds cover the quantile and fitting is deterministic") {
    std::mt19937_64 rng(30);
    std::array<std::vector<AbnormalPattern>, 2> pats;
    for (int i = 0; i < 200; ++i) {
        AbnormalPattern ad{}, cn{};
        for (std::size_t j = 0; j < kPatternSize; ++j) {
            ad[j] = (j % 2 == 1) != (rng() % 10 == 0);
            cn[j] = (j % 2 == 0 && j < 8) != (rng() % 10 == 0);
        }
        pats[0].push_back(ad);
        pats[1].push_back(cn);
    }
    OpenMaxOptions o;
    o.seed = 4;
    const auto m = fit_openmax(pats, o);
    CHECK(m.fitted());
    CHECK(fit_openmax(pats, o) == m);
    for (std::size_t c = 0; c < 2; ++c) {
        std::size_t inside = 0;
        for (const auto& p : pats[c]) inside += m.distance(to_point(p), c) <= m.classes[c].threshold;
        CHECK(static_cast<double>(inside) / 200.0 >= 0.95);
        std::size_t cross = 0;
        for (const auto& p : pats[1 - c]) cross += m.distance(to_point(p), c) > m.classes[c].threshold;
        CHECK(cross == 200);
    }
    CHECK(openmax_from_json(openmax_to_json(m)) == m);
    CHECK(openmax_options_from_json(openmax_options_to_json(o)) == o);

    std::array<std::vector<AbnormalPattern>, 2> same{std::vector<AbnormalPattern>(20, pats[0][0]), pats[1]};
    o.centers = {1, 3};
    CHECK_THROWS_AS(fit_openmax(same, o), InsufficientTail);
    std::array<std::vector<AbnormalPattern>, 2> tiny{std::vector<AbnormalPattern>(4, pats[0][0]), pats[1]};
    CHECK_THROWS_AS(fit_openmax(tiny, o), TooFewPoints);
    CHECK_THROWS_AS(openmax_probs(pats[0][0], {1, 0}, OpenMaxModel{}), ModelNotFitted);
}

TEST_CASE("openmax probability examples") {
    const std::array<double, 2> thr{1, 1};
    auto p = openmax_from_distances({0.5, 0.5}, {0, 0}, {never(), never()}, thr, 2, false);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));

    p = openmax_from_distances({0.5, 0.5}, {2, 1}, {always_one(), never()}, thr, 2, false);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));

    const auto f = apply_abnormal_penalty({0.2, 0.5, 0.3}, {0.5, 0.0});
    CHECK(f[0] == doctest::Approx(0.45));
    CHECK(f[1] == doctest::Approx(0.25));
    CHECK(f[2] == doctest::Approx(0.30));

    CHECK(abnormality_score(0.5, 1.0) == 0.0);
    CHECK(abnormality_score(1.5, 1.0) == doctest::Approx(0.5));
    CHECK(abnormality_score(9.0, 1.0) == 1.0);
}

TEST_CASE("openmax outputs stay on the simplex and respond monotonically to distance") {
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int trial = 0; trial < 2000; ++trial) {
        std::array<WeibullTail, 2> tails;
        for (auto& t : tails) t = {u(rng) * 0.5, 0.05 + u(rng), 0.5 + 3 * u(rng)};
        const std::array<double, 2> thr{0.05 + u(rng), 0.05 + u(rng)};
        const std::array<double, 2> act{n(rng), n(rng)};
        const std::array<double, 2> dist{1.5 * u(rng), 1.5 * u(rng)};
        const std::size_t alpha = 1 + rng() % 2;
        for (bool f : {false, true}) {
            const auto p = openmax_from_distances(dist, act, tails, thr, alpha, f);
            CHECK(std::abs(p[0] + p[1] + p[2] - 1) < 1e-9);
            for (double v : p) CHECK(v >= 0.0);
        }
        // A ranked class with non-negative activation: pushing it farther never
        // raises its probability.
        for (std::size_t c = 0; c < 2; ++c) {
            const bool ranked = alpha == 2 || act[c] >= act[1 - c];
            if (!ranked || act[c] < 0) continue;
            auto farther = dist;
            farther[c] += 0.3 * u(rng);
            for (bool f : {false, true}) {
                const auto a = openmax_from_distances(dist, act, tails, thr, alpha, f);
                const auto b = openmax_from_distances(farther, act, tails, thr, alpha, f);
                CHECK(b[1 + c] <= a[1 + c] + 1e-12);
            }
        }
    }
}
