#include "opendx/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

void CohortConfig::validate() const {
    auto prob = [](double p, const char* what) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0,1]");
    };
    if (width == 0) throw ConfigError("block width must be positive");
    if (!(separation >= 0.0)) throw ConfigError("separation must be >= 0");
    if (!(block_noise > 0.0)) throw ConfigError("block_noise must be > 0");
    if (max_visits == 0) throw ConfigError("max_visits must be >= 1");
    for (double p : missingness) prob(p, "missingness");
    if (missingness[0] != 0.0) throw ConfigError("Base block cannot be missing");
    prob(indicator_in_range_prob, "indicator_in_range_prob");
    prob(indicator_missing_prob, "indicator_missing_prob");
    prob(mci_between_prob, "mci_between_prob");
    prob(smc_between_prob, "smc_between_prob");
}

namespace {

using Vec = std::vector<double>;

Vec random_unit(Rng& rng, std::size_t n) {
    Vec v(n);
    double norm = 0;
    do {
        norm = 0;
        for (auto& x : v) {
            x = standard_normal(rng);
            norm += x * x;
        }
    } while (norm == 0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

/// Removes the components along `basis` (assumed orthonormal) and normalizes.
Vec orthonormalize(Vec v, const std::vector<const Vec*>& basis) {
    for (const Vec* b : basis) {
        double dot = 0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * (*b)[i];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * (*b)[i];
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) return Vec(v.size(), 0.0);
    for (auto& x : v) x /= norm;
    return v;
}

struct CategoryGeometry {
    Vec known_axis;  // AD - CN direction
    Vec mci_axis;    // orthogonal to known_axis
    Vec smc_axis;    // orthogonal to both
};

std::vector<CategoryGeometry> make_geometry(std::size_t width, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "geometry"));
    const Vec shared = random_unit(rng, width);
    std::vector<CategoryGeometry> geo(kNumCategories);
    for (auto& g : geo) {
        Vec own = random_unit(rng, width);
        Vec axis(width);
        for (std::size_t i = 0; i < width; ++i) axis[i] = shared[i] + 0.5 * own[i];
        g.known_axis = orthonormalize(axis, {});
        g.mci_axis = orthonormalize(random_unit(rng, width), {&g.known_axis});
        g.smc_axis = orthonormalize(random_unit(rng, width), {&g.known_axis, &g.mci_axis});
    }
    return geo;
}

/// Offsets (in noise standard deviations) of a class mean along the three axes.
struct ClassOffset {
    double known, mci, smc;
};

ClassOffset offset_for(Label label, double s) {
    switch (label) {
        case Label::AD: return {0.5 * s, 0, 0};
        case Label::CN: return {-0.5 * s, 0, 0};
        case Label::MCI: return {0, 0.5 * s, 0};
        case Label::SMC: return {-0.25 * s, 0, 0.5 * s};
        case Label::Unlabeled: break;
    }
    return {0, 0, 0};
}

Block draw_block(Rng& rng, const CategoryGeometry& g, ClassOffset off, double sigma) {
    const std::size_t w = g.known_axis.size();
    Block b(w);
    for (std::size_t i = 0; i < w; ++i) {
        const double mean_shift = off.known * g.known_axis[i] + off.mci * g.mci_axis[i] + off.smc * g.smc_axis[i];
        b[i] = std::clamp(0.5 + sigma * (mean_shift + standard_normal(rng)), 0.0, 1.0);
    }
    return b;
}

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

struct IndicatorDomain {
    double lo, hi;
};

IndicatorDomain domain_of(const IndicatorRange& r) {
    const double lo = std::min(r.ad_low, r.cn_low);
    const double hi = std::max(r.ad_high, r.cn_high);
    const double pad = std::max(1.0, 0.25 * (hi - lo));
    // Non-negative quantities (counts, scores starting at 0) stay non-negative.
    return {lo >= 0 ? lo : lo - pad, hi + pad};
}

double draw_inside(Rng& rng, double lo, double hi) { return lo == hi ? lo : uniform_in(rng, lo, hi); }

double draw_outside(Rng& rng, const IndicatorDomain& dom, double lo, double hi) {
    const bool below = dom.lo < lo;
    const bool above = dom.hi > hi;
    bool take_below = below;
    if (below && above) take_below = uniform01(rng) < 0.5;
    if (take_below) return uniform_in(rng, dom.lo, lo);
    if (above) return std::nextafter(hi, dom.hi) + (dom.hi - hi) * uniform01(rng);
    return hi;  // no room outside: degenerate domain
}

double draw_known(Rng& rng, const IndicatorRange& r, bool ad, double p_in) {
    const double lo = ad ? r.ad_low : r.cn_low;
    const double hi = ad ? r.ad_high : r.cn_high;
    if (uniform01(rng) < p_in) return draw_inside(rng, lo, hi);
    return draw_outside(rng, domain_of(r), lo, hi);
}

double draw_unknown(Rng& rng, const IndicatorRange& r, double p_between, double p_in) {
    const bool distinct = !(r.ad_low == r.cn_low && r.ad_high == r.cn_high);
    if (distinct && uniform01(rng) < p_between) {
        // AD-range below CN-range or the other way round; take the interval between.
        const bool ad_first = r.ad_low < r.cn_low;
        const double first_hi = ad_first ? r.ad_high : r.cn_high;
        const double second_lo = ad_first ? r.cn_low : r.ad_low;
        if (first_hi < second_lo) {
            // Open gap: strictly outside both ranges.
            double v = uniform_in(rng, first_hi, second_lo);
            if (v <= first_hi) v = std::nextafter(first_hi, second_lo);
            return v;
        }
        // Overlap: inside both ranges.
        return draw_inside(rng, second_lo, std::min(first_hi, ad_first ? r.cn_high : r.ad_high));
    }
    return draw_known(rng, r, uniform01(rng) < 0.5, p_in);
}

}  // namespace

Cohort generate_cohort(const CohortConfig& config, const IndicatorTable& table) {
    config.validate();
    const auto geometry = make_geometry(config.width, config.seed);

    Cohort cohort;
    cohort.width = config.width;
    cohort.subjects.reserve(config.n_subjects.total());

    const std::pair<Label, std::size_t> plan[] = {
        {Label::AD, config.n_subjects.ad},
        {Label::CN, config.n_subjects.cn},
        {Label::MCI, config.n_subjects.mci},
        {Label::SMC, config.n_subjects.smc},
    };

    std::uint64_t ordinal = 0;
    for (const auto& [label, count] : plan) {
        const ClassOffset off = offset_for(label, config.separation);
        for (std::size_t k = 0; k < count; ++k, ++ordinal) {
            Rng rng(derive_seed(config.seed, ordinal));
            char id[32];
            std::snprintf(id, sizeof id, "%s-%05zu", std::string(to_string(label)).c_str(), k);

            Subject subject;
            subject.id = id;
            const auto n_visits = 1 + static_cast<std::size_t>(uniform_index(rng, config.max_visits));
            for (std::size_t v = 0; v < n_visits; ++v) {
                VisitRecord visit;
                visit.subject_id = subject.id;
                visit.visit_index = static_cast<int>(v);
                visit.label = label;
                for (auto c : kAllCategories) {
                    const bool keep = c == ExamCategory::Base || uniform01(rng) >= config.missingness[index_of(c)];
                    // Draw the block regardless so that missingness does not shift later draws.
                    Block b = draw_block(rng, geometry[index_of(c)], off, config.block_noise);
                    if (keep) visit.blocks.emplace(c, std::move(b));
                }
                for (const auto& row : table.rows()) {
                    const bool missing = uniform01(rng) < config.indicator_missing_prob;
                    double value = 0;
                    switch (label) {
                        case Label::AD: value = draw_known(rng, row, true, config.indicator_in_range_prob); break;
                        case Label::CN: value = draw_known(rng, row, false, config.indicator_in_range_prob); break;
                        case Label::MCI:
                            value = draw_unknown(rng, row, config.mci_between_prob, config.indicator_in_range_prob);
                            break;
                        case Label::SMC:
                            value = draw_unknown(rng, row, config.smc_between_prob, config.indicator_in_range_prob);
                            break;
                        case Label::Unlabeled: break;
                    }
                    if (!missing) visit.indicators.emplace(row.name, value);
                }
                subject.visits.push_back(std::move(visit));
            }
            cohort.subjects.push_back(std::move(subject));
        }
    }
    return cohort;
}

}  // namespace opendx
