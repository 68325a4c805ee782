#include "opendx/openmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

AbnormalPattern extract_abnormal_pattern(const std::map<std::string, double>& indicators, const IndicatorTable& table) {
    if (table.size() != kNumIndicators)
        throw ShapeError("indicator table has " + std::to_string(table.size()) + " rows, expected " +
                         std::to_string(kNumIndicators));
    AbnormalPattern p{};
    for (std::size_t i = 0; i < kNumIndicators; ++i) {
        const auto& row = table.rows()[i];
        const auto it = indicators.find(row.name);
        if (it == indicators.end()) continue;
        p[2 * i] = row.inside_ad(it->second) ? 0 : 1;
        p[2 * i + 1] = row.inside_cn(it->second) ? 0 : 1;
    }
    return p;
}

AbnormalPattern extract_abnormal_pattern(const VisitRecord& visit, const IndicatorTable& table) {
    return extract_abnormal_pattern(visit.indicators, table);
}

Point to_point(const AbnormalPattern& p) { return Point(p.begin(), p.end()); }

double normalized_distance(const Point& a, const Point& b) {
    return std::sqrt(squared_distance(a, b) / static_cast<double>(kPatternSize));
}

namespace {
double nearest_distance(const Point& x, const std::vector<Point>& centers) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : centers) best = std::min(best, normalized_distance(x, c));
    return best;
}
}  // namespace

double pattern_distance(const Point& x, const std::vector<Point>& own_centers, const std::vector<Point>& other_centers) {
    if (own_centers.empty() || other_centers.empty()) throw ModelNotFitted("pattern distance needs both center sets");
    const double own = nearest_distance(x, own_centers);
    const double other = nearest_distance(x, other_centers);
    return std::sqrt(own * own + (1.0 - other) * (1.0 - other));
}

double OpenMaxModel::distance(const Point& x, std::size_t c) const {
    return pattern_distance(x, classes[c].centers, classes[1 - c].centers);
}

void OpenMaxOptions::validate() const {
    for (std::size_t c = 0; c < 2; ++c) {
        if (centers[c] == 0) throw ConfigError("OpenMax needs at least one center per class");
        if (!(quantile[c] > 0 && quantile[c] <= 1)) throw ConfigError("OpenMax quantile must lie in (0, 1]");
    }
    if (alpha < 1 || alpha > 2) throw ConfigError("OpenMax alpha must be 1 or 2");
}

double nearest_rank_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw EmptyDataset("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

OpenMaxModel fit_openmax(const std::array<std::vector<AbnormalPattern>, 2>& patterns, const OpenMaxOptions& options) {
    options.validate();
    std::array<std::vector<Point>, 2> points;
    for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t need = std::max<std::size_t>(options.centers[c], 5);
        if (patterns[c].size() < need)
            throw TooFewPoints(std::string(c == 0 ? "AD" : "CN") + " has " + std::to_string(patterns[c].size()) +
                               " correctly classified patterns, need " + std::to_string(need));
        for (const auto& p : patterns[c]) points[c].push_back(to_point(p));
    }

    OpenMaxModel model;
    model.alpha = options.alpha;
    model.abnormal_penalty = options.abnormal_penalty;
    model.seed = options.seed;
    for (std::size_t c = 0; c < 2; ++c) {
        KMeansOptions km{options.centers[c], options.kmeans_batch, options.kmeans_iterations,
                         derive_seed(options.seed, c)};
        model.classes[c].centers = minibatch_kmeans(points[c], km).centers;
    }
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> dist;
        dist.reserve(points[c].size());
        for (const auto& x : points[c]) dist.push_back(model.distance(x, c));
        model.classes[c].tail = weibull_fit_high(dist, options.tail);
        model.classes[c].threshold = nearest_rank_quantile(dist, options.quantile[c]);
    }
    return model;
}

double abnormality_score(double distance, double threshold) noexcept {
    if (!(distance > threshold)) return 0.0;
    if (threshold <= 0) return 1.0;
    return std::clamp((distance - threshold) / threshold, 0.0, 1.0);
}

OutcomeProbs apply_abnormal_penalty(const OutcomeProbs& probs, const std::array<double, 2>& abnormality) {
    OutcomeProbs out = probs;
    double known = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        out[c + 1] = probs[c + 1] * (1.0 - abnormality[c]);
        known += out[c + 1];
    }
    out[0] = std::max(0.0, 1.0 - known);
    return out;
}

OutcomeProbs openmax_from_distances(const std::array<double, 2>& distances, const std::array<double, 2>& activations,
                                    const std::array<WeibullTail, 2>& tails, const std::array<double, 2>& thresholds,
                                    std::size_t alpha, bool abnormal_penalty) {
    // Rank classes by activation, ties to the lower index.
    std::array<std::size_t, 2> order{0, 1};
    if (activations[1] > activations[0]) order = {1, 0};

    std::array<double, 2> omega{1.0, 1.0};
    for (std::size_t r = 1; r <= std::min<std::size_t>(alpha, 2); ++r) {
        const std::size_t c = order[r - 1];
        const double factor = static_cast<double>(alpha - r) / static_cast<double>(alpha);
        omega[c] = 1.0 - factor * tails[c].w_score(distances[c]);
    }
    std::array<double, kNumOutcomes> v{};
    for (std::size_t c = 0; c < 2; ++c) {
        v[c + 1] = activations[c] * omega[c];
        v[0] += activations[c] * (1.0 - omega[c]);
    }
    const double vmax = *std::max_element(v.begin(), v.end());
    OutcomeProbs p{};
    double norm = 0;
    for (std::size_t i = 0; i < kNumOutcomes; ++i) norm += p[i] = std::exp(v[i] - vmax);
    for (auto& x : p) x /= norm;

    if (!abnormal_penalty) return p;
    return apply_abnormal_penalty(
        p, {abnormality_score(distances[0], thresholds[0]), abnormality_score(distances[1], thresholds[1])});
}

OutcomeProbs openmax_probs(const AbnormalPattern& x, const std::array<double, 2>& activations,
                           const OpenMaxModel& model) {
    if (!model.fitted()) throw ModelNotFitted("OpenMax model has no centers");
    const Point px = to_point(x);
    return openmax_from_distances({model.distance(px, 0), model.distance(px, 1)}, activations,
                                  {model.classes[0].tail, model.classes[1].tail},
                                  {model.classes[0].threshold, model.classes[1].threshold}, model.alpha,
                                  model.abnormal_penalty);
}

nlohmann::json openmax_to_json(const OpenMaxModel& m) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& cm = m.classes[c];
        classes.push_back({{"class", c == 0 ? "AD" : "CN"},
                           {"centers", cm.centers},
                           {"tau", cm.tail.tau},
                           {"lambda", cm.tail.lambda},
                           {"kappa", cm.tail.kappa},
                           {"threshold", cm.threshold}});
    }
    return {{"format", "opendx.openmax"},
            {"version", 1},
            {"alpha", m.alpha},
            {"abnormal_penalty", m.abnormal_penalty},
            {"seed", m.seed},
            {"classes", classes}};
}

OpenMaxModel openmax_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "opendx.openmax") throw SchemaError("not an opendx OpenMax model");
    if (j.value("version", 0) != 1) throw SchemaError("unsupported OpenMax model version");
    OpenMaxModel m;
    m.alpha = j.at("alpha").get<std::size_t>();
    m.abnormal_penalty = j.at("abnormal_penalty").get<bool>();
    m.seed = j.at("seed").get<std::uint64_t>();
    if (m.alpha < 1 || m.alpha > 2) throw SchemaError("OpenMax alpha must be 1 or 2");
    const auto& classes = j.at("classes");
    if (!classes.is_array() || classes.size() != 2) throw SchemaError("OpenMax model needs two classes");
    for (std::size_t c = 0; c < 2; ++c) {
        auto& cm = m.classes[c];
        const auto& jc = classes[c];
        cm.centers = jc.at("centers").get<std::vector<Point>>();
        if (cm.centers.empty()) throw SchemaError("OpenMax class without centers");
        for (const auto& p : cm.centers)
            if (p.size() != kPatternSize) throw SchemaError("OpenMax center has the wrong dimension");
        cm.tail = {jc.at("tau").get<double>(), jc.at("lambda").get<double>(), jc.at("kappa").get<double>()};
        cm.threshold = jc.at("threshold").get<double>();
        if (!(cm.tail.lambda > 0 && cm.tail.kappa > 0)) throw SchemaError("Weibull scale and shape must be > 0");
        if (!(cm.threshold >= 0)) throw SchemaError("OpenMax threshold must be >= 0");
    }
    return m;
}

nlohmann::json openmax_options_to_json(const OpenMaxOptions& o) {
    return {{"centers", o.centers},
            {"quantile", o.quantile},
            {"alpha", o.alpha},
            {"abnormal_penalty", o.abnormal_penalty},
            {"tail_fraction", o.tail.tail_fraction},
            {"kmeans_batch", o.kmeans_batch},
            {"kmeans_iterations", o.kmeans_iterations},
            {"seed", o.seed}};
}

OpenMaxOptions openmax_options_from_json(const nlohmann::json& j) {
    OpenMaxOptions o;
    o.centers = j.value("centers", o.centers);
    o.quantile = j.value("quantile", o.quantile);
    o.alpha = j.value("alpha", o.alpha);
    o.abnormal_penalty = j.value("abnormal_penalty", o.abnormal_penalty);
    o.tail.tail_fraction = j.value("tail_fraction", o.tail.tail_fraction);
    o.kmeans_batch = j.value("kmeans_batch", o.kmeans_batch);
    o.kmeans_iterations = j.value("kmeans_iterations", o.kmeans_iterations);
    o.seed = j.value("seed", o.seed);
    o.validate();
    return o;
}

}  // namespace opendx
