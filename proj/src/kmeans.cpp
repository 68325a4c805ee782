#include "opendx/kmeans.hpp"

#include <limits>
#include <string>

#include "opendx/errors.hpp"
#include "opendx/rng.hpp"

namespace opendx {

double squared_distance(const Point& a, const Point& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

std::size_t nearest(const Point& p, const std::vector<Point>& centers, double* dist = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = squared_distance(p, centers[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist) *dist = best_d;
    return best;
}

std::vector<Point> plus_plus_seed(const std::vector<Point>& points, std::size_t k, Rng& rng) {
    std::vector<Point> centers;
    std::vector<bool> chosen(points.size(), false);
    std::size_t first = uniform_index(rng, points.size());
    centers.push_back(points[first]);
    chosen[first] = true;
    std::vector<double> d2(points.size());
    while (centers.size() < k) {
        double total = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            nearest(points[i], centers, &d2[i]);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0) {
            double u = uniform01(rng) * total;
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (d2[i] > 0 && u < d2[i]) {
                    pick = i;
                    break;
                }
                u -= d2[i];
            }
            while (d2[pick] == 0) --pick;  // rounding at the end of the scan
        } else {
            // All points coincide with a center; take any unchosen index.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < points.size(); ++i)
                if (!chosen[i]) free.push_back(i);
            pick = free[uniform_index(rng, free.size())];
        }
        chosen[pick] = true;
        centers.push_back(points[pick]);
    }
    return centers;
}

// One assignment / mean step; empty clusters keep their center.
std::vector<Point> lloyd_step(const std::vector<Point>& points, std::vector<Point> centers) {
    const std::size_t dim = points.front().size();
    std::vector<Point> sums(centers.size(), Point(dim, 0.0));
    std::vector<std::size_t> counts(centers.size(), 0);
    for (const auto& p : points) {
        const std::size_t c = nearest(p, centers);
        ++counts[c];
        for (std::size_t j = 0; j < dim; ++j) sums[c][j] += p[j];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < dim; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    return centers;
}

}  // namespace

double inertia(const std::vector<Point>& points, const std::vector<Point>& centers) {
    double total = 0;
    for (const auto& p : points) {
        double d = 0;
        nearest(p, centers, &d);
        total += d;
    }
    return total;
}

KMeansResult minibatch_kmeans(const std::vector<Point>& points, const KMeansOptions& options) {
    if (options.k == 0) throw ConfigError("k-means needs k >= 1");
    if (points.size() < options.k)
        throw TooFewPoints("k-means with k=" + std::to_string(options.k) + " on " + std::to_string(points.size()) +
                           " points");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw ShapeError("k-means points have differing dimensions");

    Rng rng(derive_seed(options.seed, "kmeans"));
    const std::vector<Point> seeded = plus_plus_seed(points, options.k, rng);

    std::vector<Point> centers = seeded;
    std::vector<std::size_t> counts(options.k, 0);
    const std::size_t batch = std::max<std::size_t>(1, options.batch);
    std::vector<std::size_t> sample(batch);
    std::vector<std::size_t> assign(batch);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        for (std::size_t b = 0; b < batch; ++b) {
            sample[b] = uniform_index(rng, points.size());
            assign[b] = nearest(points[sample[b]], centers);
        }
        for (std::size_t b = 0; b < batch; ++b) {
            auto& c = centers[assign[b]];
            const double eta = 1.0 / static_cast<double>(++counts[assign[b]]);
            const auto& p = points[sample[b]];
            for (std::size_t j = 0; j < dim; ++j) c[j] += eta * (p[j] - c[j]);
        }
    }

    KMeansResult from_batches{lloyd_step(points, centers), 0};
    from_batches.inertia = inertia(points, from_batches.centers);
    KMeansResult from_seed{lloyd_step(points, seeded), 0};
    from_seed.inertia = inertia(points, from_seed.centers);
    return from_batches.inertia <= from_seed.inertia ? from_batches : from_seed;
}

}  // namespace opendx
