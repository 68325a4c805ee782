#pragma once
// Mini-batch k-means over dense points.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace opendx {

using Point = std::vector<double>;

struct KMeansOptions {
    std::size_t k = 3;
    std::size_t batch = 64;
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
};

struct KMeansResult {
    std::vector<Point> centers;
    double inertia = 0;  // sum of squared distances to the nearest center
};

double squared_distance(const Point& a, const Point& b);

/// Sum of squared distances from every point to its nearest center.
double inertia(const std::vector<Point>& points, const std::vector<Point>& centers);

/// k-means++ seeding, then Sculley mini-batch updates with per-center 1/count
/// learning rates, then one full-batch assignment / mean step. The result never
/// has higher inertia than the seeding. Throws TooFewPoints when |points| < k
/// and ShapeError on ragged input.
KMeansResult minibatch_kmeans(const std::vector<Point>& points, const KMeansOptions& options);

}  // namespace opendx
