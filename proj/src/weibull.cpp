#include "opendx/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "opendx/errors.hpp"

namespace opendx {

double WeibullTail::w_score(double d) const noexcept {
    const double z = d - tau;
    if (!(z > 0)) return 0.0;
    return -std::expm1(-std::pow(z / lambda, kappa));
}

double weibull_log_likelihood(std::span<const double> x, double lambda, double kappa) {
    double ll = 0;
    for (double v : x) {
        const double z = v / lambda;
        ll += std::log(kappa / lambda) + (kappa - 1.0) * std::log(z) - std::pow(z, kappa);
    }
    return ll;
}

namespace {

std::size_t distinct_count(std::span<const double> x) { return std::set<double>(x.begin(), x.end()).size(); }

// Profile-likelihood equation for the shape and its derivative, on samples
// scaled into (0, 1].
struct Profile {
    std::vector<double> log_y;
    double mean_log = 0;

    std::pair<double, double> eval(double k) const {
        double s0 = 0, s1 = 0, s2 = 0;
        for (double ly : log_y) {
            const double w = std::exp(k * ly);
            s0 += w;
            s1 += w * ly;
            s2 += w * ly * ly;
        }
        const double r = s1 / s0;
        return {r - 1.0 / k - mean_log, s2 / s0 - r * r + 1.0 / (k * k)};
    }
};

}  // namespace

WeibullTail weibull_mle(std::span<const double> x, std::size_t max_iterations, double tolerance) {
    if (distinct_count(x) < 5)
        throw InsufficientTail("Weibull fit needs at least 5 distinct values, got " + std::to_string(distinct_count(x)));
    const double scale = *std::max_element(x.begin(), x.end());
    Profile prof;
    prof.log_y.reserve(x.size());
    for (double v : x) {
        if (!(v > 0) || !std::isfinite(v)) throw DomainError("Weibull samples must be positive and finite");
        prof.log_y.push_back(std::log(v / scale));
    }
    for (double ly : prof.log_y) prof.mean_log += ly;
    prof.mean_log /= static_cast<double>(prof.log_y.size());

    // f is increasing in k, negative near 0 and positive for large k.
    double lo = 1.0, hi = 1.0;
    while (prof.eval(lo).first > 0 && lo > 1e-8) lo /= 2;
    while (prof.eval(hi).first < 0 && hi < 1e8) hi *= 2;
    if (prof.eval(lo).first > 0 || prof.eval(hi).first < 0) throw FitDiverged("Weibull shape could not be bracketed");

    double k = std::clamp(1.0, lo, hi);
    bool converged = false;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        const auto [f, df] = prof.eval(k);
        if (f == 0) {
            converged = true;
            break;
        }
        (f < 0 ? lo : hi) = k;
        double next = k - f / df;
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - k) / k;
        k = next;
        if (step < tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) throw FitDiverged("Weibull shape iteration did not converge");

    double mean_pow = 0;
    for (double ly : prof.log_y) mean_pow += std::exp(k * ly);
    mean_pow /= static_cast<double>(prof.log_y.size());
    const double lambda = scale * std::pow(mean_pow, 1.0 / k);
    if (!(lambda > 0) || !std::isfinite(lambda)) throw FitDiverged("Weibull scale is not finite");
    return {0.0, lambda, k};
}

WeibullTail weibull_fit_high(std::span<const double> distances, const WeibullFitOptions& options) {
    if (options.full_sample) return weibull_mle(distances, options.max_iterations, options.tolerance);
    if (!(options.tail_fraction > 0 && options.tail_fraction <= 1))
        throw ConfigError("tail_fraction must lie in (0, 1]");
    std::vector<double> sorted(distances.begin(), distances.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto n_tail = static_cast<std::size_t>(std::ceil(options.tail_fraction * static_cast<double>(sorted.size())));
    sorted.resize(n_tail);
    if (distinct_count(sorted) < 5)
        throw InsufficientTail("tail of " + std::to_string(n_tail) + " distances has fewer than 5 distinct values");
    const double top = sorted.front(), bottom = sorted.back();
    const double tau = bottom - 1e-3 * (top - bottom);
    for (double& v : sorted) v -= tau;
    WeibullTail t = weibull_mle(sorted, options.max_iterations, options.tolerance);
    t.tau = tau;
    return t;
}

}  // namespace opendx
