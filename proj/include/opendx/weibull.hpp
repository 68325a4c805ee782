#pragma once
// Shifted Weibull tail models.

#include <cstddef>
#include <span>

namespace opendx {

struct WeibullTail {
    double tau = 0;     // shift
    double lambda = 1;  // scale
    double kappa = 1;   // shape

    /// CDF of the shifted distribution; 0 at or below tau.
    double w_score(double d) const noexcept;

    bool operator==(const WeibullTail&) const = default;
};

struct WeibullFitOptions {
    /// Fraction of the largest values kept as the tail.
    double tail_fraction = 0.1;
    /// Use every value and keep tau at zero (plain two-parameter fit).
    bool full_sample = false;
    std::size_t max_iterations = 100;
    double tolerance = 1e-8;

    bool operator==(const WeibullFitOptions&) const = default;
};

/// Maximum-likelihood (lambda, kappa) for samples already shifted to be > 0.
/// Newton on the profile equation for kappa, lambda in closed form. Throws
/// FitDiverged when Newton does not settle and InsufficientTail when fewer than
/// 5 distinct values are given.
WeibullTail weibull_mle(std::span<const double> x, std::size_t max_iterations = 100, double tolerance = 1e-8);

/// FitHigh: keeps the largest values, shifts them by tau = (tail minimum minus a
/// margin of 1e-3 of the tail range) and fits the rest by maximum likelihood.
WeibullTail weibull_fit_high(std::span<const double> distances, const WeibullFitOptions& options = {});

/// Log-likelihood of unshifted samples, for oracles and diagnostics.
double weibull_log_likelihood(std::span<const double> x, double lambda, double kappa);

}  // namespace opendx
