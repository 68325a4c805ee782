#include "opendx/losses.hpp"

#include <cmath>
#include <string>

#include "opendx/errors.hpp"

namespace opendx {

double cross_entropy(std::span<const double> target, std::span<const double> probs) {
    if (target.size() != probs.size()) throw ShapeError("cross_entropy: size mismatch");
    double loss = 0;
    for (std::size_t i = 0; i < target.size(); ++i)
        if (target[i] != 0.0) loss -= target[i] * std::log(probs[i]);
    return loss;
}

double msle(std::span<const double> target, std::span<const double> reconstruction) {
    if (target.size() != reconstruction.size()) throw ShapeError("msle: size mismatch");
    if (target.empty()) return 0.0;
    double sum = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] < 0 || reconstruction[i] < 0)
            throw DomainError("msle: negative entry at coordinate " + std::to_string(i));
        const double d = std::log1p(target[i]) - std::log1p(reconstruction[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(target.size());
}

double diagnosis_loss(std::span<const double> class_probs, std::span<const double> class_target,
                      std::span<const double> reconstruction, std::span<const double> pooled_input,
                      const LossMix& mix) {
    return mix.diagnosis * cross_entropy(class_target, class_probs) +
           mix.reconstruction * msle(pooled_input, reconstruction);
}

namespace {

/// The double within a few ulps of `guess` whose product with `count` lands
/// closest to `target`.
double nearest_exact_factor(double guess, double count, double target) {
    double best = guess, best_err = std::abs(guess * count - target);
    double up = guess, down = guess;
    for (int step = 0; step < 4 && best_err != 0; ++step) {
        up = std::nextafter(up, 2 * guess);
        down = std::nextafter(down, 0.0);
        for (double c : {up, down})
            if (const double err = std::abs(c * count - target); err < best_err) {
                best = c;
                best_err = err;
            }
    }
    return best;
}

}  // namespace

ClassWeights class_weights(HeadCounts counts) {
    if (counts.positives == 0 || counts.negatives == 0)
        throw DegenerateHead("head has " + std::to_string(counts.positives) + " positives and " +
                             std::to_string(counts.negatives) + " negatives");
    const double p = static_cast<double>(counts.positives);
    const double n = static_cast<double>(counts.negatives);
    const double total = p + n;
    // The quotients are nudged by a few ulps so that gP |P| + gN |N| == |P| + |N|
    // holds in floating point, not only in exact arithmetic.
    const double half = total / 2.0;
    double wp = nearest_exact_factor(half / p, p, half);
    const double target_n = total - wp * p;
    double wn = nearest_exact_factor(target_n / n, n, target_n);
    for (int step = 0; step < 8 && wp * p + wn * n != total; ++step)
        wn = std::nextafter(wn, wp * p + wn * n < total ? 2 * wn : 0.0);
    return {wp, wn};
}

ExamLoss exam_selection_loss(std::span<const double> exam_scores, std::span<const bool> targets,
                             std::span<const double> log_sigmas, std::span<const HeadCounts> counts) {
    const std::size_t n = exam_scores.size();
    if (targets.size() != n || log_sigmas.size() != n || counts.size() != n)
        throw ShapeError("exam_selection_loss: size mismatch");
    ExamLoss out;
    for (std::size_t i = 0; i < n; ++i) {
        ClassWeights w;
        try {
            w = class_weights(counts[i]);
        } catch (const DegenerateHead&) {
            out.excluded_heads.push_back(i);
            continue;
        }
        const double p = exam_scores[i];
        if (!(p > 0.0 && p < 1.0)) throw DomainError("exam score outside (0,1) at head " + std::to_string(i));
        const double bce = targets[i] ? -w.positive * std::log(p) : -w.negative * std::log1p(-p);
        const double s = log_sigmas[i];
        out.value += 0.5 * std::exp(-2.0 * s) * bce + s;
    }
    return out;
}

}  // namespace opendx
