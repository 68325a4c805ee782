#pragma once
// Per-sample training losses.
//
// Diagnosis:   mix.diagnosis * CE(target, probs) + mix.reconstruction * MSLE(input, recon)
// Exam heads:  sum_i  1/(2 sigma_i^2) * BCE_i^w + log sigma_i
//   where BCE_i^w = -(gP_i y_i log p_i + gN_i (1 - y_i) log(1 - p_i)),
//   gP_i = (|P_i| + |N_i|) / (2 |P_i|),  gN_i = (|P_i| + |N_i|) / (2 |N_i|).

#include <cstddef>
#include <span>
#include <vector>

namespace opendx {

struct LossMix {
    double diagnosis = 0.65;
    double reconstruction = 0.35;

    bool operator==(const LossMix&) const = default;
};

double cross_entropy(std::span<const double> target, std::span<const double> probs);

/// Mean over coordinates of (ln(1+t) - ln(1+r))^2. Throws DomainError on a
/// negative entry in either argument.
double msle(std::span<const double> target, std::span<const double> reconstruction);

double diagnosis_loss(std::span<const double> class_probs, std::span<const double> class_target,
                      std::span<const double> reconstruction, std::span<const double> pooled_input,
                      const LossMix& mix = {});

/// Number of strategy samples in which a head is positive / negative.
struct HeadCounts {
    std::size_t positives = 0;
    std::size_t negatives = 0;

    bool operator==(const HeadCounts&) const = default;
};

struct ClassWeights {
    double positive = 1.0;
    double negative = 1.0;
};

/// Throws DegenerateHead when either count is zero.
ClassWeights class_weights(HeadCounts counts);

struct ExamLoss {
    double value = 0.0;
    /// Heads skipped because one of their counts is zero.
    std::vector<std::size_t> excluded_heads;
};

/// One sample, any number of heads (all spans the same length). Scores must lie
/// in (0,1).
ExamLoss exam_selection_loss(std::span<const double> exam_scores, std::span<const bool> targets,
                             std::span<const double> log_sigmas, std::span<const HeadCounts> counts);

}  // namespace opendx
