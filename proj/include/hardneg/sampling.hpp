#pragma once

#include <span>
#include <vector>

#include "hardneg/rng.hpp"

namespace hardneg {

/// Normalized hardness weights over a candidate set. Entries outside
/// `support` are exactly zero.
struct HardnessWeights {
    std::vector<double> weights;
    std::vector<std::size_t> support;
};

/// Weights proportional to exp(beta * sim) over all candidates, with a
/// uniform base distribution.
HardnessWeights hardness_weights(std::span<const double> sims, double beta);

/// Same as hardness_weights but restricted to candidates whose label differs
/// from `anchor_label`. Throws EmptySupportError when none qualifies.
HardnessWeights true_negative_weights(std::span<const double> sims, std::span<const int> labels,
                                      int anchor_label, double beta);

/// Draws one index from the label-aware hardness distribution. Diagnostic
/// only: it needs labels, which self-supervised training never sees.
std::size_t sample_qbeta(std::span<const double> sims, std::span<const int> labels,
                         int anchor_label, double beta, Rng& rng);

/// Inverse-CDF draw from a normalized weight vector.
std::size_t sample_index(std::span<const double> weights, Rng& rng);

}  // namespace hardneg
