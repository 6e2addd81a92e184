#include "hardneg/sampling.hpp"

#include <cmath>

#include "hardneg/errors.hpp"
#include "hardneg/numcore.hpp"

namespace hardneg {

namespace {

HardnessWeights weights_on_support(std::span<const double> sims, std::vector<std::size_t> support,
                                   double beta) {
    std::vector<double> logits;
    logits.reserve(support.size());
    for (std::size_t idx : support) {
        if (!std::isfinite(sims[idx])) throw DomainError("hardness weights need finite sims");
        logits.push_back(beta * sims[idx]);
    }
    const double lse = stable_logsumexp(logits);
    HardnessWeights out;
    out.weights.assign(sims.size(), 0.0);
    for (std::size_t k = 0; k < support.size(); ++k) {
        out.weights[support[k]] = std::exp(logits[k] - lse);
    }
    out.support = std::move(support);
    return out;
}

}  // namespace

HardnessWeights hardness_weights(std::span<const double> sims, double beta) {
    if (sims.empty()) throw DomainError("hardness weights over an empty candidate set");
    std::vector<std::size_t> support(sims.size());
    for (std::size_t i = 0; i < sims.size(); ++i) support[i] = i;
    return weights_on_support(sims, std::move(support), beta);
}

HardnessWeights true_negative_weights(std::span<const double> sims, std::span<const int> labels,
                                      int anchor_label, double beta) {
    if (sims.size() != labels.size()) throw ShapeError("sims and labels differ in length");
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != anchor_label) support.push_back(i);
    }
    if (support.empty()) {
        throw EmptySupportError("no candidate with a label different from the anchor");
    }
    return weights_on_support(sims, std::move(support), beta);
}

std::size_t sample_index(std::span<const double> weights, Rng& rng) {
    if (weights.empty()) throw EmptySupportError("cannot sample from an empty weight vector");
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        cumulative += weights[i];
        last_positive = i;
        if (u < cumulative) return i;
    }
    // Rounding can leave the total slightly below 1.
    if (last_positive == weights.size()) throw EmptySupportError("all weights are zero");
    return last_positive;
}

std::size_t sample_qbeta(std::span<const double> sims, std::span<const int> labels,
                         int anchor_label, double beta, Rng& rng) {
    const HardnessWeights w = true_negative_weights(sims, labels, anchor_label, beta);
    return sample_index(w.weights, rng);
}

}  // namespace hardneg
