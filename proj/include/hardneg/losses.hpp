#pragma once

#include <optional>
#include <span>

#include "hardneg/tensor.hpp"

namespace hardneg {

/// Hyperparameters of the hard-negative objective.
///
/// `beta` concentrates the negative distribution on negatives similar to the
/// anchor, `tau_plus` is the prior probability that a negative shares the
/// anchor's class. `temperature` divides every similarity before
/// exponentiation, including inside the importance weights.
class HnlParams {
public:
    HnlParams(double beta, double tau_plus, double temperature, std::size_t num_negatives);

    double beta() const noexcept { return beta_; }
    double tau_plus() const noexcept { return tau_plus_; }
    double tau_minus() const noexcept { return tau_minus_; }
    double temperature() const noexcept { return temperature_; }
    std::size_t num_negatives() const noexcept { return num_negatives_; }

    HnlParams with_negatives(std::size_t n) const {
        return HnlParams(beta_, tau_plus_, temperature_, n);
    }

    /// Lower clamp of the corrected negative term: N exp(-1/t).
    double clamp_floor() const;

private:
    double beta_;
    double tau_plus_;
    double tau_minus_;
    double temperature_;
    std::size_t num_negatives_;
};

/// Paired per-modality projections; row k of both sides is the positive pair.
class EmbeddingBatch {
public:
    /// Validates equal shapes and unit-norm rows (within 1e-8).
    static EmbeddingBatch make(Tensor z_s, Tensor z_i);
    /// Shape checks only. Used by the finite-difference oracle, which probes
    /// off the unit sphere.
    static EmbeddingBatch unchecked(Tensor z_s, Tensor z_i);

    const Tensor& z_s() const noexcept { return z_s_; }
    const Tensor& z_i() const noexcept { return z_i_; }
    std::size_t size() const { return z_s_.rows(); }
    std::size_t dim() const { return z_s_.cols(); }

private:
    EmbeddingBatch(Tensor z_s, Tensor z_i) : z_s_(std::move(z_s)), z_i_(std::move(z_i)) {}
    Tensor z_s_;
    Tensor z_i_;
};

struct LossOutput {
    double loss = 0.0;  // summed over anchors
    Tensor grad_z_s;    // d loss / d z_s (or z_a for the two-view loss)
    Tensor grad_z_i;    // d loss / d z_i (or z_b)
    std::size_t num_anchors = 0;

    double mean_per_anchor() const {
        return num_anchors ? loss / static_cast<double>(num_anchors) : 0.0;
    }
};

/// Outcome of the corrected negative term for one anchor.
struct DeltaTerm {
    double value = 0.0;
    bool clamped = false;
};

/// Importance-weighted, clamped negative term for one anchor.
DeltaTerm hnl_delta_term(double sim_pos, std::span<const double> sims_neg, const HnlParams& p);

inline double hnl_delta(double sim_pos, std::span<const double> sims_neg, const HnlParams& p) {
    return hnl_delta_term(sim_pos, sims_neg, p).value;
}

/// Cross-modal InfoNCE summed over both directions.
LossOutput info_nce_bidirectional(const EmbeddingBatch& batch, double temperature);

/// Cross-modal hard-negative loss. `p.num_negatives()` must equal N - 1.
LossOutput hnl_loss_bidirectional(const EmbeddingBatch& batch, const HnlParams& p);

/// The beta = 0 special case of hnl_loss_bidirectional.
LossOutput debiased_loss_bidirectional(const EmbeddingBatch& batch, double tau_plus,
                                       double temperature);

/// Two-view NT-Xent over 2N projections with 2N - 2 negatives per anchor.
/// When `hnl` is given, its num_negatives must equal 2N - 2.
LossOutput nt_xent_two_view(const Tensor& z_a, const Tensor& z_b, double temperature,
                            const std::optional<HnlParams>& hnl = std::nullopt);

}  // namespace hardneg
