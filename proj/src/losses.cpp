#include "hardneg/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "hardneg/errors.hpp"
#include "hardneg/numcore.hpp"

namespace hardneg {

namespace {

constexpr double kUnitNormTolerance = 1e-8;

// One anchor's contribution and its gradient with respect to the raw
// (untempered) similarities.
struct AnchorTerm {
    double loss = 0.0;
    double grad_pos = 0.0;
    std::vector<double> grad_neg;
    bool clamped = false;
};

AnchorTerm info_nce_anchor(double sim_pos, std::span<const double> sims_neg, double t) {
    std::vector<double> logits;
    logits.reserve(sims_neg.size() + 1);
    logits.push_back(sim_pos / t);
    for (double s : sims_neg) logits.push_back(s / t);
    const double lse = stable_logsumexp(logits);

    AnchorTerm term;
    term.loss = lse - logits[0];
    term.grad_pos = (std::exp(logits[0] - lse) - 1.0) / t;
    term.grad_neg.resize(sims_neg.size());
    for (std::size_t n = 0; n < sims_neg.size(); ++n) {
        term.grad_neg[n] = std::exp(logits[n + 1] - lse) / t;
    }
    return term;
}

// Corrected negative term and the pieces its gradient needs.
struct DeltaParts {
    double value = 0.0;
    bool clamped = false;
    double reweighted = 0.0;       // M * sum e^{(b+1)a} / sum e^{b a}
    std::vector<double> hard_w;    // softmax((b+1) a)
    std::vector<double> base_w;    // softmax(b a)
};

DeltaParts delta_parts(double sim_pos, std::span<const double> sims_neg, const HnlParams& p) {
    if (sims_neg.empty()) throw DomainError("hard-negative term needs at least one negative");
    if (sims_neg.size() != p.num_negatives()) {
        throw PreconditionError("got " + std::to_string(sims_neg.size()) +
                                " negatives but num_negatives = " +
                                std::to_string(p.num_negatives()));
    }
    const double t = p.temperature();
    const double beta = p.beta();
    const double m = static_cast<double>(sims_neg.size());

    std::vector<double> hard(sims_neg.size());
    std::vector<double> base(sims_neg.size());
    for (std::size_t n = 0; n < sims_neg.size(); ++n) {
        const double a = sims_neg[n] / t;
        hard[n] = (beta + 1.0) * a;
        base[n] = beta * a;
    }
    DeltaParts parts;
    parts.reweighted = std::exp(stable_logsumexp(hard) - stable_logsumexp(base) + std::log(m));
    const double unclamped =
        (parts.reweighted - p.tau_plus() * m * std::exp(sim_pos / t)) / p.tau_minus();
    const double floor = p.clamp_floor();
    // Ties resolve to the unclamped branch.
    if (unclamped >= floor) {
        parts.value = unclamped;
        parts.clamped = false;
        parts.hard_w = softmax(hard);
        parts.base_w = softmax(base);
    } else {
        parts.value = floor;
        parts.clamped = true;
    }
    return parts;
}

AnchorTerm hnl_anchor(double sim_pos, std::span<const double> sims_neg, const HnlParams& p) {
    const double t = p.temperature();
    const DeltaParts delta = delta_parts(sim_pos, sims_neg, p);
    const double pos = std::exp(sim_pos / t);
    const double denom = pos + delta.value;

    AnchorTerm term;
    term.clamped = delta.clamped;
    term.loss = std::log1p(delta.value / pos);
    term.grad_neg.assign(sims_neg.size(), 0.0);

    double d_pos = pos / denom - 1.0;
    if (!delta.clamped) {
        const double m = static_cast<double>(sims_neg.size());
        d_pos -= p.tau_plus() * m * pos / (p.tau_minus() * denom);
        const double scale = delta.reweighted / (p.tau_minus() * denom * t);
        for (std::size_t n = 0; n < sims_neg.size(); ++n) {
            term.grad_neg[n] =
                scale * ((p.beta() + 1.0) * delta.hard_w[n] - p.beta() * delta.base_w[n]);
        }
    }
    term.grad_pos = d_pos / t;
    return term;
}

// Shared driver for the cross-modal losses: row anchors contrast z_s[k]
// against every z_i[n], column anchors contrast z_i[k] against every z_s[n].
template <typename AnchorFn>
LossOutput cross_modal_loss(const EmbeddingBatch& batch, AnchorFn&& anchor) {
    const std::size_t n = batch.size();
    const Tensor sims = cosine_similarity_matrix(batch.z_s(), batch.z_i());
    Tensor grad_sims({n, n});
    double total = 0.0;
    std::vector<double> negs(n - 1);

    for (int direction = 0; direction < 2; ++direction) {
        for (std::size_t k = 0; k < n; ++k) {
            auto sim_at = [&](std::size_t j) { return direction == 0 ? sims(k, j) : sims(j, k); };
            std::size_t slot = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != k) negs[slot++] = sim_at(j);
            }
            const AnchorTerm term = anchor(sims(k, k), std::span<const double>(negs));
            total += term.loss;
            grad_sims(k, k) += term.grad_pos;
            slot = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == k) continue;
                if (direction == 0) {
                    grad_sims(k, j) += term.grad_neg[slot++];
                } else {
                    grad_sims(j, k) += term.grad_neg[slot++];
                }
            }
        }
    }

    LossOutput out;
    out.loss = total;
    out.grad_z_s = matmul(grad_sims, batch.z_i());
    out.grad_z_i = matmul_transpose_a(grad_sims, batch.z_s());
    out.num_anchors = 2 * n;
    return out;
}

void require_temperature(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw ConfigError("temperature must be positive, got " + std::to_string(t));
    }
}

void require_unit_rows(const Tensor& m, const char* side) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double norm = std::sqrt(dot(m.row(r), m.row(r)));
        if (std::abs(norm - 1.0) > kUnitNormTolerance) {
            throw PreconditionError(std::string(side) + " row " + std::to_string(r) +
                                    " is not unit-norm (norm " + std::to_string(norm) + ")");
        }
    }
}

}  // namespace

HnlParams::HnlParams(double beta, double tau_plus, double temperature, std::size_t num_negatives)
    : beta_(beta),
      tau_plus_(tau_plus),
      tau_minus_(1.0 - tau_plus),
      temperature_(temperature),
      num_negatives_(num_negatives) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw ConfigError("beta must be >= 0, got " + std::to_string(beta));
    }
    if (!(tau_plus >= 0.0 && tau_plus < 1.0)) {
        throw ConfigError("tau_plus must lie in [0, 1), got " + std::to_string(tau_plus));
    }
    require_temperature(temperature);
    if (num_negatives < 1) throw ConfigError("num_negatives must be >= 1");
}

double HnlParams::clamp_floor() const {
    return static_cast<double>(num_negatives_) * std::exp(-1.0 / temperature_);
}

EmbeddingBatch EmbeddingBatch::unchecked(Tensor z_s, Tensor z_i) {
    if (z_s.rank() != 2 || z_i.rank() != 2 || !z_s.same_shape(z_i)) {
        throw ShapeError("embedding batch sides must be matrices of equal shape, got " +
                         shape_string(z_s.shape()) + " and " + shape_string(z_i.shape()));
    }
    return EmbeddingBatch(std::move(z_s), std::move(z_i));
}

EmbeddingBatch EmbeddingBatch::make(Tensor z_s, Tensor z_i) {
    EmbeddingBatch batch = unchecked(std::move(z_s), std::move(z_i));
    require_unit_rows(batch.z_s_, "z_s");
    require_unit_rows(batch.z_i_, "z_i");
    return batch;
}

DeltaTerm hnl_delta_term(double sim_pos, std::span<const double> sims_neg, const HnlParams& p) {
    const DeltaParts parts = delta_parts(sim_pos, sims_neg, p);
    return {parts.value, parts.clamped};
}

LossOutput info_nce_bidirectional(const EmbeddingBatch& batch, double temperature) {
    require_temperature(temperature);
    if (batch.size() == 0) throw DomainError("info_nce on an empty batch");
    return cross_modal_loss(batch, [&](double pos, std::span<const double> negs) {
        return info_nce_anchor(pos, negs, temperature);
    });
}

LossOutput hnl_loss_bidirectional(const EmbeddingBatch& batch, const HnlParams& p) {
    if (batch.size() < 2) {
        throw InsufficientNegativesError("hard-negative loss needs a batch of at least 2");
    }
    if (p.num_negatives() != batch.size() - 1) {
        throw PreconditionError("num_negatives must equal batch size - 1 (" +
                                std::to_string(batch.size() - 1) + "), got " +
                                std::to_string(p.num_negatives()));
    }
    return cross_modal_loss(batch, [&](double pos, std::span<const double> negs) {
        return hnl_anchor(pos, negs, p);
    });
}

LossOutput debiased_loss_bidirectional(const EmbeddingBatch& batch, double tau_plus,
                                       double temperature) {
    if (batch.size() < 2) {
        throw InsufficientNegativesError("debiased loss needs a batch of at least 2");
    }
    return hnl_loss_bidirectional(batch, HnlParams(0.0, tau_plus, temperature, batch.size() - 1));
}

LossOutput nt_xent_two_view(const Tensor& z_a, const Tensor& z_b, double temperature,
                            const std::optional<HnlParams>& hnl) {
    require_temperature(temperature);
    if (z_a.rank() != 2 || !z_a.same_shape(z_b)) {
        throw ShapeError("two-view loss needs equal-shape matrices, got " +
                         shape_string(z_a.shape()) + " and " + shape_string(z_b.shape()));
    }
    const std::size_t n = z_a.rows();
    if (n < 2) throw InsufficientNegativesError("two-view loss needs a batch of at least 2");
    if (hnl && hnl->num_negatives() != 2 * n - 2) {
        throw PreconditionError("two-view num_negatives must equal 2N - 2");
    }

    const std::size_t total = 2 * n;
    const std::size_t d = z_a.cols();
    Tensor views({total, d});
    std::copy(z_a.data().begin(), z_a.data().end(), views.data().begin());
    std::copy(z_b.data().begin(), z_b.data().end(), views.data().begin() + n * d);

    const Tensor sims = matmul_transpose_b(views, views);
    Tensor grad_sims({total, total});
    std::vector<double> negs(total - 2);
    double loss = 0.0;

    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t pos = (i + n) % total;
        std::size_t slot = 0;
        for (std::size_t j = 0; j < total; ++j) {
            if (j != i && j != pos) negs[slot++] = sims(i, j);
        }
        const AnchorTerm term = hnl ? hnl_anchor(sims(i, pos), negs, *hnl)
                                    : info_nce_anchor(sims(i, pos), negs, temperature);
        loss += term.loss;
        grad_sims(i, pos) += term.grad_pos;
        slot = 0;
        for (std::size_t j = 0; j < total; ++j) {
            if (j != i && j != pos) grad_sims(i, j) += term.grad_neg[slot++];
        }
    }

    // sims = V V^T, so dV = (G + G^T) V.
    Tensor sym = grad_sims;
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = 0; j < total; ++j) sym(i, j) += grad_sims(j, i);
    }
    const Tensor grad_views = matmul(sym, views);

    LossOutput out;
    out.loss = loss;
    out.grad_z_s = Tensor({n, d});
    out.grad_z_i = Tensor({n, d});
    std::copy(grad_views.data().begin(), grad_views.data().begin() + n * d,
              out.grad_z_s.data().begin());
    std::copy(grad_views.data().begin() + n * d, grad_views.data().end(),
              out.grad_z_i.data().begin());
    out.num_anchors = total;
    return out;
}

}  // namespace hardneg
