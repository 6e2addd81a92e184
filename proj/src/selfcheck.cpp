#include "hardneg/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "hardneg/encoder.hpp"
#include "hardneg/errors.hpp"
#include "hardneg/losses.hpp"
#include "hardneg/numcore.hpp"
#include "hardneg/sampling.hpp"

namespace hardneg {

namespace {

constexpr double kGradTolerance = 1e-4;

std::string fmt(const char* pattern, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

Tensor random_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    Tensor m({n, d});
    for (double& v : m.data()) v = rng.normal();
    return l2_normalize_rows(m);
}

using BatchLoss = std::function<LossOutput(const Tensor&, const Tensor&)>;

// Worst relative error of the analytic embedding gradient over `instances`.
double embedding_grad_error(const BatchLoss& loss, std::size_t n, std::size_t d,
                            std::size_t instances, Rng& rng) {
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        ParamSet p;
        p.add("a", random_unit_rows(n, d, rng));
        p.add("b", random_unit_rows(n, d, rng));
        const LossOutput out = loss(p.at("a"), p.at("b"));
        ParamSet analytic;
        analytic.add("a", out.grad_z_s);
        analytic.add("b", out.grad_z_i);
        const ParamSet numeric = finite_diff_grad(
            [&](const ParamSet& q) { return loss(q.at("a"), q.at("b")).loss; }, p);
        worst = std::max(worst, max_relative_error(analytic, numeric));
    }
    return worst;
}

double encoder_grad_error(std::size_t instances, Rng& rng) {
    EncoderConfig cfg;
    cfg.input_channels = 3;
    cfg.conv_layers = {{4, 3, 2}, {5, 3, 1}};
    cfg.activation = Activation::tanh;
    cfg.embedding_dim = 6;
    cfg.projection_dim = 4;
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        const ParamSet params = init_encoder_params(cfg, rng);
        std::vector<Tensor> windows;
        for (int k = 0; k < 3; ++k) {
            Tensor w({12, 3});
            for (double& v : w.data()) v = rng.normal();
            windows.push_back(std::move(w));
        }
        const Tensor z_other = random_unit_rows(3, cfg.projection_dim, rng);
        auto project = [&](const ParamSet& q, std::vector<EncoderOutput>* enc,
                           std::vector<ProjectionOutput>* proj) {
            Tensor z({3, cfg.projection_dim});
            for (std::size_t k = 0; k < 3; ++k) {
                EncoderOutput e = encoder_forward(cfg, q, windows[k]);
                ProjectionOutput p = projection_forward(cfg, q, e.h);
                std::copy(p.z.data().begin(), p.z.data().end(), z.row(k).begin());
                if (enc) enc->push_back(std::move(e));
                if (proj) proj->push_back(std::move(p));
            }
            return z;
        };
        std::vector<EncoderOutput> enc;
        std::vector<ProjectionOutput> proj;
        const Tensor z = project(params, &enc, &proj);
        const LossOutput out = info_nce_bidirectional(EmbeddingBatch::make(z, z_other), 0.5);
        ParamSet analytic = params.zeros_like();
        for (std::size_t k = 0; k < 3; ++k) {
            Tensor g({cfg.projection_dim});
            for (std::size_t c = 0; c < cfg.projection_dim; ++c) g[c] = out.grad_z_s(k, c);
            const Tensor gh =
                projection_backward_accumulate(cfg, params, proj[k].cache, g, analytic);
            encoder_backward_accumulate(params, enc[k].cache, gh, analytic, nullptr);
        }
        const ParamSet numeric = finite_diff_grad(
            [&](const ParamSet& q) {
                return info_nce_bidirectional(
                           EmbeddingBatch::unchecked(project(q, nullptr, nullptr), z_other), 0.5)
                    .loss;
            },
            params);
        worst = std::max(worst, max_relative_error(analytic, numeric));
    }
    return worst;
}

CheckResult grad_check(const std::string& name, double err) {
    return {name, err < kGradTolerance, fmt("max relative error %.3g", err)};
}

}  // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed, std::size_t instances) {
    std::vector<CheckResult> results;
    Rng rng(seed);
    auto guarded = [&](const std::string& name, const std::function<CheckResult()>& body) {
        try {
            results.push_back(body());
        } catch (const std::exception& e) {
            results.push_back({name, false, std::string("threw: ") + e.what()});
        }
    };

    guarded("logsumexp large inputs", [] {
        const double v[] = {1000.0, 1000.0};
        const double err = std::abs(stable_logsumexp(v) - (1000.0 + std::log(2.0)));
        return CheckResult{"logsumexp large inputs", err < 1e-12, fmt("error %.3g", err)};
    });

    const std::size_t n = 5;
    const std::size_t d = 4;
    guarded("gradient info_nce", [&] {
        return grad_check("gradient info_nce",
                          embedding_grad_error(
                              [](const Tensor& a, const Tensor& b) {
                                  return info_nce_bidirectional(EmbeddingBatch::unchecked(a, b), 0.5);
                              },
                              n, d, instances, rng));
    });
    guarded("gradient hnl", [&] {
        const HnlParams p(1.0, 0.05, 0.5, n - 1);
        return grad_check("gradient hnl",
                          embedding_grad_error(
                              [&](const Tensor& a, const Tensor& b) {
                                  return hnl_loss_bidirectional(EmbeddingBatch::unchecked(a, b), p);
                              },
                              n, d, instances, rng));
    });
    guarded("gradient debiased", [&] {
        return grad_check("gradient debiased",
                          embedding_grad_error(
                              [](const Tensor& a, const Tensor& b) {
                                  return debiased_loss_bidirectional(EmbeddingBatch::unchecked(a, b),
                                                                     0.05, 0.5);
                              },
                              n, d, instances, rng));
    });
    guarded("gradient nt_xent", [&] {
        const HnlParams p(1.0, 0.05, 0.5, 2 * n - 2);
        const double plain = embedding_grad_error(
            [](const Tensor& a, const Tensor& b) { return nt_xent_two_view(a, b, 0.5); }, n, d,
            instances, rng);
        const double hard = embedding_grad_error(
            [&](const Tensor& a, const Tensor& b) { return nt_xent_two_view(a, b, 0.5, p); }, n, d,
            instances, rng);
        return grad_check("gradient nt_xent", std::max(plain, hard));
    });
    guarded("gradient encoder+projection",
            [&] { return grad_check("gradient encoder+projection", encoder_grad_error(instances, rng)); });

    guarded("hnl(beta=0, tau+=0) equals info_nce", [&] {
        double worst = 0.0;
        for (std::size_t i = 0; i < instances; ++i) {
            const auto batch = EmbeddingBatch::make(random_unit_rows(n, d, rng), random_unit_rows(n, d, rng));
            const double a = hnl_loss_bidirectional(batch, HnlParams(0.0, 0.0, 0.5, n - 1)).loss;
            const double b = info_nce_bidirectional(batch, 0.5).loss;
            worst = std::max(worst, std::abs(a - b));
        }
        return CheckResult{"hnl(beta=0, tau+=0) equals info_nce", worst < 1e-10,
                           fmt("max abs difference %.3g", worst)};
    });
    guarded("debiased is hnl(beta=0) bitwise", [&] {
        bool same = true;
        for (std::size_t i = 0; i < instances; ++i) {
            const auto batch = EmbeddingBatch::make(random_unit_rows(n, d, rng), random_unit_rows(n, d, rng));
            const LossOutput a = debiased_loss_bidirectional(batch, 0.1, 0.5);
            const LossOutput b = hnl_loss_bidirectional(batch, HnlParams(0.0, 0.1, 0.5, n - 1));
            same = same && a.loss == b.loss && a.grad_z_s == b.grad_z_s && a.grad_z_i == b.grad_z_i;
        }
        return CheckResult{"debiased is hnl(beta=0) bitwise", same, same ? "identical" : "differs"};
    });
    guarded("clamp returns N exp(-1/t)", [] {
        const HnlParams p(1.0, 0.9, 0.5, 3);
        const double sims[] = {-1.0, -1.0, -1.0};
        const DeltaTerm t = hnl_delta_term(1.0, sims, p);
        const bool ok = t.clamped && t.value == p.clamp_floor();
        return CheckResult{"clamp returns N exp(-1/t)", ok, fmt("delta %.17g", t.value)};
    });
    guarded("analytic N=3 zero-similarity hnl", [] {
        Tensor zs({3, 6});
        Tensor zi({3, 6});
        for (std::size_t k = 0; k < 3; ++k) {
            zs(k, k) = 1.0;
            zi(k, k + 3) = 1.0;
        }
        const double loss =
            hnl_loss_bidirectional(EmbeddingBatch::make(zs, zi), HnlParams(1.0, 0.037, 0.1, 2)).loss;
        const double err = std::abs(loss - 6.0 * std::log(3.0));
        return CheckResult{"analytic N=3 zero-similarity hnl", err < 1e-9, fmt("error %.3g", err)};
    });
    guarded("analytic N=2 aligned info_nce", [] {
        const Tensor z = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
        const double loss = info_nce_bidirectional(EmbeddingBatch::make(z, z), 1.0).loss;
        const double err = std::abs(loss - 4.0 * std::log1p(std::exp(-1.0)));
        return CheckResult{"analytic N=2 aligned info_nce", err < 1e-9, fmt("error %.3g", err)};
    });
    guarded("sampler frequencies", [&] {
        const std::vector<double> sims{0.9, 0.5, 0.1, -0.3, -0.7, 0.2};
        const std::vector<int> labels{1, 2, 0, 2, 1, 3};
        double worst = 0.0;
        for (double beta : {0.0, 1.0, 4.0}) {
            const HardnessWeights w = true_negative_weights(sims, labels, 0, beta);
            std::vector<double> counts(sims.size(), 0.0);
            const int draws = 20000;
            for (int k = 0; k < draws; ++k) counts[sample_qbeta(sims, labels, 0, beta, rng)] += 1.0;
            double tv = 0.0;
            for (std::size_t j = 0; j < sims.size(); ++j) tv += std::abs(counts[j] / draws - w.weights[j]);
            worst = std::max(worst, 0.5 * tv);
        }
        return CheckResult{"sampler frequencies", worst < 0.03, fmt("max TV distance %.3g", worst)};
    });
    return results;
}

}  // namespace hardneg
