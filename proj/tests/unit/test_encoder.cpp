#include <cmath>
#include <fstream>

#include "doctest.h"
#include "hardneg/config.hpp"
#include "hardneg/encoder.hpp"
#include "hardneg/errors.hpp"
#include "hardneg/losses.hpp"
#include "helpers.hpp"

using namespace hardneg;

namespace {

double act(Activation a, double x) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
    }
    return x;
}

// Element-by-element forward pass written directly from the architecture
// description: valid strided conv, layer norm over the whole map, gain and
// shift, activation, mean over time, dense layer; then the projection head.
std::vector<double> naive_encoder(const EncoderConfig& cfg, const ParamSet& p, const Tensor& window) {
    std::vector<std::vector<double>> x(window.rows(), std::vector<double>(window.cols()));
    for (std::size_t t = 0; t < window.rows(); ++t) {
        for (std::size_t c = 0; c < window.cols(); ++c) x[t][c] = window(t, c);
    }
    for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
        const auto& L = cfg.conv_layers[i];
        const Tensor& w = p.at("conv" + std::to_string(i) + ".weight");
        const Tensor& b = p.at("conv" + std::to_string(i) + ".bias");
        const std::size_t in = x[0].size();
        const std::size_t len = (x.size() - L.kernel_size) / L.stride + 1;
        std::vector<std::vector<double>> y(len, std::vector<double>(L.out_channels));
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t o = 0; o < L.out_channels; ++o) {
                double s = b[o];
                for (std::size_t c = 0; c < in; ++c) {
                    for (std::size_t j = 0; j < L.kernel_size; ++j) {
                        s += w[(o * in + c) * L.kernel_size + j] * x[t * L.stride + j][c];
                    }
                }
                y[t][o] = s;
            }
        }
        if (cfg.layer_norm) {
            double mean = 0.0, count = 0.0;
            for (auto& row : y) for (double v : row) { mean += v; count += 1.0; }
            mean /= count;
            double var = 0.0;
            for (auto& row : y) for (double v : row) var += (v - mean) * (v - mean);
            var /= count;
            const Tensor& g = p.at("norm" + std::to_string(i) + ".gain");
            const Tensor& sh = p.at("norm" + std::to_string(i) + ".shift");
            for (auto& row : y) {
                for (std::size_t o = 0; o < row.size(); ++o) {
                    row[o] = g[o] * (row[o] - mean) / std::sqrt(var + 1e-5) + sh[o];
                }
            }
        }
        for (auto& row : y) for (double& v : row) v = act(cfg.activation, v);
        x = y;
    }
    std::vector<double> pooled(x[0].size(), 0.0);
    for (auto& row : x) for (std::size_t c = 0; c < row.size(); ++c) pooled[c] += row[c] / x.size();
    const Tensor& we = p.at("embed.weight");
    const Tensor& be = p.at("embed.bias");
    std::vector<double> h(cfg.embedding_dim);
    for (std::size_t e = 0; e < h.size(); ++e) {
        h[e] = be[e];
        for (std::size_t c = 0; c < pooled.size(); ++c) h[e] += we[e * pooled.size() + c] * pooled[c];
    }
    return h;
}

std::vector<double> naive_projection(const EncoderConfig& cfg, const ParamSet& p, const std::vector<double>& h) {
    const std::size_t e = cfg.embedding_dim;
    std::vector<double> hidden(e);
    for (std::size_t r = 0; r < e; ++r) {
        double s = p.at("proj0.bias")[r];
        for (std::size_t c = 0; c < e; ++c) s += p.at("proj0.weight")[r * e + c] * h[c];
        hidden[r] = act(cfg.activation, s);
    }
    std::vector<double> z(cfg.projection_dim);
    double norm = 0.0;
    for (std::size_t r = 0; r < z.size(); ++r) {
        double s = p.at("proj1.bias")[r];
        for (std::size_t c = 0; c < e; ++c) s += p.at("proj1.weight")[r * e + c] * hidden[c];
        z[r] = s;
        norm += s * s;
    }
    for (double& v : z) v /= std::sqrt(norm);
    return z;
}

EncoderConfig random_config(Rng& rng) {
    EncoderConfig cfg;
    cfg.input_channels = 1 + rng.uniform_index(4);
    cfg.conv_layers.clear();
    const std::size_t layers = 1 + rng.uniform_index(2);
    for (std::size_t i = 0; i < layers; ++i) {
        cfg.conv_layers.push_back({2 + rng.uniform_index(4), 1 + rng.uniform_index(4), 1 + rng.uniform_index(2)});
    }
    cfg.activation = static_cast<Activation>(rng.uniform_index(3));
    cfg.layer_norm = rng.uniform() < 0.7;
    cfg.embedding_dim = 2 + rng.uniform_index(6);
    cfg.projection_dim = 2 + rng.uniform_index(5);
    return cfg;
}

Tensor random_window(const EncoderConfig& cfg, Rng& rng) {
    return testing::random_matrix(cfg.min_input_length() + rng.uniform_index(8), cfg.input_channels, rng);
}

}  // namespace

TEST_CASE("zero parameters give a zero representation") {
    EncoderConfig cfg;
    cfg.input_channels = 3;
    ParamSet p = encoder_param_layout(cfg);
    Rng rng(1);
    const EncoderOutput out = encoder_forward(cfg, p, testing::random_matrix(10, 3, rng));
    for (double v : out.h.data()) CHECK(v == 0.0);
}

TEST_CASE("unit 1x1 conv propagates a constant input") {
    EncoderConfig cfg;
    cfg.input_channels = 1;
    cfg.conv_layers = {{1, 1, 1}};
    cfg.activation = Activation::identity;
    cfg.layer_norm = false;
    cfg.embedding_dim = 1;
    ParamSet p = encoder_param_layout(cfg);
    p.at("conv0.weight")[0] = 1.0;
    p.at("embed.weight")[0] = 1.0;
    const EncoderOutput out = encoder_forward(cfg, p, Tensor({7, 1}, 2.5));
    CHECK(out.cache.pooled[0] == 2.5);
    CHECK(out.h[0] == 2.5);
}

TEST_CASE("forward matches the naive oracle") {
    Rng rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        const EncoderConfig cfg = random_config(rng);
        const ParamSet p = init_encoder_params(cfg, rng);
        const Tensor window = random_window(cfg, rng);
        const EncoderOutput out = encoder_forward(cfg, p, window);
        const auto h = naive_encoder(cfg, p, window);
        REQUIRE(out.h.size() == cfg.embedding_dim);
        for (std::size_t e = 0; e < h.size(); ++e) CHECK(std::abs(out.h[e] - h[e]) < 1e-10);

        const ProjectionOutput proj = projection_forward(cfg, p, out.h);
        const auto z = naive_projection(cfg, p, h);
        double norm = 0.0;
        for (std::size_t r = 0; r < z.size(); ++r) {
            CHECK(std::abs(proj.z[r] - z[r]) < 1e-10);
            norm += proj.z[r] * proj.z[r];
        }
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-10);

        const EncoderOutput again = encoder_forward(cfg, p, window);
        CHECK(again.h == out.h);
    }
}

TEST_CASE("h size does not depend on window length") {
    EncoderConfig cfg;
    cfg.input_channels = 2;
    Rng rng(4);
    const ParamSet p = init_encoder_params(cfg, rng);
    for (std::size_t len : {5, 9, 40}) {
        CHECK(encoder_forward(cfg, p, testing::random_matrix(len, 2, rng)).h.size() == cfg.embedding_dim);
    }
}

TEST_CASE("scaling the last projection layer leaves z unchanged") {
    EncoderConfig cfg;
    cfg.input_channels = 2;
    Rng rng(6);
    ParamSet p = init_encoder_params(cfg, rng);
    const Tensor h = encoder_forward(cfg, p, testing::random_matrix(12, 2, rng)).h;
    const Tensor z = projection_forward(cfg, p, h).z;
    p.at("proj1.weight") *= 10.0;
    p.at("proj1.bias") *= 10.0;
    const Tensor z10 = projection_forward(cfg, p, h).z;
    for (std::size_t r = 0; r < z.size(); ++r) CHECK(std::abs(z[r] - z10[r]) < 1e-12);
}

TEST_CASE("degenerate projection raises") {
    EncoderConfig cfg;
    cfg.input_channels = 1;
    const ParamSet p = encoder_param_layout(cfg);
    CHECK_THROWS_AS(projection_forward(cfg, p, Tensor({cfg.embedding_dim})), DegenerateEmbeddingError);
}

TEST_CASE("short windows and bad shapes are rejected") {
    EncoderConfig cfg;
    cfg.input_channels = 2;
    cfg.conv_layers = {{4, 5, 2}, {4, 3, 1}};
    CHECK(cfg.min_input_length() == 9);
    Rng rng(2);
    const ParamSet p = init_encoder_params(cfg, rng);
    try {
        (void)encoder_forward(cfg, p, Tensor({8, 2}));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("9") != std::string::npos);
    }
    CHECK_NOTHROW(encoder_forward(cfg, p, Tensor({9, 2})));
    CHECK_THROWS_AS(encoder_forward(cfg, p, Tensor({9, 3})), ShapeError);

    ParamSet wrong = p;
    wrong.at("conv1.weight") = Tensor({4, 4, 2});
    CHECK_THROWS_AS(encoder_forward(cfg, wrong, Tensor({9, 2})), ShapeError);
    CHECK_THROWS_AS(validate_params(cfg, wrong), ShapeError);

    EncoderConfig bad = cfg;
    bad.conv_layers.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("backward: zero upstream gradient and linearity") {
    Rng rng(33);
    const EncoderConfig cfg = random_config(rng);
    const ParamSet p = init_encoder_params(cfg, rng);
    const EncoderOutput out = encoder_forward(cfg, p, random_window(cfg, rng));
    const EncoderGradients zero = encoder_backward(p, out.cache, Tensor({cfg.embedding_dim}));
    for (const auto& [name, t] : zero.params) {
        for (double v : t.data()) CHECK(v == 0.0);
    }
    const Tensor g = testing::random_matrix(1, cfg.embedding_dim, rng);
    Tensor g1({cfg.embedding_dim}, g.data());
    Tensor g2 = g1;
    g2 *= 2.0;
    const EncoderGradients a = encoder_backward(p, out.cache, g1);
    const EncoderGradients b = encoder_backward(p, out.cache, g2);
    const auto fa = a.params.flatten();
    const auto fb = b.params.flatten();
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(std::abs(fb[i] - 2.0 * fa[i]) < 1e-12 * std::max(1.0, std::abs(fb[i])));
    for (std::size_t i = 0; i < a.input.size(); ++i) CHECK(std::abs(b.input[i] - 2.0 * a.input[i]) < 1e-12);

    CHECK_THROWS_AS(encoder_backward(p, out.cache, Tensor({cfg.embedding_dim + 1})), ShapeError);
}

TEST_CASE("encoder+projection composition matches finite differences") {
    Rng rng(2024);
    int done = 0;
    for (int trial = 0; trial < 40 && done < 20; ++trial) {
        EncoderConfig cfg = random_config(rng);
        // ReLU kinks make central differences unreliable; tanh and identity
        // cover the same code paths smoothly. ReLU is checked separately.
        if (cfg.activation == Activation::relu) cfg.activation = Activation::tanh;
        const ParamSet params = init_encoder_params(cfg, rng);
        const std::size_t n = 3;
        std::vector<Tensor> windows;
        for (std::size_t k = 0; k < n; ++k) windows.push_back(random_window(cfg, rng));
        const Tensor other = testing::random_unit(n, cfg.projection_dim, rng);

        auto loss_of = [&](const ParamSet& q, ParamSet* grads, std::vector<Tensor>* grad_windows) {
            Tensor z({n, cfg.projection_dim});
            std::vector<EncoderOutput> enc;
            std::vector<ProjectionOutput> proj;
            for (std::size_t k = 0; k < n; ++k) {
                enc.push_back(encoder_forward(cfg, q, windows[k]));
                proj.push_back(projection_forward(cfg, q, enc.back().h));
                std::copy(proj.back().z.data().begin(), proj.back().z.data().end(), z.row(k).begin());
            }
            const LossOutput out = hnl_loss_bidirectional(EmbeddingBatch::unchecked(z, other),
                                                          HnlParams(1.0, 0.0, 0.5, n - 1));
            if (grads) {
                for (std::size_t k = 0; k < n; ++k) {
                    Tensor g({cfg.projection_dim});
                    for (std::size_t c = 0; c < cfg.projection_dim; ++c) g[c] = out.grad_z_s(k, c);
                    const Tensor gh = projection_backward_accumulate(cfg, q, proj[k].cache, g, *grads);
                    Tensor gx;
                    encoder_backward_accumulate(q, enc[k].cache, gh, *grads, &gx);
                    grad_windows->push_back(gx);
                }
            }
            return out.loss;
        };

        ParamSet analytic = params.zeros_like();
        std::vector<Tensor> grad_windows;
        loss_of(params, &analytic, &grad_windows);
        const ParamSet numeric =
            finite_diff_grad([&](const ParamSet& q) { return loss_of(q, nullptr, nullptr); }, params);
        CHECK(max_relative_error(analytic, numeric, 1e-6) < 1e-4);

        // Input gradient of the first window.
        ParamSet win;
        win.add("x", windows[0]);
        const ParamSet numeric_x = finite_diff_grad(
            [&](const ParamSet& q) {
                const Tensor saved = windows[0];
                windows[0] = q.at("x");
                const double v = loss_of(params, nullptr, nullptr);
                windows[0] = saved;
                return v;
            },
            win);
        ParamSet analytic_x;
        analytic_x.add("x", grad_windows[0]);
        CHECK(max_relative_error(analytic_x, numeric_x, 1e-6) < 1e-4);
        ++done;
    }
    CHECK(done == 20);
}

TEST_CASE("relu encoder gradient away from kinks") {
    Rng rng(88);
    EncoderConfig cfg;
    cfg.input_channels = 3;
    cfg.conv_layers = {{4, 3, 1}};
    cfg.embedding_dim = 5;
    cfg.projection_dim = 3;
    for (int trial = 0; trial < 10; ++trial) {
        const ParamSet params = init_encoder_params(cfg, rng);
        const Tensor window = testing::random_matrix(8, 3, rng);
        const Tensor dir = testing::random_unit(1, 3, rng);
        auto f = [&](const ParamSet& q) {
            const Tensor z = projection_forward(cfg, q, encoder_forward(cfg, q, window).h).z;
            return dot(z.data(), dir.data());
        };
        const EncoderOutput enc = encoder_forward(cfg, params, window);
        const ProjectionOutput proj = projection_forward(cfg, params, enc.h);
        // Skip draws with a pre-activation within FD reach of a kink.
        bool near_kink = false;
        for (const auto& pre : enc.cache.pre_activation) {
            for (double v : pre.data()) near_kink = near_kink || std::abs(v) < 1e-3;
        }
        for (double v : proj.cache.hidden_pre.data()) near_kink = near_kink || std::abs(v) < 1e-3;
        if (near_kink) continue;
        ParamSet analytic = params.zeros_like();
        const Tensor gh = projection_backward_accumulate(cfg, params, proj.cache,
                                                         Tensor({3}, dir.data()), analytic);
        encoder_backward_accumulate(params, enc.cache, gh, analytic, nullptr);
        CHECK(max_relative_error(analytic, finite_diff_grad(f, params)) < 1e-4);
    }
}

TEST_CASE("checkpoint round trip is bitwise") {
    const auto dir = testing::scratch_dir("ckpt");
    Rng rng(5);
    EncoderConfig cfg;
    cfg.input_channels = 4;
    cfg.conv_layers = {{6, 3, 2}, {5, 2, 1}};
    cfg.activation = Activation::tanh;
    const ParamSet p = init_encoder_params(cfg, rng);
    save_checkpoint(dir / "m.ckpt", cfg, p);
    const Checkpoint ck = load_checkpoint(dir / "m.ckpt");
    CHECK(ck.config == cfg);
    CHECK(ck.params == p);
    CHECK(ck.params.names() == p.names());
}

TEST_CASE("checkpoint errors") {
    const auto dir = testing::scratch_dir("ckpt_err");
    Rng rng(5);
    EncoderConfig cfg;
    cfg.input_channels = 2;
    const ParamSet p = init_encoder_params(cfg, rng);
    save_checkpoint(dir / "m.ckpt", cfg, p);

    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    {
        std::ofstream out(dir / "short.ckpt", std::ios::binary);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size() - 1));
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), TruncatedPayloadError);

    std::string bad_magic = blob;
    bad_magic[0] = 'X';
    {
        std::ofstream out(dir / "magic.ckpt", std::ios::binary);
        out.write(bad_magic.data(), static_cast<std::streamsize>(bad_magic.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), MalformedHeaderError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);

    ParamSet wrong = p;
    wrong.at("embed.bias") = Tensor({3});
    CHECK_THROWS_AS(save_checkpoint(dir / "w.ckpt", cfg, wrong), ShapeError);
}
