#include "hardneg/encoder.hpp"

#include <cmath>

#include "hardneg/errors.hpp"
#include "hardneg/numcore.hpp"

namespace hardneg {

namespace {

constexpr double kLayerNormEpsilon = 1e-5;

double activate(Activation a, double x) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
    }
    return x;
}

// Derivative expressed through the pre-activation value.
double activate_grad(Activation a, double x) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double y = std::tanh(x);
            return 1.0 - y * y;
        }
    }
    return 1.0;
}

std::string layer_name(const char* kind, std::size_t i, const char* field) {
    return std::string(kind) + std::to_string(i) + "." + field;
}

std::size_t conv_output_length(std::size_t len, const ConvLayerSpec& layer) {
    return (len - layer.kernel_size) / layer.stride + 1;
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "' (expected identity, relu or tanh)");
}

void EncoderConfig::validate() const {
    if (input_channels < 1) throw ConfigError("encoder input_channels must be >= 1");
    if (conv_layers.empty()) throw ConfigError("encoder needs at least one conv layer");
    for (const auto& layer : conv_layers) {
        if (layer.out_channels < 1 || layer.kernel_size < 1 || layer.stride < 1) {
            throw ConfigError("conv layer extents must all be >= 1");
        }
    }
    if (embedding_dim < 1 || projection_dim < 1) {
        throw ConfigError("embedding_dim and projection_dim must be >= 1");
    }
}

std::size_t EncoderConfig::min_input_length() const {
    std::size_t needed = 1;
    for (auto it = conv_layers.rbegin(); it != conv_layers.rend(); ++it) {
        needed = (needed - 1) * it->stride + it->kernel_size;
    }
    return needed;
}

ParamSet encoder_param_layout(const EncoderConfig& config) {
    config.validate();
    ParamSet layout;
    std::size_t in = config.input_channels;
    for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
        const auto& layer = config.conv_layers[i];
        layout.add(layer_name("conv", i, "weight"),
                   Tensor({layer.out_channels, in, layer.kernel_size}));
        layout.add(layer_name("conv", i, "bias"), Tensor({layer.out_channels}));
        if (config.layer_norm) {
            layout.add(layer_name("norm", i, "gain"), Tensor({layer.out_channels}));
            layout.add(layer_name("norm", i, "shift"), Tensor({layer.out_channels}));
        }
        in = layer.out_channels;
    }
    layout.add("embed.weight", Tensor({config.embedding_dim, in}));
    layout.add("embed.bias", Tensor({config.embedding_dim}));
    layout.add("proj0.weight", Tensor({config.embedding_dim, config.embedding_dim}));
    layout.add("proj0.bias", Tensor({config.embedding_dim}));
    layout.add("proj1.weight", Tensor({config.projection_dim, config.embedding_dim}));
    layout.add("proj1.bias", Tensor({config.projection_dim}));
    return layout;
}

ParamSet init_encoder_params(const EncoderConfig& config, Rng& rng) {
    ParamSet params = encoder_param_layout(config);
    for (auto& [name, tensor] : params) {
        if (name.ends_with(".gain")) {
            for (double& v : tensor.data()) v = 1.0;
        } else if (name.ends_with(".weight")) {
            std::size_t fan_in = 1;
            for (std::size_t a = 1; a < tensor.rank(); ++a) fan_in *= tensor.dim(a);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : tensor.data()) v = rng.uniform(-bound, bound);
        }
    }
    return params;
}

void validate_params(const EncoderConfig& config, const ParamSet& params) {
    const ParamSet layout = encoder_param_layout(config);
    if (!layout.same_layout(params)) {
        std::string detail;
        for (const auto& [name, tensor] : layout) {
            if (!params.contains(name)) {
                detail = "missing '" + name + "'";
                break;
            }
            if (!params.at(name).same_shape(tensor)) {
                detail = "'" + name + "' has shape " + shape_string(params.at(name).shape()) +
                         ", expected " + shape_string(tensor.shape());
                break;
            }
        }
        if (detail.empty()) detail = "parameter names or order differ";
        throw ShapeError("parameters do not match encoder config: " + detail);
    }
}

EncoderOutput encoder_forward(const EncoderConfig& config, const ParamSet& params,
                              const Tensor& window) {
    if (window.rank() != 2 || window.cols() != config.input_channels) {
        throw ShapeError("encoder expects a [time x " + std::to_string(config.input_channels) +
                         "] window, got " + shape_string(window.shape()));
    }
    const std::size_t min_len = config.min_input_length();
    if (window.rows() < min_len) {
        throw ShapeError("window of length " + std::to_string(window.rows()) +
                         " is shorter than the encoder minimum of " + std::to_string(min_len));
    }

    EncoderOutput out;
    EncoderCache& cache = out.cache;
    cache.config = config;
    Tensor current = window;

    for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
        const auto& layer = config.conv_layers[i];
        const Tensor& w = params.at(layer_name("conv", i, "weight"));
        const Tensor& b = params.at(layer_name("conv", i, "bias"));
        const std::size_t in_ch = current.cols();
        const std::size_t len = conv_output_length(current.rows(), layer);
        const std::size_t k = layer.kernel_size;
        if (w.shape() != std::vector<std::size_t>{layer.out_channels, in_ch, k}) {
            throw ShapeError("conv" + std::to_string(i) + " weight " + shape_string(w.shape()) +
                             " does not match the encoder config");
        }

        Tensor conv({len, layer.out_channels});
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t start = t * layer.stride;
            for (std::size_t o = 0; o < layer.out_channels; ++o) {
                double acc = b[o];
                const double* wo = &w.data()[o * in_ch * k];
                for (std::size_t c = 0; c < in_ch; ++c) {
                    for (std::size_t j = 0; j < k; ++j) acc += wo[c * k + j] * current(start + j, c);
                }
                conv(t, o) = acc;
            }
        }

        Tensor pre = conv;
        double inv_std = 1.0;
        Tensor normalized;
        if (config.layer_norm) {
            const Tensor& gain = params.at(layer_name("norm", i, "gain"));
            const Tensor& shift = params.at(layer_name("norm", i, "shift"));
            const double count = static_cast<double>(conv.size());
            double mean = 0.0;
            for (double v : conv.data()) mean += v;
            mean /= count;
            double var = 0.0;
            for (double v : conv.data()) var += (v - mean) * (v - mean);
            var /= count;
            inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
            normalized = Tensor(conv.shape());
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t o = 0; o < layer.out_channels; ++o) {
                    normalized(t, o) = (conv(t, o) - mean) * inv_std;
                    pre(t, o) = gain[o] * normalized(t, o) + shift[o];
                }
            }
        }

        Tensor activated(pre.shape());
        for (std::size_t n = 0; n < pre.size(); ++n) activated[n] = activate(config.activation, pre[n]);

        cache.layer_inputs.push_back(std::move(current));
        cache.normalized.push_back(std::move(normalized));
        cache.inv_std.push_back(inv_std);
        cache.pre_activation.push_back(std::move(pre));
        current = std::move(activated);
    }

    const std::size_t channels = current.cols();
    Tensor pooled({channels});
    for (std::size_t t = 0; t < current.rows(); ++t) {
        for (std::size_t c = 0; c < channels; ++c) pooled[c] += current(t, c);
    }
    pooled *= 1.0 / static_cast<double>(current.rows());

    const Tensor& we = params.at("embed.weight");
    const Tensor& be = params.at("embed.bias");
    if (we.shape() != std::vector<std::size_t>{config.embedding_dim, channels} ||
        be.size() != config.embedding_dim) {
        throw ShapeError("embed layer shape " + shape_string(we.shape()) +
                         " does not match the encoder config");
    }
    out.h = Tensor({config.embedding_dim});
    for (std::size_t e = 0; e < config.embedding_dim; ++e) {
        out.h[e] = be[e] + dot(we.row(e), pooled.data());
    }
    cache.conv_output = std::move(current);
    cache.pooled = std::move(pooled);
    return out;
}

void encoder_backward_accumulate(const ParamSet& params, const EncoderCache& cache,
                                 const Tensor& grad_h, ParamSet& grads, Tensor* grad_input) {
    const EncoderConfig& config = cache.config;
    if (grad_h.size() != config.embedding_dim) {
        throw ShapeError("grad_h has " + std::to_string(grad_h.size()) + " entries, expected " +
                         std::to_string(config.embedding_dim));
    }
    if (cache.layer_inputs.size() != config.conv_layers.size()) {
        throw ShapeError("encoder cache does not match its config");
    }
    if (!grads.same_layout(params)) throw ShapeError("gradient accumulator layout mismatch");

    const Tensor& we = params.at("embed.weight");
    Tensor& gwe = grads.at("embed.weight");
    Tensor& gbe = grads.at("embed.bias");
    const std::size_t channels = cache.pooled.size();
    Tensor grad_pooled({channels});
    for (std::size_t e = 0; e < config.embedding_dim; ++e) {
        gbe[e] += grad_h[e];
        for (std::size_t c = 0; c < channels; ++c) {
            gwe(e, c) += grad_h[e] * cache.pooled[c];
            grad_pooled[c] += we(e, c) * grad_h[e];
        }
    }

    const std::size_t last_len = cache.conv_output.rows();
    Tensor grad_act({last_len, channels});
    for (std::size_t t = 0; t < last_len; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
            grad_act(t, c) = grad_pooled[c] / static_cast<double>(last_len);
        }
    }

    for (std::size_t li = config.conv_layers.size(); li-- > 0;) {
        const auto& layer = config.conv_layers[li];
        const Tensor& pre = cache.pre_activation[li];
        const Tensor& input = cache.layer_inputs[li];
        const std::size_t len = pre.rows();
        const std::size_t out_ch = layer.out_channels;

        Tensor grad_pre(pre.shape());
        for (std::size_t n = 0; n < pre.size(); ++n) {
            grad_pre[n] = grad_act[n] * activate_grad(config.activation, pre[n]);
        }

        Tensor grad_conv = grad_pre;
        if (config.layer_norm) {
            const Tensor& gain = params.at(layer_name("norm", li, "gain"));
            Tensor& ggain = grads.at(layer_name("norm", li, "gain"));
            Tensor& gshift = grads.at(layer_name("norm", li, "shift"));
            const Tensor& xhat = cache.normalized[li];
            Tensor grad_xhat(pre.shape());
            double mean_g = 0.0;
            double mean_gx = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t o = 0; o < out_ch; ++o) {
                    ggain[o] += grad_pre(t, o) * xhat(t, o);
                    gshift[o] += grad_pre(t, o);
                    grad_xhat(t, o) = grad_pre(t, o) * gain[o];
                    mean_g += grad_xhat(t, o);
                    mean_gx += grad_xhat(t, o) * xhat(t, o);
                }
            }
            const double count = static_cast<double>(pre.size());
            mean_g /= count;
            mean_gx /= count;
            for (std::size_t n = 0; n < pre.size(); ++n) {
                grad_conv[n] = cache.inv_std[li] * (grad_xhat[n] - mean_g - xhat[n] * mean_gx);
            }
        }

        const Tensor& w = params.at(layer_name("conv", li, "weight"));
        Tensor& gw = grads.at(layer_name("conv", li, "weight"));
        Tensor& gb = grads.at(layer_name("conv", li, "bias"));
        const std::size_t in_ch = input.cols();
        const std::size_t k = layer.kernel_size;
        if (w.shape() != std::vector<std::size_t>{out_ch, in_ch, k}) {
            throw ShapeError("conv" + std::to_string(li) + " weight " + shape_string(w.shape()) +
                             " does not match the cached forward pass");
        }
        const bool need_input_grad = li > 0 || grad_input != nullptr;
        Tensor grad_in;
        if (need_input_grad) grad_in = Tensor(input.shape());

        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t start = t * layer.stride;
            for (std::size_t o = 0; o < out_ch; ++o) {
                const double g = grad_conv(t, o);
                if (g == 0.0) continue;
                gb[o] += g;
                double* gwo = &gw.data()[o * in_ch * k];
                const double* wo = &w.data()[o * in_ch * k];
                for (std::size_t c = 0; c < in_ch; ++c) {
                    for (std::size_t j = 0; j < k; ++j) {
                        gwo[c * k + j] += g * input(start + j, c);
                        if (need_input_grad) grad_in(start + j, c) += g * wo[c * k + j];
                    }
                }
            }
        }
        if (li == 0) {
            if (grad_input) *grad_input = std::move(grad_in);
        } else {
            grad_act = std::move(grad_in);
        }
    }
}

EncoderGradients encoder_backward(const ParamSet& params, const EncoderCache& cache,
                                  const Tensor& grad_h) {
    EncoderGradients out;
    out.params = params.zeros_like();
    encoder_backward_accumulate(params, cache, grad_h, out.params, &out.input);
    return out;
}

ProjectionOutput projection_forward(const EncoderConfig& config, const ParamSet& params,
                                    const Tensor& h) {
    if (h.size() != config.embedding_dim) {
        throw ShapeError("projection expects h of size " + std::to_string(config.embedding_dim) +
                         ", got " + std::to_string(h.size()));
    }
    const Tensor& w0 = params.at("proj0.weight");
    const Tensor& b0 = params.at("proj0.bias");
    const Tensor& w1 = params.at("proj1.weight");
    const Tensor& b1 = params.at("proj1.bias");
    const std::size_t e = config.embedding_dim;
    if (w0.shape() != std::vector<std::size_t>{e, e} || b0.size() != e ||
        w1.shape() != std::vector<std::size_t>{config.projection_dim, e} ||
        b1.size() != config.projection_dim) {
        throw ShapeError("projection head parameters do not match the encoder config");
    }

    ProjectionOutput out;
    ProjectionCache& cache = out.cache;
    cache.h = Tensor({config.embedding_dim}, h.data());
    cache.hidden_pre = Tensor({config.embedding_dim});
    cache.hidden = Tensor({config.embedding_dim});
    for (std::size_t r = 0; r < config.embedding_dim; ++r) {
        cache.hidden_pre[r] = b0[r] + dot(w0.row(r), h.data());
        cache.hidden[r] = activate(config.activation, cache.hidden_pre[r]);
    }
    cache.z_raw = Tensor({1, config.projection_dim});
    for (std::size_t r = 0; r < config.projection_dim; ++r) {
        cache.z_raw[r] = b1[r] + dot(w1.row(r), cache.hidden.data());
    }
    cache.z = l2_normalize_rows(cache.z_raw);
    out.z = Tensor({config.projection_dim}, cache.z.data());
    return out;
}

Tensor projection_backward_accumulate(const EncoderConfig& config, const ParamSet& params,
                                      const ProjectionCache& cache, const Tensor& grad_z,
                                      ParamSet& grads) {
    if (grad_z.size() != config.projection_dim) {
        throw ShapeError("grad_z has " + std::to_string(grad_z.size()) + " entries, expected " +
                         std::to_string(config.projection_dim));
    }
    const Tensor grad_raw = l2_normalize_rows_backward(
        cache.z_raw, cache.z, Tensor({1, config.projection_dim}, grad_z.data()));

    const Tensor& w0 = params.at("proj0.weight");
    const Tensor& w1 = params.at("proj1.weight");
    Tensor& gw0 = grads.at("proj0.weight");
    Tensor& gb0 = grads.at("proj0.bias");
    Tensor& gw1 = grads.at("proj1.weight");
    Tensor& gb1 = grads.at("proj1.bias");

    const std::size_t e = config.embedding_dim;
    Tensor grad_hidden({e});
    for (std::size_t r = 0; r < config.projection_dim; ++r) {
        gb1[r] += grad_raw[r];
        for (std::size_t c = 0; c < e; ++c) {
            gw1(r, c) += grad_raw[r] * cache.hidden[c];
            grad_hidden[c] += w1(r, c) * grad_raw[r];
        }
    }
    Tensor grad_h({e});
    for (std::size_t r = 0; r < e; ++r) {
        const double g = grad_hidden[r] * activate_grad(config.activation, cache.hidden_pre[r]);
        gb0[r] += g;
        for (std::size_t c = 0; c < e; ++c) {
            gw0(r, c) += g * cache.h[c];
            grad_h[c] += w0(r, c) * g;
        }
    }
    return grad_h;
}

}  // namespace hardneg
