#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hardneg/rng.hpp"
#include "hardneg/tensor.hpp"

namespace hardneg {

enum class Activation { identity, relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct ConvLayerSpec {
    std::size_t out_channels = 16;
    std::size_t kernel_size = 3;
    std::size_t stride = 1;

    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// 1D convolution stack -> global mean pool over time -> dense layer to the
/// representation h, plus a two-layer projection head h -> z.
struct EncoderConfig {
    std::size_t input_channels = 1;
    std::vector<ConvLayerSpec> conv_layers{{16, 5, 1}};
    Activation activation = Activation::relu;
    // Per-sample normalization over each conv layer's (time x channel) map,
    // followed by a per-channel gain and shift.
    bool layer_norm = true;
    std::size_t embedding_dim = 32;
    std::size_t projection_dim = 16;

    void validate() const;
    /// Shortest window the conv stack accepts.
    std::size_t min_input_length() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Expected parameter names and shapes, in iteration order.
ParamSet encoder_param_layout(const EncoderConfig& config);

/// Fan-in scaled uniform weights, zero biases, unit norm gains.
ParamSet init_encoder_params(const EncoderConfig& config, Rng& rng);

/// Throws ShapeError unless `params` has exactly the layout of `config`.
void validate_params(const EncoderConfig& config, const ParamSet& params);

/// Intermediate activations of one encoder_forward call.
struct EncoderCache {
    EncoderConfig config;
    std::vector<Tensor> layer_inputs;   // [len_i x channels_i], first is the window
    std::vector<Tensor> normalized;     // layer-norm output before gain/shift
    std::vector<double> inv_std;        // per layer
    std::vector<Tensor> pre_activation; // value fed to the nonlinearity
    Tensor conv_output;                 // last activated map
    Tensor pooled;                      // [channels_last]
};

struct EncoderOutput {
    Tensor h;  // [embedding_dim]
    EncoderCache cache;
};

EncoderOutput encoder_forward(const EncoderConfig& config, const ParamSet& params,
                              const Tensor& window);

/// Accumulates d/dparams into `grads` (same layout as `params`) and, when
/// `grad_input` is non-null, writes d/dwindow into it.
void encoder_backward_accumulate(const ParamSet& params, const EncoderCache& cache,
                                 const Tensor& grad_h, ParamSet& grads, Tensor* grad_input);

struct EncoderGradients {
    ParamSet params;  // full layout; projection-head entries stay zero
    Tensor input;
};

EncoderGradients encoder_backward(const ParamSet& params, const EncoderCache& cache,
                                  const Tensor& grad_h);

struct ProjectionCache {
    Tensor h;
    Tensor hidden_pre;  // W0 h + b0
    Tensor hidden;      // activation(hidden_pre)
    Tensor z_raw;       // W1 hidden + b1
    Tensor z;
};

struct ProjectionOutput {
    Tensor z;  // [projection_dim], unit norm
    ProjectionCache cache;
};

ProjectionOutput projection_forward(const EncoderConfig& config, const ParamSet& params,
                                    const Tensor& h);

/// Accumulates head gradients into `grads` and returns d/dh.
Tensor projection_backward_accumulate(const EncoderConfig& config, const ParamSet& params,
                                      const ProjectionCache& cache, const Tensor& grad_z,
                                      ParamSet& grads);

/// Flat checkpoint: 8-byte magic "HNGCKPT1", u64 little-endian header length,
/// UTF-8 JSON header {config, tensors: [{name, shape, offset, count}]}, then
/// little-endian float64 payloads at the listed byte offsets (relative to the
/// payload start).
void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                     const ParamSet& params);

struct Checkpoint {
    EncoderConfig config;
    ParamSet params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hardneg
