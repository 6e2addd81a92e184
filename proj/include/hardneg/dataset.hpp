#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hardneg/rng.hpp"
#include "hardneg/tensor.hpp"

namespace hardneg {

/// One modality's windows, stored as float32 in [window, time, channel]
/// order, exactly as on disk.
struct ModalityData {
    std::string name;
    std::size_t time = 0;
    std::size_t channels = 0;
    double sampling_rate_hz = 0.0;
    std::vector<float> values;

    std::size_t num_windows() const {
        return time != 0 && channels != 0 ? values.size() / (time * channels) : 0;
    }
    /// Window `i` widened to double, [time x channels].
    Tensor window(std::size_t i) const;

    friend bool operator==(const ModalityData&, const ModalityData&) = default;
};

/// Index-aligned multimodal windows with labels and subject/session ids.
struct CanonicalDataset {
    std::vector<ModalityData> modalities;
    std::vector<int> labels;
    std::vector<int> subject_ids;
    std::vector<int> session_ids;
    std::vector<std::string> class_names;

    std::size_t num_windows() const { return labels.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    bool has_modality(const std::string& name) const;
    std::size_t modality_index(const std::string& name) const;
    const ModalityData& modality(const std::string& name) const;

    /// Throws SchemaError on any broken invariant.
    void validate() const;

    friend bool operator==(const CanonicalDataset&, const CanonicalDataset&) = default;
};

inline constexpr const char* kInertial = "inertial";
inline constexpr const char* kSkeleton = "skeleton";

/// Directory layout:
///   meta.json    format tag, endianness, dtype, window count, class names,
///                modalities [{name, file, time, channels, sampling_rate_hz,
///                crc32}]; crc32 (zlib, over the payload bytes) is optional
///   <name>.bin   little-endian float32, row-major [windows, time, channels]
///   labels.csv   header "window_index,label,subject_id,session_id"
void save_canonical(const CanonicalDataset& ds, const std::filesystem::path& dir);

/// Throws MalformedHeaderError, TruncatedPayloadError, ChecksumError or
/// SchemaError.
CanonicalDataset load_canonical(const std::filesystem::path& dir);

struct SynthConfig {
    std::size_t num_classes = 10;
    std::size_t samples_per_class = 60;
    std::size_t time_length = 32;
    std::size_t inertial_channels = 6;
    std::size_t skeleton_channels = 9;
    std::size_t latent_dim = 8;
    double noise_sigma = 0.5;
    // Share of windows whose skeleton side renders a different window's
    // latent (mismatched pairs).
    double corruption_rate = 0.1;
    // Per-window deviation of the latent around its class prototype.
    double instance_spread = 0.6;
    // Classes come in pairs whose prototypes differ by this fraction of a
    // fresh draw; smaller means harder class pairs.
    double pair_separation = 0.5;
    double pattern_amplitude = 1.0;
    // Scale of per-window, per-modality high-frequency components that carry
    // no class information (two sinusoids per channel, 5 to 10 cycles per
    // window, Gaussian amplitudes).
    double nuisance_amplitude = 0.0;
    // When false, the skeleton side of a window gets its own random phase.
    bool shared_phase = true;
    std::size_t num_subjects = 8;
    std::size_t num_sessions = 5;
    std::uint64_t seed = 7;

    void validate() const;
    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Fixed generative structure behind generate_synthetic: class prototypes,
/// one random linear map per modality and per-class periodic patterns.
class SyntheticRenderer {
public:
    explicit SyntheticRenderer(const SynthConfig& cfg);

    const SynthConfig& config() const noexcept { return cfg_; }
    const std::vector<double>& prototype(std::size_t cls) const { return prototypes_[cls]; }

    /// Prototype plus instance_spread-scaled Gaussian deviation.
    std::vector<double> draw_latent(std::size_t cls, Rng& rng) const;

    /// [time x channels] window of modality 0 (inertial) or 1 (skeleton).
    /// `phase` in [0, 1) shifts the periodic pattern; noise comes from `rng`.
    Tensor render(std::size_t modality, std::size_t cls, std::span<const double> latent,
                  double phase, Rng& rng) const;

private:
    SynthConfig cfg_;
    std::vector<std::vector<double>> prototypes_;
    std::vector<Tensor> maps_;                  // per modality [channels x latent]
    std::vector<std::vector<double>> freqs_;    // [modality][class]
    std::vector<Tensor> phases_;                // per modality [class x channels]
};

/// Class-major windows rendered by SyntheticRenderer. Subjects are assigned
/// round-robin, sessions cycle every num_subjects windows.
CanonicalDataset generate_synthetic(const SynthConfig& cfg);

enum class SplitProtocol { cross_subject_odd_even, cross_subject_first_k, cross_session_top_fraction };

std::string to_string(SplitProtocol p);
SplitProtocol split_protocol_from_string(const std::string& name);

struct SplitProtocolSpec {
    SplitProtocol protocol = SplitProtocol::cross_subject_odd_even;
    std::size_t first_k = 16;
    double session_fraction = 0.8;

    friend bool operator==(const SplitProtocolSpec&, const SplitProtocolSpec&) = default;
};

struct SplitSpec {
    SplitProtocolSpec protocol;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

SplitSpec make_split(const CanonicalDataset& ds, const SplitProtocolSpec& protocol);

/// Per class: max(1, round(fraction * count)) indices drawn without
/// replacement. Result is sorted ascending.
std::vector<std::size_t> stratified_label_subset(const CanonicalDataset& ds,
                                                 std::span<const std::size_t> train,
                                                 double fraction, Rng& rng);

/// Per-channel z-scoring with statistics from a subset of windows.
class StandardizedView {
public:
    StandardizedView(const CanonicalDataset& ds, std::span<const std::size_t> fit_indices);

    const CanonicalDataset& dataset() const noexcept { return *ds_; }
    Tensor window(std::size_t modality, std::size_t index) const;
    const std::vector<double>& mean(std::size_t modality) const { return mean_[modality]; }
    const std::vector<double>& stddev(std::size_t modality) const { return std_[modality]; }

private:
    const CanonicalDataset* ds_;
    std::vector<std::vector<double>> mean_;
    std::vector<std::vector<double>> std_;
};

/// Start offsets of fixed-length windows over a recording of `length`
/// frames; training uses 50% overlap, evaluation none.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, bool training);

/// Cuts a [time x channels] recording into windows.
std::vector<Tensor> segment_recording(const Tensor& recording, std::size_t window, bool training);

}  // namespace hardneg
