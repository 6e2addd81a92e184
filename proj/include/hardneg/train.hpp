#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hardneg/augment.hpp"
#include "hardneg/dataset.hpp"
#include "hardneg/encoder.hpp"
#include "hardneg/numcore.hpp"

namespace hardneg {

enum class Method { cmc, cmc_hnl, cmc_debiased, simclr, simclr_hnl, supervised };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
bool is_cross_modal(Method m);
bool uses_hard_negatives(Method m);

/// Reduce-on-plateau: the rate is multiplied by `factor` once the monitored
/// loss has failed to improve for more than `patience` consecutive epochs.
/// An epoch improves when loss < best * (1 - threshold).
struct SchedulerConfig {
    std::size_t patience = 20;
    double factor = 0.5;
    double threshold = 1e-4;

    friend bool operator==(const SchedulerConfig&, const SchedulerConfig&) = default;
};

class PlateauScheduler {
public:
    PlateauScheduler(SchedulerConfig cfg, double learning_rate);

    /// Feeds one epoch's loss; returns true when the rate was reduced.
    bool step(double loss);
    double learning_rate() const noexcept { return lr_; }

private:
    SchedulerConfig cfg_;
    double lr_;
    double best_;
    std::size_t bad_epochs_ = 0;
};

struct PretrainConfig {
    Method method = Method::cmc;
    double beta = 1.0;
    double tau_plus = 0.037;
    double temperature = 0.1;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t epochs = 150;
    SchedulerConfig scheduler;
    // Modality trained by the unimodal methods.
    std::string modality = kInertial;
    std::uint64_t seed = 0;
    // input_channels = 0 takes the channel count from the dataset.
    EncoderConfig inertial_encoder{.input_channels = 0};
    EncoderConfig skeleton_encoder{.input_channels = 0};
    AugmentSpec inertial_augment = AugmentSpec::inertial_default();
    AugmentSpec skeleton_augment = AugmentSpec::skeleton_default();

    /// Effective (beta, tau_plus): zero for plain methods, beta = 0 for the
    /// debiased one.
    double effective_beta() const;
    double effective_tau_plus() const;
    void validate() const;
    const EncoderConfig& encoder_for(const std::string& modality) const;
    const AugmentSpec& augment_for(const std::string& modality) const;
};

/// Encoder + projection head of one modality.
struct ModalityModel {
    std::string modality;
    EncoderConfig config;
    ParamSet params;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double learning_rate = 0.0;
};

struct PretrainResult {
    std::vector<ModalityModel> encoders;
    std::vector<EpochRecord> history;

    const ModalityModel& encoder(const std::string& modality) const;
};

/// Fresh encoders for every modality the method needs, seeded from `seed`.
std::vector<ModalityModel> init_models(const PretrainConfig& cfg, const CanonicalDataset& ds,
                                       std::uint64_t seed);

/// Contrastive pre-training on split.train. Cross-modal methods contrast
/// skeleton against inertial projections; unimodal methods contrast two
/// augmented views of `cfg.modality`. The optimized quantity is the mean
/// loss per anchor; the last batch is dropped when it has fewer than 2
/// samples.
PretrainResult pretrain(const PretrainConfig& cfg, const CanonicalDataset& ds,
                        const SplitSpec& split);

enum class ProbeModalities { inertial, skeleton, both };

std::string to_string(ProbeModalities m);
ProbeModalities probe_modalities_from_string(const std::string& name);

struct FinetuneConfig {
    ProbeModalities modalities = ProbeModalities::both;
    std::size_t fusion_width = 256;
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    double label_fraction = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<std::string> modality_names() const;
};

struct SeedMetrics {
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;

    friend bool operator==(const SeedMetrics&, const SeedMetrics&) = default;
};

double accuracy(std::span<const int> truth, std::span<const int> predicted);
/// Unweighted mean of per-class F1 over classes present in either input.
double macro_f1(std::span<const int> truth, std::span<const int> predicted);

/// Classification head on frozen representations. With two modalities each
/// h is mapped to `fusion_width`, layer-normalized and passed through ReLU,
/// and the concatenation feeds a linear softmax classifier. With one
/// modality the classifier reads h directly.
class FusionHead {
public:
    FusionHead(std::vector<std::size_t> input_dims, std::size_t fusion_width,
               std::size_t num_classes, Rng& rng);

    struct Cache {
        std::vector<Tensor> inputs;
        std::vector<Tensor> pre_norm;
        std::vector<Tensor> normalized;
        std::vector<double> inv_std;
        Tensor features;
        Tensor logits;
    };

    Tensor forward(std::span<const Tensor> h, Cache* cache) const;
    /// Accumulates head gradients; returns d/dh per modality.
    std::vector<Tensor> backward(const Cache& cache, const Tensor& grad_logits,
                                 ParamSet& grads) const;

    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }
    bool fused() const noexcept { return input_dims_.size() > 1; }

private:
    std::vector<std::size_t> input_dims_;
    std::size_t fusion_width_;
    std::size_t num_classes_;
    ParamSet params_;
};

/// Softmax cross-entropy of one sample; writes d/dlogits.
double cross_entropy(const Tensor& logits, int label, Tensor& grad_logits);

/// Frozen-encoder probe. Encoders are only read. Labels come from
/// stratified_label_subset(split.train, cfg.label_fraction).
SeedMetrics finetune_probe(const FinetuneConfig& cfg, std::span<const ModalityModel> encoders,
                           const CanonicalDataset& ds, const SplitSpec& split);

/// Same head and label subset as finetune_probe, but encoders start from
/// `encoders` and are trained end-to-end with the head.
SeedMetrics train_supervised(const FinetuneConfig& cfg, std::vector<ModalityModel> encoders,
                             const CanonicalDataset& ds, const SplitSpec& split);

struct RunResult {
    std::vector<SeedMetrics> per_seed;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    // mean +- 1.96 * sample std / sqrt(n); empty with a single seed.
    std::optional<double> ci95_accuracy;
    std::optional<double> ci95_macro_f1;
};

RunResult aggregate(std::vector<SeedMetrics> per_seed);

/// Pre-training, fine-tuning and split protocol for one experiment.
struct ExperimentConfig {
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    SplitProtocolSpec split;
    std::size_t num_seeds = 3;
};

/// `base` with its method replaced. Unimodal methods also probe only the
/// modality they were pre-trained on.
ExperimentConfig with_method(const ExperimentConfig& base, Method method);

/// Seed s in [0, num_seeds) runs pretrain + finetune with both seeds set to
/// base seed + s. Method `supervised` skips pre-training.
RunResult multi_run(const ExperimentConfig& cfg, const CanonicalDataset& ds);

struct SweepRow {
    double beta = 0.0;
    RunResult result;
};

/// One aggregated result per beta, ascending; everything else held fixed.
std::vector<SweepRow> beta_sweep(const ExperimentConfig& base, const CanonicalDataset& ds,
                                 std::vector<double> betas);

struct LimitedLabelRow {
    Method method = Method::cmc;
    double label_fraction = 1.0;
    RunResult result;
};

/// For each method and seed, pre-trains once on all training windows and
/// probes at every label fraction. `supervised` trains from scratch.
std::vector<LimitedLabelRow> limited_labels(const ExperimentConfig& base,
                                            const CanonicalDataset& ds,
                                            std::span<const Method> methods,
                                            std::span<const double> fractions);

}  // namespace hardneg
