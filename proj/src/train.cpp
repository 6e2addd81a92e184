#include "hardneg/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "hardneg/errors.hpp"
#include "hardneg/losses.hpp"

namespace hardneg {

namespace {

constexpr double kHeadNormEpsilon = 1e-5;

// Sub-stream tags. Changing them changes every trained model.
enum StreamTag : std::uint64_t {
    kOrderStream = 1,
    kAugmentStreamA = 2,
    kAugmentStreamB = 3,
    kInitStream = 100,
    kLabelStream = 201,
    kHeadStream = 202,
    kProbeOrderStream = 203,
};

std::uint64_t modality_tag(const std::string& name) {
    return name == kSkeleton ? 1 : 0;
}

EncoderConfig resolve_encoder(const EncoderConfig& base, const CanonicalDataset& ds,
                              const std::string& modality) {
    if (!ds.has_modality(modality)) {
        throw ConfigError("dataset lacks the '" + modality + "' modality");
    }
    const ModalityData& data = ds.modality(modality);
    EncoderConfig cfg = base;
    if (cfg.input_channels == 0) {
        cfg.input_channels = data.channels;
    } else if (cfg.input_channels != data.channels) {
        throw ConfigError(modality + " encoder expects " + std::to_string(cfg.input_channels) +
                          " channels, dataset has " + std::to_string(data.channels));
    }
    cfg.validate();
    if (data.time < cfg.min_input_length()) {
        throw ConfigError(modality + " windows have " + std::to_string(data.time) +
                          " frames; the encoder needs at least " +
                          std::to_string(cfg.min_input_length()));
    }
    return cfg;
}

std::vector<ModalityModel> init_named_models(const std::vector<std::string>& names,
                                             const PretrainConfig& cfg,
                                             const CanonicalDataset& ds, std::uint64_t seed) {
    const Rng root(seed);
    std::vector<ModalityModel> models;
    for (const auto& name : names) {
        ModalityModel model;
        model.modality = name;
        model.config = resolve_encoder(cfg.encoder_for(name), ds, name);
        Rng init = root.derive(kInitStream + modality_tag(name));
        model.params = init_encoder_params(model.config, init);
        models.push_back(std::move(model));
    }
    return models;
}

struct SampleCache {
    EncoderCache encoder;
    ProjectionCache projection;
};

// Encodes `indices` of one modality (optionally augmented) into unit-norm
// projection rows.
Tensor project_batch(const ModalityModel& model, const StandardizedView& view,
                     std::span<const std::size_t> indices, const AugmentSpec* augment, Rng& rng,
                     std::vector<SampleCache>& caches) {
    const std::size_t mi = view.dataset().modality_index(model.modality);
    Tensor z({indices.size(), model.config.projection_dim});
    caches.clear();
    caches.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        Tensor window = view.window(mi, indices[k]);
        if (augment) window = apply_pipeline(*augment, window, rng);
        EncoderOutput enc = encoder_forward(model.config, model.params, window);
        ProjectionOutput proj = projection_forward(model.config, model.params, enc.h);
        std::copy(proj.z.data().begin(), proj.z.data().end(), z.row(k).begin());
        caches.push_back({std::move(enc.cache), std::move(proj.cache)});
    }
    return z;
}

void backprop_batch(const ModalityModel& model, const std::vector<SampleCache>& caches,
                    const Tensor& grad_z, double scale, ParamSet& grads) {
    for (std::size_t k = 0; k < caches.size(); ++k) {
        Tensor g({grad_z.cols()});
        for (std::size_t c = 0; c < grad_z.cols(); ++c) g[c] = grad_z(k, c) * scale;
        const Tensor grad_h =
            projection_backward_accumulate(model.config, model.params, caches[k].projection, g, grads);
        encoder_backward_accumulate(model.params, caches[k].encoder, grad_h, grads, nullptr);
    }
}

// Welford running moments: identical inputs give exactly that mean and a
// zero spread.
struct Moments {
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t n = 0;
};

Moments moments(std::span<const double> v) {
    Moments m;
    for (double x : v) {
        ++m.n;
        const double d = x - m.mean;
        m.mean += d / static_cast<double>(m.n);
        m.m2 += d * (x - m.mean);
    }
    return m;
}

double mean(std::span<const double> v) { return moments(v).mean; }

std::optional<double> ci95(std::span<const double> v) {
    if (v.size() < 2) return std::nullopt;
    const Moments m = moments(v);
    const double sd = std::sqrt(m.m2 / static_cast<double>(m.n - 1));
    return 1.96 * sd / std::sqrt(static_cast<double>(m.n));
}

std::size_t argmax(const Tensor& t) {
    return static_cast<std::size_t>(
        std::distance(t.data().begin(), std::max_element(t.data().begin(), t.data().end())));
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::cmc: return "cmc";
        case Method::cmc_hnl: return "cmc_hnl";
        case Method::cmc_debiased: return "cmc_debiased";
        case Method::simclr: return "simclr";
        case Method::simclr_hnl: return "simclr_hnl";
        case Method::supervised: return "supervised";
    }
    return "unknown";
}

Method method_from_string(const std::string& name) {
    for (Method m : {Method::cmc, Method::cmc_hnl, Method::cmc_debiased, Method::simclr,
                     Method::simclr_hnl, Method::supervised}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown method '" + name + "'");
}

bool is_cross_modal(Method m) {
    return m == Method::cmc || m == Method::cmc_hnl || m == Method::cmc_debiased;
}

bool uses_hard_negatives(Method m) { return m == Method::cmc_hnl || m == Method::simclr_hnl; }

PlateauScheduler::PlateauScheduler(SchedulerConfig cfg, double learning_rate)
    : cfg_(cfg), lr_(learning_rate), best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::step(double loss) {
    if (loss < best_ * (1.0 - cfg_.threshold) || std::isinf(best_)) {
        best_ = loss;
        bad_epochs_ = 0;
        return false;
    }
    ++bad_epochs_;
    if (bad_epochs_ > cfg_.patience) {
        lr_ *= cfg_.factor;
        bad_epochs_ = 0;
        return true;
    }
    return false;
}

double PretrainConfig::effective_beta() const {
    return uses_hard_negatives(method) ? beta : 0.0;
}

double PretrainConfig::effective_tau_plus() const {
    return (uses_hard_negatives(method) || method == Method::cmc_debiased) ? tau_plus : 0.0;
}

void PretrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (each anchor needs a negative)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (!(tau_plus >= 0.0 && tau_plus < 1.0)) throw ConfigError("tau_plus must lie in [0, 1)");
    if (!(scheduler.factor > 0.0 && scheduler.factor <= 1.0)) {
        throw ConfigError("scheduler factor must lie in (0, 1]");
    }
    if (modality != kInertial && modality != kSkeleton) {
        throw ConfigError("modality must be 'inertial' or 'skeleton'");
    }
    for (const EncoderConfig* enc : {&inertial_encoder, &skeleton_encoder}) {
        EncoderConfig probe = *enc;
        if (probe.input_channels == 0) probe.input_channels = 1;
        probe.validate();
    }
    inertial_augment.validate();
    skeleton_augment.validate();
}

const EncoderConfig& PretrainConfig::encoder_for(const std::string& name) const {
    if (name == kInertial) return inertial_encoder;
    if (name == kSkeleton) return skeleton_encoder;
    throw ConfigError("no encoder config for modality '" + name + "'");
}

const AugmentSpec& PretrainConfig::augment_for(const std::string& name) const {
    if (name == kInertial) return inertial_augment;
    if (name == kSkeleton) return skeleton_augment;
    throw ConfigError("no augmentation spec for modality '" + name + "'");
}

const ModalityModel& PretrainResult::encoder(const std::string& modality) const {
    for (const auto& m : encoders) {
        if (m.modality == modality) return m;
    }
    throw ConfigError("no pretrained encoder for modality '" + modality + "'");
}

std::vector<ModalityModel> init_models(const PretrainConfig& cfg, const CanonicalDataset& ds,
                                       std::uint64_t seed) {
    if (is_cross_modal(cfg.method)) {
        return init_named_models({kInertial, kSkeleton}, cfg, ds, seed);
    }
    return init_named_models({cfg.modality}, cfg, ds, seed);
}

PretrainResult pretrain(const PretrainConfig& cfg, const CanonicalDataset& ds,
                        const SplitSpec& split) {
    cfg.validate();
    if (cfg.method == Method::supervised) {
        throw ConfigError("'supervised' has no pre-training stage");
    }
    if (split.train.size() < 2) throw ConfigError("pre-training needs at least 2 training windows");

    const bool cross = is_cross_modal(cfg.method);
    PretrainResult result;
    result.encoders = init_models(cfg, ds, cfg.seed);
    for (const auto& model : result.encoders) {
        cfg.augment_for(model.modality).validate(model.config.input_channels);
    }
    const StandardizedView view(ds, split.train);
    const Rng root(cfg.seed);
    Rng order_rng = root.derive(kOrderStream);
    Rng aug_a = root.derive(kAugmentStreamA);
    Rng aug_b = root.derive(kAugmentStreamB);

    std::vector<AdamState> optim(result.encoders.size());
    for (auto& state : optim) state.learning_rate = cfg.learning_rate;
    PlateauScheduler scheduler(cfg.scheduler, cfg.learning_rate);

    std::vector<std::size_t> order(split.train.begin(), split.train.end());
    std::vector<SampleCache> caches_a;
    std::vector<SampleCache> caches_b;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t size = std::min(cfg.batch_size, order.size() - start);
            if (size < 2) continue;
            const std::span<const std::size_t> idx(order.data() + start, size);

            LossOutput out;
            std::vector<ParamSet> grads;
            for (const auto& model : result.encoders) grads.push_back(model.params.zeros_like());

            if (cross) {
                // encoders[0] is inertial, encoders[1] skeleton.
                const ModalityModel& inertial = result.encoders[0];
                const ModalityModel& skeleton = result.encoders[1];
                Tensor z_i = project_batch(inertial, view, idx, &cfg.inertial_augment, aug_a, caches_a);
                Tensor z_s = project_batch(skeleton, view, idx, &cfg.skeleton_augment, aug_b, caches_b);
                const auto batch = EmbeddingBatch::make(std::move(z_s), std::move(z_i));
                switch (cfg.method) {
                    case Method::cmc: out = info_nce_bidirectional(batch, cfg.temperature); break;
                    case Method::cmc_hnl:
                        out = hnl_loss_bidirectional(
                            batch, HnlParams(cfg.beta, cfg.tau_plus, cfg.temperature, size - 1));
                        break;
                    default:
                        out = debiased_loss_bidirectional(batch, cfg.tau_plus, cfg.temperature);
                        break;
                }
                const double scale = 1.0 / static_cast<double>(out.num_anchors);
                backprop_batch(inertial, caches_a, out.grad_z_i, scale, grads[0]);
                backprop_batch(skeleton, caches_b, out.grad_z_s, scale, grads[1]);
            } else {
                const ModalityModel& model = result.encoders[0];
                const AugmentSpec& augment = cfg.augment_for(model.modality);
                const Tensor z_a = project_batch(model, view, idx, &augment, aug_a, caches_a);
                const Tensor z_b = project_batch(model, view, idx, &augment, aug_b, caches_b);
                std::optional<HnlParams> hnl;
                if (cfg.method == Method::simclr_hnl) {
                    hnl.emplace(cfg.beta, cfg.tau_plus, cfg.temperature, 2 * size - 2);
                }
                out = nt_xent_two_view(z_a, z_b, cfg.temperature, hnl);
                const double scale = 1.0 / static_cast<double>(out.num_anchors);
                backprop_batch(model, caches_a, out.grad_z_s, scale, grads[0]);
                backprop_batch(model, caches_b, out.grad_z_i, scale, grads[0]);
            }

            for (std::size_t m = 0; m < result.encoders.size(); ++m) {
                optim[m].learning_rate = scheduler.learning_rate();
                adam_step(result.encoders[m].params, grads[m], optim[m]);
            }
            loss_sum += out.mean_per_anchor();
            ++batches;
        }
        if (batches == 0) throw ConfigError("no batch of at least 2 samples could be formed");
        const double epoch_loss = loss_sum / static_cast<double>(batches);
        if (!std::isfinite(epoch_loss)) {
            throw Error("pre-training diverged at epoch " + std::to_string(epoch + 1));
        }
        result.history.push_back({epoch + 1, epoch_loss, scheduler.learning_rate()});
        scheduler.step(epoch_loss);
    }
    return result;
}

std::string to_string(ProbeModalities m) {
    switch (m) {
        case ProbeModalities::inertial: return "inertial";
        case ProbeModalities::skeleton: return "skeleton";
        case ProbeModalities::both: return "both";
    }
    return "unknown";
}

ProbeModalities probe_modalities_from_string(const std::string& name) {
    if (name == "inertial") return ProbeModalities::inertial;
    if (name == "skeleton") return ProbeModalities::skeleton;
    if (name == "both") return ProbeModalities::both;
    throw ConfigError("fine-tune modalities must be inertial, skeleton or both");
}

void FinetuneConfig::validate() const {
    if (fusion_width < 1) throw ConfigError("fusion_width must be >= 1");
    if (epochs < 1) throw ConfigError("fine-tune epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("fine-tune batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("fine-tune learning_rate must be positive");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
        throw ConfigError("label_fraction must lie in (0, 1]");
    }
}

std::vector<std::string> FinetuneConfig::modality_names() const {
    switch (modalities) {
        case ProbeModalities::inertial: return {kInertial};
        case ProbeModalities::skeleton: return {kSkeleton};
        case ProbeModalities::both: return {kInertial, kSkeleton};
    }
    return {};
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size() || truth.empty()) {
        throw DomainError("accuracy needs two equal, non-empty label vectors");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double macro_f1(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size() || truth.empty()) {
        throw DomainError("macro_f1 needs two equal, non-empty label vectors");
    }
    std::set<int> classes(truth.begin(), truth.end());
    classes.insert(predicted.begin(), predicted.end());
    double total = 0.0;
    for (int c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == c;
            const bool p = predicted[i] == c;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        const double denom = static_cast<double>(2 * tp + fp + fn);
        total += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

FusionHead::FusionHead(std::vector<std::size_t> input_dims, std::size_t fusion_width,
                       std::size_t num_classes, Rng& rng)
    : input_dims_(std::move(input_dims)), fusion_width_(fusion_width), num_classes_(num_classes) {
    if (input_dims_.empty()) throw ConfigError("fusion head needs at least one input");
    auto uniform_fill = [&](Tensor& t, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data()) v = rng.uniform(-bound, bound);
    };
    std::size_t feature_dim = input_dims_.front();
    if (fused()) {
        for (std::size_t m = 0; m < input_dims_.size(); ++m) {
            const std::string prefix = "fuse" + std::to_string(m) + ".";
            Tensor w({fusion_width_, input_dims_[m]});
            uniform_fill(w, input_dims_[m]);
            params_.add(prefix + "weight", std::move(w));
            params_.add(prefix + "bias", Tensor({fusion_width_}));
            params_.add(prefix + "gain", Tensor({fusion_width_}, 1.0));
            params_.add(prefix + "shift", Tensor({fusion_width_}));
        }
        feature_dim = fusion_width_ * input_dims_.size();
    }
    Tensor wc({num_classes_, feature_dim});
    uniform_fill(wc, feature_dim);
    params_.add("classifier.weight", std::move(wc));
    params_.add("classifier.bias", Tensor({num_classes_}));
}

Tensor FusionHead::forward(std::span<const Tensor> h, Cache* cache) const {
    if (h.size() != input_dims_.size()) throw ShapeError("fusion head got the wrong input count");
    Cache local;
    Cache& c = cache ? *cache : local;
    c = Cache{};
    if (fused()) {
        c.features = Tensor({fusion_width_ * input_dims_.size()});
        for (std::size_t m = 0; m < h.size(); ++m) {
            const std::string prefix = "fuse" + std::to_string(m) + ".";
            const Tensor& w = params_.at(prefix + "weight");
            const Tensor& b = params_.at(prefix + "bias");
            const Tensor& gain = params_.at(prefix + "gain");
            const Tensor& shift = params_.at(prefix + "shift");
            if (h[m].size() != input_dims_[m]) throw ShapeError("fusion input has the wrong size");
            Tensor u({fusion_width_});
            for (std::size_t r = 0; r < fusion_width_; ++r) u[r] = b[r] + dot(w.row(r), h[m].data());
            const double mu = std::accumulate(u.data().begin(), u.data().end(), 0.0) /
                              static_cast<double>(fusion_width_);
            double var = 0.0;
            for (double v : u.data()) var += (v - mu) * (v - mu);
            var /= static_cast<double>(fusion_width_);
            const double inv_std = 1.0 / std::sqrt(var + kHeadNormEpsilon);
            Tensor xhat({fusion_width_});
            for (std::size_t r = 0; r < fusion_width_; ++r) {
                xhat[r] = (u[r] - mu) * inv_std;
                const double y = gain[r] * xhat[r] + shift[r];
                c.features[m * fusion_width_ + r] = y > 0.0 ? y : 0.0;
            }
            c.inputs.push_back(h[m]);
            c.pre_norm.push_back(std::move(u));
            c.normalized.push_back(std::move(xhat));
            c.inv_std.push_back(inv_std);
        }
    } else {
        if (h[0].size() != input_dims_[0]) throw ShapeError("probe input has the wrong size");
        c.inputs.push_back(h[0]);
        c.features = Tensor({input_dims_[0]}, h[0].data());
    }
    const Tensor& wc = params_.at("classifier.weight");
    const Tensor& bc = params_.at("classifier.bias");
    c.logits = Tensor({num_classes_});
    for (std::size_t k = 0; k < num_classes_; ++k) c.logits[k] = bc[k] + dot(wc.row(k), c.features.data());
    return c.logits;
}

std::vector<Tensor> FusionHead::backward(const Cache& cache, const Tensor& grad_logits,
                                         ParamSet& grads) const {
    const Tensor& wc = params_.at("classifier.weight");
    Tensor& gwc = grads.at("classifier.weight");
    Tensor& gbc = grads.at("classifier.bias");
    const std::size_t fdim = cache.features.size();
    Tensor grad_features({fdim});
    for (std::size_t k = 0; k < num_classes_; ++k) {
        const double g = grad_logits[k];
        gbc[k] += g;
        for (std::size_t j = 0; j < fdim; ++j) {
            gwc(k, j) += g * cache.features[j];
            grad_features[j] += wc(k, j) * g;
        }
    }

    std::vector<Tensor> grad_h;
    if (!fused()) {
        grad_h.push_back(std::move(grad_features));
        return grad_h;
    }
    const double width = static_cast<double>(fusion_width_);
    for (std::size_t m = 0; m < input_dims_.size(); ++m) {
        const std::string prefix = "fuse" + std::to_string(m) + ".";
        const Tensor& w = params_.at(prefix + "weight");
        const Tensor& gain = params_.at(prefix + "gain");
        Tensor& gw = grads.at(prefix + "weight");
        Tensor& gb = grads.at(prefix + "bias");
        Tensor& ggain = grads.at(prefix + "gain");
        Tensor& gshift = grads.at(prefix + "shift");
        const Tensor& xhat = cache.normalized[m];

        Tensor grad_xhat({fusion_width_});
        double mean_g = 0.0;
        double mean_gx = 0.0;
        for (std::size_t r = 0; r < fusion_width_; ++r) {
            const double active = cache.features[m * fusion_width_ + r] > 0.0 ? 1.0 : 0.0;
            const double gy = grad_features[m * fusion_width_ + r] * active;
            ggain[r] += gy * xhat[r];
            gshift[r] += gy;
            grad_xhat[r] = gy * gain[r];
            mean_g += grad_xhat[r];
            mean_gx += grad_xhat[r] * xhat[r];
        }
        mean_g /= width;
        mean_gx /= width;
        Tensor gh({input_dims_[m]});
        for (std::size_t r = 0; r < fusion_width_; ++r) {
            const double gu = cache.inv_std[m] * (grad_xhat[r] - mean_g - xhat[r] * mean_gx);
            gb[r] += gu;
            for (std::size_t j = 0; j < input_dims_[m]; ++j) {
                gw(r, j) += gu * cache.inputs[m][j];
                gh[j] += w(r, j) * gu;
            }
        }
        grad_h.push_back(std::move(gh));
    }
    return grad_h;
}

double cross_entropy(const Tensor& logits, int label, Tensor& grad_logits) {
    const double lse = stable_logsumexp(logits.data());
    grad_logits = Tensor(logits.shape());
    for (std::size_t k = 0; k < logits.size(); ++k) grad_logits[k] = std::exp(logits[k] - lse);
    grad_logits[static_cast<std::size_t>(label)] -= 1.0;
    return lse - logits[static_cast<std::size_t>(label)];
}

namespace {

struct ProbeSetup {
    std::vector<const ModalityModel*> models;
    std::vector<std::size_t> modality_index;
    std::vector<std::size_t> labeled;
};

ProbeSetup setup_probe(const FinetuneConfig& cfg, std::span<const ModalityModel> encoders,
                       const CanonicalDataset& ds, const SplitSpec& split) {
    cfg.validate();
    if (split.test.empty()) throw ConfigError("split has no test windows");
    ProbeSetup setup;
    for (const auto& name : cfg.modality_names()) {
        if (!ds.has_modality(name)) throw ConfigError("dataset lacks the '" + name + "' modality");
        const auto it = std::find_if(encoders.begin(), encoders.end(),
                                     [&](const ModalityModel& m) { return m.modality == name; });
        if (it == encoders.end()) throw ConfigError("no encoder for modality '" + name + "'");
        setup.models.push_back(&*it);
        setup.modality_index.push_back(ds.modality_index(name));
    }
    Rng label_rng = Rng(cfg.seed).derive(kLabelStream);
    setup.labeled = stratified_label_subset(ds, split.train, cfg.label_fraction, label_rng);
    return setup;
}

std::vector<std::size_t> head_input_dims(const ProbeSetup& setup) {
    std::vector<std::size_t> dims;
    for (const auto* m : setup.models) dims.push_back(m->config.embedding_dim);
    return dims;
}

SeedMetrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                     std::uint64_t seed) {
    return {seed, accuracy(truth, predicted), macro_f1(truth, predicted)};
}

}  // namespace

SeedMetrics finetune_probe(const FinetuneConfig& cfg, std::span<const ModalityModel> encoders,
                           const CanonicalDataset& ds, const SplitSpec& split) {
    const ProbeSetup setup = setup_probe(cfg, encoders, ds, split);
    const StandardizedView view(ds, split.train);

    auto features_of = [&](std::size_t idx) {
        std::vector<Tensor> h;
        for (std::size_t m = 0; m < setup.models.size(); ++m) {
            const ModalityModel& model = *setup.models[m];
            h.push_back(
                encoder_forward(model.config, model.params, view.window(setup.modality_index[m], idx)).h);
        }
        return h;
    };
    std::vector<std::vector<Tensor>> train_features;
    for (std::size_t idx : setup.labeled) train_features.push_back(features_of(idx));

    const Rng root(cfg.seed);
    Rng head_rng = root.derive(kHeadStream);
    Rng order_rng = root.derive(kProbeOrderStream);
    FusionHead head(head_input_dims(setup), cfg.fusion_width, ds.num_classes(), head_rng);
    AdamState optim;
    optim.learning_rate = cfg.learning_rate;

    std::vector<std::size_t> order(setup.labeled.size());
    std::iota(order.begin(), order.end(), 0);
    FusionHead::Cache cache;
    Tensor grad_logits;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t size = std::min(cfg.batch_size, order.size() - start);
            ParamSet grads = head.params().zeros_like();
            for (std::size_t k = start; k < start + size; ++k) {
                const std::size_t j = order[k];
                head.forward(train_features[j], &cache);
                cross_entropy(cache.logits, ds.labels[setup.labeled[j]], grad_logits);
                grad_logits *= 1.0 / static_cast<double>(size);
                head.backward(cache, grad_logits, grads);
            }
            adam_step(head.params(), grads, optim);
        }
    }

    std::vector<int> truth;
    std::vector<int> predicted;
    for (std::size_t idx : split.test) {
        const auto h = features_of(idx);
        truth.push_back(ds.labels[idx]);
        predicted.push_back(static_cast<int>(argmax(head.forward(h, nullptr))));
    }
    return evaluate(truth, predicted, cfg.seed);
}

SeedMetrics train_supervised(const FinetuneConfig& cfg, std::vector<ModalityModel> encoders,
                             const CanonicalDataset& ds, const SplitSpec& split) {
    const ProbeSetup setup = setup_probe(cfg, encoders, ds, split);
    const StandardizedView view(ds, split.train);
    // setup.models points into `encoders`; training mutates them in place.
    std::vector<ModalityModel*> models;
    for (const auto* m : setup.models) models.push_back(const_cast<ModalityModel*>(m));

    const Rng root(cfg.seed);
    Rng head_rng = root.derive(kHeadStream);
    Rng order_rng = root.derive(kProbeOrderStream);
    FusionHead head(head_input_dims(setup), cfg.fusion_width, ds.num_classes(), head_rng);
    AdamState head_optim;
    head_optim.learning_rate = cfg.learning_rate;
    std::vector<AdamState> enc_optim(models.size());
    for (auto& s : enc_optim) s.learning_rate = cfg.learning_rate;

    std::vector<std::size_t> order(setup.labeled);
    FusionHead::Cache cache;
    Tensor grad_logits;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t size = std::min(cfg.batch_size, order.size() - start);
            ParamSet head_grads = head.params().zeros_like();
            std::vector<ParamSet> enc_grads;
            for (const auto* m : models) enc_grads.push_back(m->params.zeros_like());
            for (std::size_t k = start; k < start + size; ++k) {
                const std::size_t idx = order[k];
                std::vector<Tensor> h;
                std::vector<EncoderCache> enc_caches;
                for (std::size_t m = 0; m < models.size(); ++m) {
                    EncoderOutput out = encoder_forward(models[m]->config, models[m]->params,
                                                        view.window(setup.modality_index[m], idx));
                    h.push_back(std::move(out.h));
                    enc_caches.push_back(std::move(out.cache));
                }
                head.forward(h, &cache);
                cross_entropy(cache.logits, ds.labels[idx], grad_logits);
                grad_logits *= 1.0 / static_cast<double>(size);
                const auto grad_h = head.backward(cache, grad_logits, head_grads);
                for (std::size_t m = 0; m < models.size(); ++m) {
                    encoder_backward_accumulate(models[m]->params, enc_caches[m], grad_h[m],
                                                enc_grads[m], nullptr);
                }
            }
            adam_step(head.params(), head_grads, head_optim);
            for (std::size_t m = 0; m < models.size(); ++m) {
                adam_step(models[m]->params, enc_grads[m], enc_optim[m]);
            }
        }
    }

    std::vector<int> truth;
    std::vector<int> predicted;
    for (std::size_t idx : split.test) {
        std::vector<Tensor> h;
        for (std::size_t m = 0; m < models.size(); ++m) {
            h.push_back(encoder_forward(models[m]->config, models[m]->params,
                                        view.window(setup.modality_index[m], idx))
                            .h);
        }
        truth.push_back(ds.labels[idx]);
        predicted.push_back(static_cast<int>(argmax(head.forward(h, nullptr))));
    }
    return evaluate(truth, predicted, cfg.seed);
}

RunResult aggregate(std::vector<SeedMetrics> per_seed) {
    if (per_seed.empty()) throw DomainError("cannot aggregate zero runs");
    RunResult r;
    std::vector<double> acc;
    std::vector<double> f1;
    for (const auto& s : per_seed) {
        acc.push_back(s.accuracy);
        f1.push_back(s.macro_f1);
    }
    r.mean_accuracy = mean(acc);
    r.mean_macro_f1 = mean(f1);
    r.ci95_accuracy = ci95(acc);
    r.ci95_macro_f1 = ci95(f1);
    r.per_seed = std::move(per_seed);
    return r;
}

namespace {

std::vector<ModalityModel> supervised_models(const ExperimentConfig& cfg,
                                             const CanonicalDataset& ds, std::uint64_t seed) {
    return init_named_models(cfg.finetune.modality_names(), cfg.pretrain, ds, seed);
}

}  // namespace

ExperimentConfig with_method(const ExperimentConfig& base, Method method) {
    ExperimentConfig cfg = base;
    cfg.pretrain.method = method;
    if (method == Method::simclr || method == Method::simclr_hnl) {
        cfg.finetune.modalities = probe_modalities_from_string(cfg.pretrain.modality);
    }
    return cfg;
}

RunResult multi_run(const ExperimentConfig& cfg, const CanonicalDataset& ds) {
    if (cfg.num_seeds < 1) throw ConfigError("num_seeds must be >= 1");
    const SplitSpec split = make_split(ds, cfg.split);
    std::vector<SeedMetrics> per_seed;
    for (std::size_t s = 0; s < cfg.num_seeds; ++s) {
        PretrainConfig pre = cfg.pretrain;
        FinetuneConfig fine = cfg.finetune;
        pre.seed += s;
        fine.seed += s;
        if (pre.method == Method::supervised) {
            per_seed.push_back(train_supervised(fine, supervised_models(cfg, ds, pre.seed), ds, split));
        } else {
            const PretrainResult trained = pretrain(pre, ds, split);
            per_seed.push_back(finetune_probe(fine, trained.encoders, ds, split));
        }
    }
    return aggregate(std::move(per_seed));
}

std::vector<SweepRow> beta_sweep(const ExperimentConfig& base, const CanonicalDataset& ds,
                                 std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("beta sweep needs at least one beta");
    if (!uses_hard_negatives(base.pretrain.method)) {
        throw ConfigError("beta sweep needs a hard-negative method (cmc_hnl or simclr_hnl)");
    }
    std::sort(betas.begin(), betas.end());
    std::vector<SweepRow> rows;
    for (double beta : betas) {
        ExperimentConfig cfg = base;
        cfg.pretrain.beta = beta;
        rows.push_back({beta, multi_run(cfg, ds)});
    }
    return rows;
}

std::vector<LimitedLabelRow> limited_labels(const ExperimentConfig& base,
                                            const CanonicalDataset& ds,
                                            std::span<const Method> methods,
                                            std::span<const double> fractions) {
    if (methods.empty() || fractions.empty()) {
        throw ConfigError("limited-label study needs methods and fractions");
    }
    if (base.num_seeds < 1) throw ConfigError("num_seeds must be >= 1");
    const SplitSpec split = make_split(ds, base.split);
    std::vector<LimitedLabelRow> rows;
    for (Method method : methods) {
        std::vector<std::vector<SeedMetrics>> by_fraction(fractions.size());
        const ExperimentConfig mcfg = with_method(base, method);
        for (std::size_t s = 0; s < base.num_seeds; ++s) {
            PretrainConfig pre = mcfg.pretrain;
            pre.seed += s;
            std::optional<PretrainResult> trained;
            if (method != Method::supervised) trained = pretrain(pre, ds, split);
            for (std::size_t f = 0; f < fractions.size(); ++f) {
                FinetuneConfig fine = mcfg.finetune;
                fine.seed += s;
                fine.label_fraction = fractions[f];
                if (trained) {
                    by_fraction[f].push_back(finetune_probe(fine, trained->encoders, ds, split));
                } else {
                    by_fraction[f].push_back(
                        train_supervised(fine, supervised_models(mcfg, ds, pre.seed), ds, split));
                }
            }
        }
        for (std::size_t f = 0; f < fractions.size(); ++f) {
            rows.push_back({method, fractions[f], aggregate(std::move(by_fraction[f]))});
        }
    }
    return rows;
}

}  // namespace hardneg
