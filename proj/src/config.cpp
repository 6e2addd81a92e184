#include "hardneg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "hardneg/errors.hpp"

namespace hardneg {

namespace {

// Strict view of one JSON object: unknown keys fail at construction and
// each read checks the value type.
class Section {
public:
    Section(const Json& j, std::string where, std::initializer_list<const char*> allowed)
        : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ConfigError(where_ + " must be a JSON object");
        const std::set<std::string> known(allowed.begin(), allowed.end());
        for (const auto& item : j.items()) {
            if (!known.count(item.key())) throw ConfigError("unknown key " + path(item.key()));
        }
    }

    template <typename T>
    void read(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        const Json& v = j_.at(key);
        bool ok = true;
        if constexpr (std::is_same_v<T, bool>) {
            ok = v.is_boolean();
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            ok = v.is_number_unsigned();
        } else if constexpr (std::is_integral_v<T>) {
            ok = v.is_number_integer();
        } else if constexpr (std::is_floating_point_v<T>) {
            ok = v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            ok = v.is_string();
        }
        if (!ok) throw ConfigError(path(key) + " has the wrong type: " + v.dump());
        try {
            out = v.get<T>();
        } catch (const Json::exception& e) {
            throw ConfigError(path(key) + ": " + e.what());
        }
    }

    std::string read_string(const char* key, const std::string& fallback) const {
        std::string s = fallback;
        read(key, s);
        return s;
    }

    const Json* child(const char* key) const { return j_.contains(key) ? &j_.at(key) : nullptr; }
    std::string path(const std::string& key) const { return where_ + "." + key; }

private:
    const Json& j_;
    std::string where_;
};

// Wraps a parse helper so its ConfigError names the key.
template <typename F>
auto named(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

Json to_json(const SchedulerConfig& s) {
    return {{"patience", s.patience}, {"factor", s.factor}, {"threshold", s.threshold}};
}

Json to_json(const SplitProtocolSpec& s) {
    return {{"protocol", to_string(s.protocol)},
            {"first_k", s.first_k},
            {"session_fraction", s.session_fraction}};
}

Json to_json(const PretrainConfig& p) {
    return {{"method", to_string(p.method)},
            {"beta", p.beta},
            {"tau_plus", p.tau_plus},
            {"temperature", p.temperature},
            {"batch_size", p.batch_size},
            {"learning_rate", p.learning_rate},
            {"epochs", p.epochs},
            {"scheduler", to_json(p.scheduler)},
            {"modality", p.modality},
            {"seed", p.seed}};
}

Json to_json(const FinetuneConfig& f) {
    return {{"modalities", to_string(f.modalities)},
            {"fusion_width", f.fusion_width},
            {"epochs", f.epochs},
            {"learning_rate", f.learning_rate},
            {"batch_size", f.batch_size},
            {"label_fraction", f.label_fraction},
            {"seed", f.seed}};
}

void read_pretrain(const Json& j, PretrainConfig& p) {
    const Section s(j, "pretrain",
                    {"method", "beta", "tau_plus", "temperature", "batch_size", "learning_rate",
                     "epochs", "scheduler", "modality", "seed"});
    p.method = named(s.path("method"),
                     [&] { return method_from_string(s.read_string("method", to_string(p.method))); });
    s.read("beta", p.beta);
    s.read("tau_plus", p.tau_plus);
    s.read("temperature", p.temperature);
    s.read("batch_size", p.batch_size);
    s.read("learning_rate", p.learning_rate);
    s.read("epochs", p.epochs);
    s.read("modality", p.modality);
    s.read("seed", p.seed);
    if (const Json* sched = s.child("scheduler")) {
        const Section ss(*sched, "pretrain.scheduler", {"patience", "factor", "threshold"});
        ss.read("patience", p.scheduler.patience);
        ss.read("factor", p.scheduler.factor);
        ss.read("threshold", p.scheduler.threshold);
    }
}

void read_finetune(const Json& j, FinetuneConfig& f) {
    const Section s(j, "finetune",
                    {"modalities", "fusion_width", "epochs", "learning_rate", "batch_size",
                     "label_fraction", "seed"});
    f.modalities = named(s.path("modalities"), [&] {
        return probe_modalities_from_string(s.read_string("modalities", to_string(f.modalities)));
    });
    s.read("fusion_width", f.fusion_width);
    s.read("epochs", f.epochs);
    s.read("learning_rate", f.learning_rate);
    s.read("batch_size", f.batch_size);
    s.read("label_fraction", f.label_fraction);
    s.read("seed", f.seed);
}

void read_split(const Json& j, SplitProtocolSpec& sp) {
    const Section s(j, "split", {"protocol", "first_k", "session_fraction"});
    sp.protocol = named(s.path("protocol"), [&] {
        return split_protocol_from_string(s.read_string("protocol", to_string(sp.protocol)));
    });
    s.read("first_k", sp.first_k);
    s.read("session_fraction", sp.session_fraction);
}

std::optional<std::string> read_optional_path(const Json& root, const char* key) {
    if (!root.contains(key) || root.at(key).is_null()) return std::nullopt;
    if (!root.at(key).is_string()) throw ConfigError(std::string(key) + " must be a string or null");
    return root.at(key).get<std::string>();
}

Json optional_path(const std::optional<std::string>& p) { return p ? Json(*p) : Json(nullptr); }

std::vector<double> read_doubles(const Json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError(where + " must be an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
        parts.push_back(item);
    }
    if (parts.empty()) throw ConfigError("empty list");
    return parts;
}

}  // namespace

Json to_json(const EncoderConfig& cfg) {
    Json layers = Json::array();
    for (const auto& l : cfg.conv_layers) {
        layers.push_back(
            {{"out_channels", l.out_channels}, {"kernel_size", l.kernel_size}, {"stride", l.stride}});
    }
    return {{"input_channels", cfg.input_channels},
            {"conv_layers", layers},
            {"activation", to_string(cfg.activation)},
            {"layer_norm", cfg.layer_norm},
            {"embedding_dim", cfg.embedding_dim},
            {"projection_dim", cfg.projection_dim}};
}

EncoderConfig encoder_config_from_json(const Json& j, const std::string& where,
                                       EncoderConfig base) {
    EncoderConfig cfg = std::move(base);
    const Section s(j, where,
                    {"input_channels", "conv_layers", "activation", "layer_norm", "embedding_dim",
                     "projection_dim"});
    s.read("input_channels", cfg.input_channels);
    s.read("layer_norm", cfg.layer_norm);
    s.read("embedding_dim", cfg.embedding_dim);
    s.read("projection_dim", cfg.projection_dim);
    cfg.activation = named(s.path("activation"), [&] {
        return activation_from_string(s.read_string("activation", to_string(cfg.activation)));
    });
    if (const Json* layers = s.child("conv_layers")) {
        if (!layers->is_array()) throw ConfigError(s.path("conv_layers") + " must be an array");
        cfg.conv_layers.clear();
        for (std::size_t i = 0; i < layers->size(); ++i) {
            ConvLayerSpec layer;
            const Section ls((*layers)[i], s.path("conv_layers") + "[" + std::to_string(i) + "]",
                             {"out_channels", "kernel_size", "stride"});
            ls.read("out_channels", layer.out_channels);
            ls.read("kernel_size", layer.kernel_size);
            ls.read("stride", layer.stride);
            cfg.conv_layers.push_back(layer);
        }
    }
    return cfg;
}

Json to_json(const AugmentSpec& spec) {
    Json steps = Json::array();
    for (const auto& step : spec.steps) {
        Json j = {{"transform", transform_name(step.transform)}, {"probability", step.probability}};
        if (const auto* p = std::get_if<Jitter>(&step.transform)) j["sigma"] = p->sigma;
        if (const auto* p = std::get_if<Scale>(&step.transform)) {
            j["low"] = p->low;
            j["high"] = p->high;
        }
        if (const auto* p = std::get_if<PermuteSegments>(&step.transform)) {
            j["min_segments"] = p->min_segments;
            j["max_segments"] = p->max_segments;
        }
        if (const auto* p = std::get_if<Shear>(&step.transform)) j["magnitude"] = p->magnitude;
        if (const auto* p = std::get_if<ResizedCrop>(&step.transform)) {
            j["min_fraction"] = p->min_fraction;
            j["max_fraction"] = p->max_fraction;
        }
        steps.push_back(std::move(j));
    }
    return steps;
}

AugmentSpec augment_spec_from_json(const Json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + " must be an array of steps");
    AugmentSpec spec;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string at = where + "[" + std::to_string(i) + "]";
        const Json& step = j[i];
        if (!step.is_object() || !step.contains("transform") || !step.at("transform").is_string()) {
            throw ConfigError(at + " needs a string 'transform'");
        }
        const auto name = step.at("transform").get<std::string>();
        AugmentStep out;
        if (name == "jitter") {
            Jitter t;
            const Section s(step, at, {"transform", "probability", "sigma"});
            s.read("sigma", t.sigma);
            s.read("probability", out.probability);
            out.transform = t;
        } else if (name == "scale") {
            Scale t;
            const Section s(step, at, {"transform", "probability", "low", "high"});
            s.read("low", t.low);
            s.read("high", t.high);
            s.read("probability", out.probability);
            out.transform = t;
        } else if (name == "rotate") {
            const Section s(step, at, {"transform", "probability"});
            s.read("probability", out.probability);
            out.transform = Rotate{};
        } else if (name == "permute_segments") {
            PermuteSegments t;
            const Section s(step, at, {"transform", "probability", "min_segments", "max_segments"});
            s.read("min_segments", t.min_segments);
            s.read("max_segments", t.max_segments);
            s.read("probability", out.probability);
            out.transform = t;
        } else if (name == "channel_shuffle") {
            const Section s(step, at, {"transform", "probability"});
            s.read("probability", out.probability);
            out.transform = ChannelShuffle{};
        } else if (name == "shear") {
            Shear t;
            const Section s(step, at, {"transform", "probability", "magnitude"});
            s.read("magnitude", t.magnitude);
            s.read("probability", out.probability);
            out.transform = t;
        } else if (name == "resized_crop") {
            ResizedCrop t;
            const Section s(step, at, {"transform", "probability", "min_fraction", "max_fraction"});
            s.read("min_fraction", t.min_fraction);
            s.read("max_fraction", t.max_fraction);
            s.read("probability", out.probability);
            out.transform = t;
        } else {
            throw ConfigError(at + ": unknown transform '" + name + "'");
        }
        spec.steps.push_back(std::move(out));
    }
    named(where, [&] {
        spec.validate();
        return 0;
    });
    return spec;
}

Json to_json(const SynthConfig& c) {
    return {{"num_classes", c.num_classes},
            {"samples_per_class", c.samples_per_class},
            {"time_length", c.time_length},
            {"inertial_channels", c.inertial_channels},
            {"skeleton_channels", c.skeleton_channels},
            {"latent_dim", c.latent_dim},
            {"noise_sigma", c.noise_sigma},
            {"corruption_rate", c.corruption_rate},
            {"instance_spread", c.instance_spread},
            {"pair_separation", c.pair_separation},
            {"pattern_amplitude", c.pattern_amplitude},
            {"nuisance_amplitude", c.nuisance_amplitude},
            {"shared_phase", c.shared_phase},
            {"num_subjects", c.num_subjects},
            {"num_sessions", c.num_sessions},
            {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const Json& j, const std::string& where) {
    SynthConfig c;
    const Section s(j, where,
                    {"num_classes", "samples_per_class", "time_length", "inertial_channels",
                     "skeleton_channels", "latent_dim", "noise_sigma", "corruption_rate",
                     "instance_spread", "pair_separation", "pattern_amplitude", "nuisance_amplitude",
                     "shared_phase", "num_subjects", "num_sessions", "seed"});
    s.read("num_classes", c.num_classes);
    s.read("samples_per_class", c.samples_per_class);
    s.read("time_length", c.time_length);
    s.read("inertial_channels", c.inertial_channels);
    s.read("skeleton_channels", c.skeleton_channels);
    s.read("latent_dim", c.latent_dim);
    s.read("noise_sigma", c.noise_sigma);
    s.read("corruption_rate", c.corruption_rate);
    s.read("instance_spread", c.instance_spread);
    s.read("pair_separation", c.pair_separation);
    s.read("pattern_amplitude", c.pattern_amplitude);
    s.read("nuisance_amplitude", c.nuisance_amplitude);
    s.read("shared_phase", c.shared_phase);
    s.read("num_subjects", c.num_subjects);
    s.read("num_sessions", c.num_sessions);
    s.read("seed", c.seed);
    named(where, [&] {
        c.validate();
        return 0;
    });
    return c;
}

Json to_json(const RunConfig& cfg) {
    const ExperimentConfig& e = cfg.experiment;
    Json methods = Json::array();
    for (Method m : cfg.methods) methods.push_back(to_string(m));
    return {{"synth", to_json(cfg.synth)},
            {"dataset", optional_path(cfg.dataset)},
            {"encoders", optional_path(cfg.encoders)},
            {"split", to_json(e.split)},
            {"pretrain", to_json(e.pretrain)},
            {"encoder_configs",
             {{kInertial, to_json(e.pretrain.inertial_encoder)},
              {kSkeleton, to_json(e.pretrain.skeleton_encoder)}}},
            {"augment",
             {{kInertial, to_json(e.pretrain.inertial_augment)},
              {kSkeleton, to_json(e.pretrain.skeleton_augment)}}},
            {"finetune", to_json(e.finetune)},
            {"num_seeds", e.num_seeds},
            {"betas", cfg.betas},
            {"label_fractions", cfg.label_fractions},
            {"methods", methods}};
}

RunConfig run_config_from_json(const Json& j) {
    RunConfig cfg;
    const Section s(j, "config",
                    {"synth", "dataset", "encoders", "output_dir", "split", "pretrain",
                     "encoder_configs", "augment", "finetune", "num_seeds", "betas",
                     "label_fractions", "methods"});
    if (const Json* v = s.child("synth")) cfg.synth = synth_config_from_json(*v);
    cfg.dataset = read_optional_path(j, "dataset");
    cfg.encoders = read_optional_path(j, "encoders");
    cfg.output_dir = read_optional_path(j, "output_dir");
    ExperimentConfig& e = cfg.experiment;
    if (const Json* v = s.child("split")) read_split(*v, e.split);
    if (const Json* v = s.child("pretrain")) read_pretrain(*v, e.pretrain);
    if (const Json* v = s.child("encoder_configs")) {
        const Section es(*v, "encoder_configs", {kInertial, kSkeleton});
        if (const Json* x = es.child(kInertial)) {
            e.pretrain.inertial_encoder = encoder_config_from_json(*x, es.path(kInertial),
                                                                   e.pretrain.inertial_encoder);
        }
        if (const Json* x = es.child(kSkeleton)) {
            e.pretrain.skeleton_encoder = encoder_config_from_json(*x, es.path(kSkeleton),
                                                                   e.pretrain.skeleton_encoder);
        }
    }
    if (const Json* v = s.child("augment")) {
        const Section as(*v, "augment", {kInertial, kSkeleton});
        if (const Json* x = as.child(kInertial)) {
            e.pretrain.inertial_augment = augment_spec_from_json(*x, as.path(kInertial));
        }
        if (const Json* x = as.child(kSkeleton)) {
            e.pretrain.skeleton_augment = augment_spec_from_json(*x, as.path(kSkeleton));
        }
    }
    if (const Json* v = s.child("finetune")) read_finetune(*v, e.finetune);
    s.read("num_seeds", e.num_seeds);
    if (const Json* v = s.child("betas")) cfg.betas = read_doubles(*v, "config.betas");
    if (const Json* v = s.child("label_fractions")) {
        cfg.label_fractions = read_doubles(*v, "config.label_fractions");
    }
    if (const Json* v = s.child("methods")) {
        if (!v->is_array()) throw ConfigError("config.methods must be an array of strings");
        cfg.methods.clear();
        for (const auto& m : *v) {
            if (!m.is_string()) throw ConfigError("config.methods must be an array of strings");
            cfg.methods.push_back(method_from_string(m.get<std::string>()));
        }
    }

    named("config.pretrain", [&] {
        e.pretrain.validate();
        return 0;
    });
    named("config.finetune", [&] {
        e.finetune.validate();
        return 0;
    });
    if (e.num_seeds < 1) throw ConfigError("config.num_seeds must be >= 1");
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void resolve_against(RunConfig& cfg, const CanonicalDataset& ds) {
    for (const char* name : {kInertial, kSkeleton}) {
        if (!ds.has_modality(name)) continue;
        EncoderConfig& enc = name == std::string(kInertial) ? cfg.experiment.pretrain.inertial_encoder
                                                            : cfg.experiment.pretrain.skeleton_encoder;
        const std::size_t channels = ds.modality(name).channels;
        if (enc.input_channels == 0) {
            enc.input_channels = channels;
        } else if (enc.input_channels != channels) {
            throw ConfigError(std::string(name) + " encoder expects " +
                              std::to_string(enc.input_channels) + " channels, dataset has " +
                              std::to_string(channels));
        }
    }
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split_commas(text)) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != part.size()) throw ConfigError("not a number: '" + part + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<Method> parse_method_list(const std::string& text) {
    std::vector<Method> out;
    for (const auto& part : split_commas(text)) out.push_back(method_from_string(part));
    return out;
}

}  // namespace hardneg
