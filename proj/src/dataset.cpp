#include "hardneg/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include <zlib.h>

#include "hardneg/errors.hpp"

namespace hardneg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kFormatTag = "hardneg-canonical";
constexpr int kFormatVersion = 1;
constexpr const char* kLabelsHeader = "window_index,label,subject_id,session_id";

void write_f32_le(std::ofstream& out, const std::vector<float>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(float)));
    } else {
        for (float v : values) {
            auto bits = std::bit_cast<std::uint32_t>(v);
            unsigned char bytes[4];
            for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
            out.write(reinterpret_cast<const char*>(bytes), 4);
        }
    }
}

std::uint32_t payload_crc32(const std::vector<float>& values) {
    std::vector<unsigned char> raw(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), raw.data(), static_cast<uInt>(raw.size())));
}

std::vector<float> read_f32_le(const fs::path& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open payload " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    const std::size_t expected = count * sizeof(float);
    if (size < expected) {
        throw TruncatedPayloadError(path.filename().string() + " is truncated: " +
                                    std::to_string(size) + " bytes, expected " +
                                    std::to_string(expected));
    }
    if (size > expected) {
        throw SchemaError(path.filename().string() + " has " + std::to_string(size - expected) +
                          " trailing bytes beyond the declared shape");
    }
    in.seekg(0);
    std::vector<unsigned char> raw(expected);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
    if (!in) throw TruncatedPayloadError("short read on " + path.string());
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
        values[i] = std::bit_cast<float>(bits);
    }
    return values;
}

template <typename T>
T header_field(const json& meta, const char* key) {
    if (!meta.contains(key)) throw MalformedHeaderError(std::string("meta.json lacks '") + key + "'");
    try {
        return meta.at(key).get<T>();
    } catch (const json::exception& e) {
        throw MalformedHeaderError(std::string("meta.json field '") + key + "': " + e.what());
    }
}

std::vector<int> parse_csv_ints(const std::string& line, std::size_t line_no) {
    std::vector<int> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw SchemaError("labels.csv line " + std::to_string(line_no) + ": bad integer '" +
                              cell + "'");
        }
    }
    return out;
}

}  // namespace

Tensor ModalityData::window(std::size_t i) const {
    const std::size_t stride = time * channels;
    if ((i + 1) * stride > values.size()) {
        throw ShapeError("window " + std::to_string(i) + " out of range for modality " + name);
    }
    Tensor out({time, channels});
    for (std::size_t k = 0; k < stride; ++k) out[k] = static_cast<double>(values[i * stride + k]);
    return out;
}

bool CanonicalDataset::has_modality(const std::string& name) const {
    return std::any_of(modalities.begin(), modalities.end(),
                       [&](const ModalityData& m) { return m.name == name; });
}

std::size_t CanonicalDataset::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities.size(); ++i) {
        if (modalities[i].name == name) return i;
    }
    throw DataError("dataset has no modality '" + name + "'");
}

const ModalityData& CanonicalDataset::modality(const std::string& name) const {
    return modalities[modality_index(name)];
}

void CanonicalDataset::validate() const {
    const std::size_t n = labels.size();
    if (modalities.empty()) throw SchemaError("dataset has no modalities");
    if (subject_ids.size() != n || session_ids.size() != n) {
        throw SchemaError("subject/session ids must cover all " + std::to_string(n) + " windows");
    }
    std::set<std::string> names;
    for (const auto& m : modalities) {
        if (!names.insert(m.name).second) throw SchemaError("duplicate modality " + m.name);
        if (m.time == 0 || m.channels == 0) throw SchemaError("modality " + m.name + " has zero extent");
        if (m.values.size() != n * m.time * m.channels) {
            throw SchemaError("modality " + m.name + " holds " + std::to_string(m.values.size()) +
                              " values, expected " + std::to_string(n * m.time * m.channels));
        }
    }
    if (class_names.empty()) throw SchemaError("dataset declares no classes");
    int max_label = -1;
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= class_names.size()) {
            throw SchemaError("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(class_names.size()) + ")");
        }
        max_label = std::max(max_label, label);
    }
    if (n > 0 && static_cast<std::size_t>(max_label + 1) != class_names.size()) {
        throw SchemaError("class count " + std::to_string(class_names.size()) +
                          " does not equal max label + 1 = " + std::to_string(max_label + 1));
    }
}

void save_canonical(const CanonicalDataset& ds, const fs::path& dir) {
    ds.validate();
    fs::create_directories(dir);

    json meta;
    meta["format"] = kFormatTag;
    meta["version"] = kFormatVersion;
    meta["endianness"] = "little";
    meta["dtype"] = "float32";
    meta["num_windows"] = ds.num_windows();
    meta["num_classes"] = ds.num_classes();
    meta["class_names"] = ds.class_names;
    meta["labels_file"] = "labels.csv";
    meta["modalities"] = json::array();
    for (const auto& m : ds.modalities) {
        const std::string file = m.name + ".bin";
        meta["modalities"].push_back({{"name", m.name},
                                      {"file", file},
                                      {"time", m.time},
                                      {"channels", m.channels},
                                      {"sampling_rate_hz", m.sampling_rate_hz},
                                      {"crc32", payload_crc32(m.values)}});
        std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + (dir / file).string());
        write_f32_le(out, m.values);
    }
    {
        std::ofstream out(dir / "meta.json", std::ios::trunc);
        if (!out) throw DataError("cannot write " + (dir / "meta.json").string());
        out << meta.dump(2) << "\n";
    }
    std::ofstream labels(dir / "labels.csv", std::ios::trunc);
    if (!labels) throw DataError("cannot write labels.csv");
    labels << kLabelsHeader << "\n";
    for (std::size_t i = 0; i < ds.num_windows(); ++i) {
        labels << i << "," << ds.labels[i] << "," << ds.subject_ids[i] << "," << ds.session_ids[i]
               << "\n";
    }
}

CanonicalDataset load_canonical(const fs::path& dir) {
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw DataError("no meta.json in " + dir.string());
    json meta;
    try {
        meta = json::parse(meta_in);
    } catch (const json::parse_error& e) {
        throw MalformedHeaderError(std::string("meta.json is not valid JSON: ") + e.what());
    }
    if (!meta.is_object()) throw MalformedHeaderError("meta.json must hold an object");
    if (header_field<std::string>(meta, "format") != kFormatTag) {
        throw MalformedHeaderError("meta.json format tag is not '" + std::string(kFormatTag) + "'");
    }
    if (header_field<int>(meta, "version") != kFormatVersion) {
        throw MalformedHeaderError("unsupported canonical format version");
    }
    if (header_field<std::string>(meta, "endianness") != "little" ||
        header_field<std::string>(meta, "dtype") != "float32") {
        throw MalformedHeaderError("only little-endian float32 payloads are supported");
    }

    CanonicalDataset ds;
    const auto num_windows = header_field<std::size_t>(meta, "num_windows");
    const auto num_classes = header_field<std::size_t>(meta, "num_classes");
    ds.class_names = header_field<std::vector<std::string>>(meta, "class_names");
    if (ds.class_names.size() != num_classes) {
        throw SchemaError("num_classes disagrees with the class_names list");
    }
    const auto labels_file = header_field<std::string>(meta, "labels_file");
    const auto modalities = header_field<json>(meta, "modalities");
    if (!modalities.is_array() || modalities.empty()) {
        throw MalformedHeaderError("meta.json 'modalities' must be a non-empty array");
    }
    for (const auto& entry : modalities) {
        ModalityData m;
        m.name = header_field<std::string>(entry, "name");
        m.time = header_field<std::size_t>(entry, "time");
        m.channels = header_field<std::size_t>(entry, "channels");
        m.sampling_rate_hz = header_field<double>(entry, "sampling_rate_hz");
        const auto file = header_field<std::string>(entry, "file");
        m.values = read_f32_le(dir / file, num_windows * m.time * m.channels);
        // The checksum is optional so hand-written datasets stay loadable.
        if (entry.contains("crc32") &&
            header_field<std::uint32_t>(entry, "crc32") != payload_crc32(m.values)) {
            throw ChecksumError(file + " does not match its stored crc32");
        }
        ds.modalities.push_back(std::move(m));
    }

    std::ifstream labels(dir / labels_file);
    if (!labels) throw DataError("cannot open " + (dir / labels_file).string());
    std::string line;
    if (!std::getline(labels, line) || line != kLabelsHeader) {
        throw SchemaError("labels.csv must start with '" + std::string(kLabelsHeader) + "'");
    }
    std::size_t line_no = 1;
    while (std::getline(labels, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = parse_csv_ints(line, line_no);
        if (cells.size() != 4) {
            throw SchemaError("labels.csv line " + std::to_string(line_no) + " needs 4 columns");
        }
        if (cells[0] != static_cast<int>(ds.labels.size())) {
            throw SchemaError("labels.csv line " + std::to_string(line_no) +
                              " is out of order: window_index " + std::to_string(cells[0]));
        }
        ds.labels.push_back(cells[1]);
        ds.subject_ids.push_back(cells[2]);
        ds.session_ids.push_back(cells[3]);
    }
    if (ds.labels.size() != num_windows) {
        throw SchemaError("labels.csv has " + std::to_string(ds.labels.size()) +
                          " rows, meta.json declares " + std::to_string(num_windows));
    }
    ds.validate();
    return ds;
}

void SynthConfig::validate() const {
    if (num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
    if (samples_per_class < 1 || time_length < 1 || inertial_channels < 1 ||
        skeleton_channels < 1 || latent_dim < 1 || num_subjects < 1 || num_sessions < 1) {
        throw ConfigError("synthetic extents must all be >= 1");
    }
    if (!(noise_sigma >= 0.0) || !(instance_spread >= 0.0) || !(pair_separation >= 0.0) ||
        !(pattern_amplitude >= 0.0) || !(nuisance_amplitude >= 0.0)) {
        throw ConfigError("synthetic noise and spread parameters must be >= 0");
    }
    if (!(corruption_rate >= 0.0 && corruption_rate <= 1.0)) {
        throw ConfigError("corruption_rate must lie in [0, 1]");
    }
}

SyntheticRenderer::SyntheticRenderer(const SynthConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const Rng root(cfg_.seed);
    const std::size_t latent = cfg_.latent_dim;

    Rng proto_rng = root.derive(1);
    prototypes_.resize(cfg_.num_classes);
    for (std::size_t c = 0; c < cfg_.num_classes; c += 2) {
        std::vector<double> base(latent);
        std::vector<double> offset(latent);
        for (double& v : base) v = proto_rng.normal();
        for (double& v : offset) v = 0.5 * cfg_.pair_separation * proto_rng.normal();
        prototypes_[c] = base;
        for (std::size_t j = 0; j < latent; ++j) prototypes_[c][j] += offset[j];
        if (c + 1 < cfg_.num_classes) {
            prototypes_[c + 1] = base;
            for (std::size_t j = 0; j < latent; ++j) prototypes_[c + 1][j] -= offset[j];
        }
    }

    Rng map_rng = root.derive(2);
    Rng pattern_rng = root.derive(3);
    const std::size_t channels[2] = {cfg_.inertial_channels, cfg_.skeleton_channels};
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(latent));
    for (std::size_t m = 0; m < 2; ++m) {
        Tensor map({channels[m], latent});
        for (double& v : map.data()) v = map_scale * map_rng.normal();
        maps_.push_back(std::move(map));

        // Paired classes share a frequency; phases are per class and channel.
        std::vector<double> freqs(cfg_.num_classes);
        for (std::size_t c = 0; c < cfg_.num_classes; c += 2) {
            const double f = 1.0 + static_cast<double>(pattern_rng.uniform_index(3));
            freqs[c] = f;
            if (c + 1 < cfg_.num_classes) freqs[c + 1] = f;
        }
        freqs_.push_back(std::move(freqs));
        Tensor phases({cfg_.num_classes, channels[m]});
        for (double& v : phases.data()) v = pattern_rng.uniform(0.0, 2.0 * std::numbers::pi);
        phases_.push_back(std::move(phases));
    }
}

std::vector<double> SyntheticRenderer::draw_latent(std::size_t cls, Rng& rng) const {
    std::vector<double> latent = prototypes_.at(cls);
    for (double& v : latent) v += cfg_.instance_spread * rng.normal();
    return latent;
}

Tensor SyntheticRenderer::render(std::size_t modality, std::size_t cls,
                                 std::span<const double> latent, double phase, Rng& rng) const {
    const Tensor& map = maps_.at(modality);
    if (latent.size() != cfg_.latent_dim) throw ShapeError("latent has the wrong dimension");
    const std::size_t channels = map.rows();
    const std::size_t len = cfg_.time_length;
    std::vector<double> offset(channels);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t j = 0; j < latent.size(); ++j) offset[ch] += map(ch, j) * latent[j];
    }
    const double freq = freqs_[modality].at(cls);
    constexpr std::size_t kNuisanceWaves = 2;
    std::vector<std::array<double, 3>> nuisance;  // per channel and wave: amplitude, cycles, phase
    if (cfg_.nuisance_amplitude > 0.0) {
        for (std::size_t k = 0; k < channels * kNuisanceWaves; ++k) {
            const double amp = cfg_.nuisance_amplitude * rng.normal();
            const double cycles = 5.0 + static_cast<double>(rng.uniform_index(6));
            nuisance.push_back({amp, cycles, rng.uniform(0.0, 2.0 * std::numbers::pi)});
        }
    }
    Tensor out({len, channels});
    for (std::size_t t = 0; t < len; ++t) {
        const double time = static_cast<double>(t) / static_cast<double>(len) + phase;
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const double pattern = cfg_.pattern_amplitude *
                                   std::sin(2.0 * std::numbers::pi * freq * time +
                                            phases_[modality](cls, ch));
            double noise = 0.0;
            if (cfg_.noise_sigma > 0.0) noise = cfg_.noise_sigma * rng.normal();
            if (!nuisance.empty()) {
                const double u = static_cast<double>(t) / static_cast<double>(len);
                for (std::size_t k = 0; k < kNuisanceWaves; ++k) {
                    const auto& [amp, cycles, ph] = nuisance[ch * kNuisanceWaves + k];
                    noise += amp * std::sin(2.0 * std::numbers::pi * cycles * u + ph);
                }
            }
            out(t, ch) = offset[ch] + pattern + noise;
        }
    }
    return out;
}

CanonicalDataset generate_synthetic(const SynthConfig& cfg) {
    const SyntheticRenderer renderer(cfg);
    const std::size_t total = cfg.num_classes * cfg.samples_per_class;

    CanonicalDataset ds;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));
    ds.modalities.push_back({kInertial, cfg.time_length, cfg.inertial_channels, 50.0, {}});
    ds.modalities.push_back({kSkeleton, cfg.time_length, cfg.skeleton_channels, 30.0, {}});
    for (auto& m : ds.modalities) m.values.reserve(total * m.time * m.channels);

    Rng rng = Rng(cfg.seed).derive(4);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        for (std::size_t j = 0; j < cfg.samples_per_class; ++j) {
            const std::size_t w = c * cfg.samples_per_class + j;
            const auto latent = renderer.draw_latent(c, rng);
            const double phase = rng.uniform();

            std::size_t skel_class = c;
            std::vector<double> skel_latent = latent;
            double skel_phase = cfg.shared_phase ? phase : rng.uniform();
            if (rng.uniform() < cfg.corruption_rate) {
                skel_class = rng.uniform_index(cfg.num_classes);
                skel_latent = renderer.draw_latent(skel_class, rng);
                skel_phase = rng.uniform();
            }
            const Tensor inertial = renderer.render(0, c, latent, phase, rng);
            const Tensor skeleton = renderer.render(1, skel_class, skel_latent, skel_phase, rng);
            for (double v : inertial.data()) ds.modalities[0].values.push_back(static_cast<float>(v));
            for (double v : skeleton.data()) ds.modalities[1].values.push_back(static_cast<float>(v));

            ds.labels.push_back(static_cast<int>(c));
            ds.subject_ids.push_back(static_cast<int>(w % cfg.num_subjects) + 1);
            ds.session_ids.push_back(static_cast<int>((w / cfg.num_subjects) % cfg.num_sessions) + 1);
        }
    }
    ds.validate();
    return ds;
}

std::string to_string(SplitProtocol p) {
    switch (p) {
        case SplitProtocol::cross_subject_odd_even: return "cross_subject_odd_even";
        case SplitProtocol::cross_subject_first_k: return "cross_subject_first_k";
        case SplitProtocol::cross_session_top_fraction: return "cross_session_top_fraction";
    }
    return "unknown";
}

SplitProtocol split_protocol_from_string(const std::string& name) {
    if (name == "cross_subject_odd_even") return SplitProtocol::cross_subject_odd_even;
    if (name == "cross_subject_first_k") return SplitProtocol::cross_subject_first_k;
    if (name == "cross_session_top_fraction") return SplitProtocol::cross_session_top_fraction;
    throw ConfigError("unknown split protocol '" + name + "'");
}

SplitSpec make_split(const CanonicalDataset& ds, const SplitProtocolSpec& protocol) {
    const std::size_t n = ds.num_windows();
    if (ds.subject_ids.size() != n) throw SchemaError("split needs a subject id for every window");
    if (protocol.protocol == SplitProtocol::cross_session_top_fraction &&
        ds.session_ids.size() != n) {
        throw SchemaError("cross-session split needs a session id for every window");
    }

    SplitSpec split;
    split.protocol = protocol;
    std::vector<bool> in_train(n, false);

    switch (protocol.protocol) {
        case SplitProtocol::cross_subject_odd_even:
            for (std::size_t i = 0; i < n; ++i) in_train[i] = ds.subject_ids[i] % 2 != 0;
            break;
        case SplitProtocol::cross_subject_first_k: {
            const std::set<int> subjects(ds.subject_ids.begin(), ds.subject_ids.end());
            std::set<int> chosen;
            for (int s : subjects) {
                if (chosen.size() >= protocol.first_k) break;
                chosen.insert(s);
            }
            for (std::size_t i = 0; i < n; ++i) in_train[i] = chosen.contains(ds.subject_ids[i]);
            break;
        }
        case SplitProtocol::cross_session_top_fraction: {
            const double f = protocol.session_fraction;
            if (!(f > 0.0 && f <= 1.0)) throw ConfigError("session fraction must lie in (0, 1]");
            std::map<int, std::set<int>> sessions;
            for (std::size_t i = 0; i < n; ++i) sessions[ds.subject_ids[i]].insert(ds.session_ids[i]);
            std::map<int, std::set<int>> train_sessions;
            for (const auto& [subject, ids] : sessions) {
                // The small slack keeps e.g. 0.8 * 5 from rounding up to 5.
                const auto keep = static_cast<std::size_t>(
                    std::ceil(f * static_cast<double>(ids.size()) - 1e-9));
                auto it = ids.begin();
                for (std::size_t k = 0; k < keep && it != ids.end(); ++k, ++it) {
                    train_sessions[subject].insert(*it);
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                in_train[i] = train_sessions[ds.subject_ids[i]].contains(ds.session_ids[i]);
            }
            break;
        }
    }
    for (std::size_t i = 0; i < n; ++i) (in_train[i] ? split.train : split.test).push_back(i);
    return split;
}

std::vector<std::size_t> stratified_label_subset(const CanonicalDataset& ds,
                                                 std::span<const std::size_t> train,
                                                 double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("label fraction must lie in (0, 1], got " + std::to_string(fraction));
    }
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
    for (std::size_t idx : train) {
        by_class.at(static_cast<std::size_t>(ds.labels.at(idx))).push_back(idx);
    }
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) {
            throw StratificationError("class " + std::to_string(c) + " has no training samples");
        }
        std::size_t keep = members.size();
        if (fraction < 1.0) {
            const auto rounded = std::lround(fraction * static_cast<double>(members.size()));
            keep = std::max<std::size_t>(1, static_cast<std::size_t>(rounded));
            rng.shuffle(std::span<std::size_t>(members));
        }
        out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    std::sort(out.begin(), out.end());
    return out;
}

StandardizedView::StandardizedView(const CanonicalDataset& ds,
                                   std::span<const std::size_t> fit_indices)
    : ds_(&ds) {
    if (fit_indices.empty()) throw DataError("standardization needs at least one window");
    for (const auto& m : ds.modalities) {
        std::vector<double> sum(m.channels, 0.0);
        std::vector<double> sq(m.channels, 0.0);
        const std::size_t stride = m.time * m.channels;
        for (std::size_t idx : fit_indices) {
            for (std::size_t k = 0; k < stride; ++k) {
                const double v = m.values[idx * stride + k];
                sum[k % m.channels] += v;
                sq[k % m.channels] += v * v;
            }
        }
        const double count = static_cast<double>(fit_indices.size() * m.time);
        std::vector<double> mean(m.channels);
        std::vector<double> sd(m.channels);
        for (std::size_t c = 0; c < m.channels; ++c) {
            mean[c] = sum[c] / count;
            const double var = std::max(0.0, sq[c] / count - mean[c] * mean[c]);
            sd[c] = var > 1e-16 ? std::sqrt(var) : 1.0;
        }
        mean_.push_back(std::move(mean));
        std_.push_back(std::move(sd));
    }
}

Tensor StandardizedView::window(std::size_t modality, std::size_t index) const {
    Tensor w = ds_->modalities.at(modality).window(index);
    const auto& mean = mean_[modality];
    const auto& sd = std_[modality];
    for (std::size_t t = 0; t < w.rows(); ++t) {
        for (std::size_t c = 0; c < w.cols(); ++c) w(t, c) = (w(t, c) - mean[c]) / sd[c];
    }
    return w;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, bool training) {
    if (window == 0) throw ConfigError("window length must be >= 1");
    std::vector<std::size_t> starts;
    if (length < window) return starts;
    const std::size_t hop = training ? std::max<std::size_t>(1, window / 2) : window;
    for (std::size_t s = 0; s + window <= length; s += hop) starts.push_back(s);
    return starts;
}

std::vector<Tensor> segment_recording(const Tensor& recording, std::size_t window, bool training) {
    if (recording.rank() != 2) throw ShapeError("recording must be [time x channels]");
    std::vector<Tensor> out;
    for (std::size_t s : window_starts(recording.rows(), window, training)) {
        Tensor w({window, recording.cols()});
        const auto first = recording.data().begin() + static_cast<std::ptrdiff_t>(s * recording.cols());
        std::copy(first, first + static_cast<std::ptrdiff_t>(window * recording.cols()),
                  w.data().begin());
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace hardneg
