#include <cmath>
#include <cstring>
#include <numeric>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "hardneg/dataset.hpp"
#include "hardneg/errors.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace hardneg;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth() {
    SynthConfig cfg;
    cfg.num_classes = 4;
    cfg.samples_per_class = 12;
    cfg.time_length = 16;
    return cfg;
}

// Multinomial logistic regression on flattened, standardized raw windows,
// trained by full-batch gradient descent. Returns test accuracy.
double raw_linear_probe(const CanonicalDataset& ds, std::size_t modality, const SplitSpec& split) {
    const ModalityData& m = ds.modalities[modality];
    const std::size_t d = m.time * m.channels;
    const std::size_t k = ds.num_classes();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t i : split.train) {
        for (std::size_t f = 0; f < d; ++f) mean[f] += m.values[i * d + f];
    }
    for (double& v : mean) v /= static_cast<double>(split.train.size());
    for (std::size_t i : split.train) {
        for (std::size_t f = 0; f < d; ++f) sd[f] += std::pow(m.values[i * d + f] - mean[f], 2);
    }
    for (double& v : sd) v = std::sqrt(v / static_cast<double>(split.train.size())) + 1e-8;
    auto feature = [&](std::size_t i, std::size_t f) { return (m.values[i * d + f] - mean[f]) / sd[f]; };

    std::vector<double> w(k * (d + 1), 0.0);
    auto logits = [&](std::size_t i) {
        std::vector<double> out(k);
        for (std::size_t c = 0; c < k; ++c) {
            double s = w[c * (d + 1) + d];
            for (std::size_t f = 0; f < d; ++f) s += w[c * (d + 1) + f] * feature(i, f);
            out[c] = s;
        }
        return out;
    };
    const double lr = 0.5;
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<double> grad(w.size(), 0.0);
        for (std::size_t i : split.train) {
            auto p = logits(i);
            const double mx = *std::max_element(p.begin(), p.end());
            double z = 0.0;
            for (double& v : p) z += (v = std::exp(v - mx));
            for (std::size_t c = 0; c < k; ++c) {
                const double g = p[c] / z - (static_cast<int>(c) == ds.labels[i] ? 1.0 : 0.0);
                for (std::size_t f = 0; f < d; ++f) grad[c * (d + 1) + f] += g * feature(i, f);
                grad[c * (d + 1) + d] += g;
            }
        }
        for (std::size_t j = 0; j < w.size(); ++j) {
            w[j] -= lr * grad[j] / static_cast<double>(split.train.size());
        }
    }
    std::size_t correct = 0;
    for (std::size_t i : split.test) {
        const auto p = logits(i);
        correct += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == ds.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

CanonicalDataset with_ids(std::vector<int> subjects, std::vector<int> sessions) {
    CanonicalDataset ds;
    ds.class_names = {"a"};
    ds.labels.assign(subjects.size(), 0);
    ds.subject_ids = std::move(subjects);
    ds.session_ids = std::move(sessions);
    return ds;
}

std::set<int> subjects_of(const CanonicalDataset& ds, const std::vector<std::size_t>& idx) {
    std::set<int> out;
    for (std::size_t i : idx) out.insert(ds.subject_ids[i]);
    return out;
}

void check_partition(const SplitSpec& split, std::size_t n) {
    std::vector<int> seen(n, 0);
    for (std::size_t i : split.train) ++seen.at(i);
    for (std::size_t i : split.test) ++seen.at(i);
    for (int s : seen) CHECK(s == 1);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

TEST_CASE("canonical round trip is bitwise") {
    const auto dir = testing::scratch_dir("roundtrip");
    const CanonicalDataset ds = generate_synthetic(small_synth());
    save_canonical(ds, dir);
    const CanonicalDataset back = load_canonical(dir);
    CHECK(back == ds);
    for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
        CHECK(std::memcmp(back.modalities[m].values.data(), ds.modalities[m].values.data(),
                          ds.modalities[m].values.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("canonical load errors are distinct") {
    const auto dir = testing::scratch_dir("load_errors");
    const CanonicalDataset ds = generate_synthetic(small_synth());

    SUBCASE("payload truncated by one byte") {
        save_canonical(ds, dir);
        const std::string blob = read_file(dir / "inertial.bin");
        write_file(dir / "inertial.bin", blob.substr(0, blob.size() - 1));
        CHECK_THROWS_AS(load_canonical(dir), TruncatedPayloadError);
    }
    SUBCASE("class count disagrees with labels") {
        save_canonical(ds, dir);
        auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
        meta["class_names"].push_back("extra");
        meta["num_classes"] = meta["class_names"].size();
        write_file(dir / "meta.json", meta.dump());
        CHECK_THROWS_AS(load_canonical(dir), SchemaError);
    }
    SUBCASE("flipped payload byte fails the checksum") {
        save_canonical(ds, dir);
        std::string blob = read_file(dir / "skeleton.bin");
        blob[100] = static_cast<char>(blob[100] ^ 0x01);
        write_file(dir / "skeleton.bin", blob);
        CHECK_THROWS_AS(load_canonical(dir), ChecksumError);
    }
    SUBCASE("checksum is optional") {
        save_canonical(ds, dir);
        auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
        for (auto& m : meta["modalities"]) m.erase("crc32");
        write_file(dir / "meta.json", meta.dump());
        CHECK(load_canonical(dir) == ds);
    }
    SUBCASE("malformed header") {
        save_canonical(ds, dir);
        write_file(dir / "meta.json", "{ not json");
        CHECK_THROWS_AS(load_canonical(dir), MalformedHeaderError);
        write_file(dir / "meta.json", "{}");
        CHECK_THROWS_AS(load_canonical(dir), MalformedHeaderError);
    }
    SUBCASE("labels file shorter than the payload") {
        save_canonical(ds, dir);
        std::string labels = read_file(dir / "labels.csv");
        labels = labels.substr(0, labels.rfind('\n', labels.size() - 2) + 1);
        write_file(dir / "labels.csv", labels);
        CHECK_THROWS_AS(load_canonical(dir), DataError);
    }
    SUBCASE("missing directory") {
        CHECK_THROWS_AS(load_canonical(dir / "nope"), DataError);
    }
}

TEST_CASE("noiseless rendering is deterministic") {
    SynthConfig cfg = small_synth();
    cfg.noise_sigma = 0.0;
    cfg.nuisance_amplitude = 0.0;
    const SyntheticRenderer renderer(cfg);
    Rng latent_rng(3);
    const auto latent = renderer.draw_latent(2, latent_rng);
    Rng a(10), b(20);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(renderer.render(m, 2, latent, 0.25, a) == renderer.render(m, 2, latent, 0.25, b));
    }
}

TEST_CASE("synthetic counts, balance and ids") {
    SynthConfig cfg;
    cfg.num_classes = 10;
    cfg.samples_per_class = 50;
    const CanonicalDataset ds = generate_synthetic(cfg);
    CHECK(ds.num_windows() == 500);
    std::map<int, int> counts;
    for (int l : ds.labels) ++counts[l];
    CHECK(counts.size() == 10);
    for (const auto& [label, count] : counts) CHECK(count == 50);
    CHECK(std::set<int>(ds.subject_ids.begin(), ds.subject_ids.end()).size() == 8);
    CHECK(std::set<int>(ds.session_ids.begin(), ds.session_ids.end()).size() == 5);
    CHECK(ds.modality(kInertial).num_windows() == 500);
    CHECK(ds.modality(kSkeleton).num_windows() == 500);
    CHECK(generate_synthetic(cfg) == ds);
}

TEST_CASE("raw inertial windows are linearly separable at low noise") {
    // Every per-window noise source is made small: observation noise,
    // high-frequency nuisance and the latent's spread around its prototype.
    SynthConfig cfg;
    cfg.noise_sigma = 0.05;
    cfg.nuisance_amplitude = 0.05;
    cfg.instance_spread = 0.05;
    const CanonicalDataset ds = generate_synthetic(cfg);
    const SplitSpec split = make_split(ds, {});
    const double acc = raw_linear_probe(ds, 0, split);
    CAPTURE(acc);
    CHECK(acc > 0.9);
}

TEST_CASE("split protocol examples") {
    {
        std::vector<int> subjects;
        for (int r = 0; r < 3; ++r) for (int s = 1; s <= 8; ++s) subjects.push_back(s);
        const CanonicalDataset ds = with_ids(subjects, std::vector<int>(subjects.size(), 1));
        const SplitSpec split = make_split(ds, {SplitProtocol::cross_subject_odd_even});
        CHECK(subjects_of(ds, split.train) == std::set<int>{1, 3, 5, 7});
        CHECK(subjects_of(ds, split.test) == std::set<int>{2, 4, 6, 8});
    }
    {
        std::vector<int> subjects;
        for (int s = 20; s >= 1; --s) subjects.push_back(s);
        const CanonicalDataset ds = with_ids(subjects, std::vector<int>(20, 1));
        const SplitSpec split = make_split(ds, {SplitProtocol::cross_subject_first_k, 16});
        std::set<int> expected;
        for (int s = 1; s <= 16; ++s) expected.insert(s);
        CHECK(subjects_of(ds, split.train) == expected);
        CHECK(subjects_of(ds, split.test) == std::set<int>{17, 18, 19, 20});
    }
    {
        const CanonicalDataset ds = with_ids({1, 1, 1, 1, 1, 1}, {5, 1, 2, 3, 4, 5});
        const SplitSpec split = make_split(ds, {SplitProtocol::cross_session_top_fraction, 16, 0.8});
        CHECK(split.train == std::vector<std::size_t>{1, 2, 3, 4});
        CHECK(split.test == std::vector<std::size_t>{0, 5});
    }
}

TEST_CASE("splits are disjoint and cover every window") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + rng.uniform_index(200);
        std::vector<int> subjects(n), sessions(n);
        for (std::size_t i = 0; i < n; ++i) {
            subjects[i] = 1 + static_cast<int>(rng.uniform_index(25));
            sessions[i] = 1 + static_cast<int>(rng.uniform_index(7));
        }
        const CanonicalDataset ds = with_ids(subjects, sessions);
        for (const SplitProtocolSpec& p :
             {SplitProtocolSpec{SplitProtocol::cross_subject_odd_even},
              SplitProtocolSpec{SplitProtocol::cross_subject_first_k, 1 + rng.uniform_index(30)},
              SplitProtocolSpec{SplitProtocol::cross_session_top_fraction, 16, rng.uniform(0.05, 1.0)}}) {
            const SplitSpec split = make_split(ds, p);
            check_partition(split, n);
            if (p.protocol != SplitProtocol::cross_session_top_fraction) {
                for (int s : subjects_of(ds, split.train)) CHECK(subjects_of(ds, split.test).count(s) == 0);
            }
        }
    }
}

TEST_CASE("split errors") {
    CanonicalDataset ds = with_ids({1, 2}, {1, 1});
    ds.session_ids.clear();
    CHECK_NOTHROW(make_split(ds, {}));
    CHECK_THROWS_AS(make_split(ds, {SplitProtocol::cross_session_top_fraction}), SchemaError);
    ds.subject_ids.pop_back();
    CHECK_THROWS_AS(make_split(ds, {}), SchemaError);
    CHECK_THROWS_AS(split_protocol_from_string("random"), ConfigError);
}

TEST_CASE("stratified subset examples") {
    CanonicalDataset ds;
    for (int c = 0; c < 10; ++c) ds.class_names.push_back("c" + std::to_string(c));
    for (int i = 0; i < 100; ++i) ds.labels.push_back(i % 10);
    std::vector<std::size_t> train(100);
    std::iota(train.begin(), train.end(), 0);
    Rng rng(1);
    CHECK(stratified_label_subset(ds, train, 1.0, rng) == train);
    const auto five = stratified_label_subset(ds, train, 0.05, rng);
    CHECK(five.size() == 10);
    std::set<int> classes;
    for (std::size_t i : five) classes.insert(ds.labels[i]);
    CHECK(classes.size() == 10);

    Rng a(4), b(4);
    CHECK(stratified_label_subset(ds, train, 0.3, a) == stratified_label_subset(ds, train, 0.3, b));
    CHECK_THROWS_AS(stratified_label_subset(ds, train, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(stratified_label_subset(ds, train, 1.5, rng), ConfigError);
    const std::vector<std::size_t> missing_class{0, 1, 2};
    CHECK_THROWS_AS(stratified_label_subset(ds, missing_class, 0.5, rng), StratificationError);
}

TEST_CASE("stratified subsets stay proportional on imbalanced classes") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        CanonicalDataset ds;
        const std::size_t k = 2 + rng.uniform_index(8);
        std::vector<std::size_t> per_class(k);
        for (std::size_t c = 0; c < k; ++c) {
            ds.class_names.push_back("c" + std::to_string(c));
            per_class[c] = 1 + rng.uniform_index(120);
            for (std::size_t j = 0; j < per_class[c]; ++j) ds.labels.push_back(static_cast<int>(c));
        }
        std::vector<std::size_t> train(ds.labels.size());
        std::iota(train.begin(), train.end(), 0);
        rng.shuffle(std::span<std::size_t>(train));
        const double fraction = trial % 2 ? 0.02 : rng.uniform(0.01, 1.0);
        const auto subset = stratified_label_subset(ds, train, fraction, rng);
        CHECK(std::is_sorted(subset.begin(), subset.end()));
        CHECK(std::set<std::size_t>(subset.begin(), subset.end()).size() == subset.size());
        std::vector<std::size_t> got(k, 0);
        for (std::size_t i : subset) ++got[static_cast<std::size_t>(ds.labels[i])];
        for (std::size_t c = 0; c < k; ++c) {
            const double exact = fraction * static_cast<double>(per_class[c]);
            CHECK(got[c] >= 1);
            CHECK(std::abs(static_cast<double>(got[c]) - std::max(1.0, exact)) <= 1.0);
        }
    }
}

TEST_CASE("window starts and segmentation") {
    CHECK(window_starts(10, 4, true) == std::vector<std::size_t>{0, 2, 4, 6});
    CHECK(window_starts(10, 4, false) == std::vector<std::size_t>{0, 4});
    CHECK(window_starts(3, 4, true).empty());
    CHECK(window_starts(5, 1, true) == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(window_starts(5, 0, true), ConfigError);

    Tensor rec({10, 2});
    for (std::size_t i = 0; i < rec.size(); ++i) rec[i] = static_cast<double>(i);
    const auto windows = segment_recording(rec, 4, true);
    REQUIRE(windows.size() == 4);
    CHECK(windows[1](0, 0) == rec(2, 0));
    CHECK(windows[3](3, 1) == rec(9, 1));
    CHECK_THROWS_AS(segment_recording(Tensor({10}), 4, true), ShapeError);
}

TEST_CASE("standardized view uses only the fit subset") {
    const CanonicalDataset ds = generate_synthetic(small_synth());
    const SplitSpec split = make_split(ds, {});
    const StandardizedView view(ds, split.train);
    for (std::size_t m = 0; m < 2; ++m) {
        const std::size_t ch = ds.modalities[m].channels;
        std::vector<double> sum(ch, 0.0), sq(ch, 0.0);
        double count = 0.0;
        for (std::size_t i : split.train) {
            const Tensor w = view.window(m, i);
            for (std::size_t t = 0; t < w.rows(); ++t) {
                for (std::size_t c = 0; c < ch; ++c) {
                    sum[c] += w(t, c);
                    sq[c] += w(t, c) * w(t, c);
                }
                count += 1.0;
            }
        }
        for (std::size_t c = 0; c < ch; ++c) {
            CHECK(std::abs(sum[c] / count) < 1e-9);
            CHECK(std::abs(sq[c] / count - 1.0) < 1e-6);
        }
    }
}
