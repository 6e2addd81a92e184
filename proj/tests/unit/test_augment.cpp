#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hardneg/augment.hpp"
#include "hardneg/errors.hpp"
#include "helpers.hpp"

using namespace hardneg;

namespace {

std::vector<double> sorted_values(const Tensor& t) {
    std::vector<double> v = t.data();
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

TEST_CASE("identity settings leave the window unchanged") {
    Rng rng(1);
    const Tensor w = testing::random_matrix(20, 6, rng);
    CHECK(apply_augmentation(Jitter{0.0}, w, rng) == w);
    CHECK(apply_augmentation(Scale{1.0, 1.0}, w, rng) == w);
    CHECK(apply_augmentation(PermuteSegments{1, 1}, w, rng) == w);

    AugmentSpec never = AugmentSpec::inertial_default();
    for (auto& step : never.steps) step.probability = 0.0;
    never.steps.push_back({Rotate{}, 0.0});
    never.steps.push_back({Shear{}, 0.0});
    never.steps.push_back({ResizedCrop{}, 0.0});
    CHECK(apply_pipeline(never, w, rng) == w);
}

TEST_CASE("pipelines are deterministic given the seed") {
    Rng data(2);
    const Tensor w = testing::random_matrix(24, 9, data);
    AugmentSpec spec = AugmentSpec::skeleton_default();
    spec.steps.push_back({Jitter{0.1}, 0.5});
    spec.steps.push_back({PermuteSegments{}, 0.5});
    Rng a(77), b(77), c(78);
    const Tensor out_a = apply_pipeline(spec, w, a);
    CHECK(out_a == apply_pipeline(spec, w, b));
    CHECK_FALSE(out_a == apply_pipeline(spec, w, c));
}

TEST_CASE("rotation preserves every triplet norm") {
    Rng rng(3);
    const Tensor w = testing::random_matrix(30, 9, rng);
    AugmentSpec spec{{{Rotate{}, 1.0}}};
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor out = apply_pipeline(spec, w, rng);
        for (std::size_t t = 0; t < w.rows(); ++t) {
            for (std::size_t c = 0; c < 9; c += 3) {
                const double before = std::hypot(w(t, c), w(t, c + 1), w(t, c + 2));
                const double after = std::hypot(out(t, c), out(t, c + 1), out(t, c + 2));
                CHECK(std::abs(before - after) < 1e-9);
            }
        }
    }
}

TEST_CASE("random rotations are orthonormal with determinant one") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto r = random_rotation(rng);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += r[i * 3 + k] * r[j * 3 + k];
                CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-12);
            }
        }
        const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                           r[2] * (r[3] * r[7] - r[4] * r[6]);
        CHECK(std::abs(det - 1.0) < 1e-12);
    }
}

TEST_CASE("permutations keep the multiset of values") {
    Rng rng(5);
    const Tensor w = testing::random_matrix(17, 6, rng);
    for (int trial = 0; trial < 20; ++trial) {
        CHECK(sorted_values(apply_augmentation(ChannelShuffle{}, w, rng)) == sorted_values(w));
        CHECK(sorted_values(apply_augmentation(PermuteSegments{2, 5}, w, rng)) == sorted_values(w));
    }
}

TEST_CASE("every transform preserves the shape") {
    Rng rng(6);
    const Tensor w = testing::random_matrix(21, 6, rng);
    const std::vector<Transform> all{Jitter{},         Scale{},  Rotate{},     PermuteSegments{},
                                     ChannelShuffle{}, Shear{}, ResizedCrop{}};
    for (const auto& t : all) {
        CAPTURE(transform_name(t));
        const Tensor out = apply_augmentation(t, w, rng);
        CHECK(out.shape() == w.shape());
        CHECK(out.all_finite());
    }
}

TEST_CASE("full-window crop is the identity") {
    Rng rng(7);
    const Tensor w = testing::random_matrix(15, 3, rng);
    const Tensor out = apply_augmentation(ResizedCrop{1.0, 1.0}, w, rng);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(out[i] - w[i]) < 1e-12);
}

TEST_CASE("jitter has the requested spread") {
    Rng rng(8);
    const Tensor out = apply_augmentation(Jitter{0.1}, Tensor({10000, 10}), rng);
    double sum = 0.0, sq = 0.0;
    for (double v : out.data()) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(out.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(sd >= 0.09);
    CHECK(sd <= 0.11);
}

TEST_CASE("invalid parameters and channel counts raise ConfigError") {
    Rng rng(9);
    const Tensor w = testing::random_matrix(10, 4, rng);
    CHECK_THROWS_AS(apply_augmentation(Rotate{}, w, rng), ConfigError);
    CHECK_THROWS_AS(apply_augmentation(Shear{}, w, rng), ConfigError);
    CHECK_THROWS_AS(AugmentSpec({{{Rotate{}, 1.0}}}).validate(4), ConfigError);
    CHECK_NOTHROW(AugmentSpec({{{Rotate{}, 1.0}}}).validate(6));
    CHECK_THROWS_AS(AugmentSpec({{{Jitter{-1.0}, 1.0}}}).validate(), ConfigError);
    CHECK_THROWS_AS(AugmentSpec({{{Scale{0.0, 1.0}, 1.0}}}).validate(), ConfigError);
    CHECK_THROWS_AS(AugmentSpec({{{PermuteSegments{0, 2}, 1.0}}}).validate(), ConfigError);
    CHECK_THROWS_AS(AugmentSpec({{{ResizedCrop{0.0, 1.0}, 1.0}}}).validate(), ConfigError);
    CHECK_THROWS_AS(AugmentSpec({{{Jitter{}, 1.5}}}).validate(), ConfigError);
}
