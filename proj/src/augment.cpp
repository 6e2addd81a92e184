#include "hardneg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hardneg/errors.hpp"

namespace hardneg {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_triplets(std::size_t channels, const char* what) {
    if (channels % 3 != 0) {
        throw ConfigError(std::string(what) + " needs a channel count divisible by 3, got " +
                          std::to_string(channels));
    }
}

Tensor apply_triplet_matrix(const Tensor& window, const std::array<double, 9>& m) {
    Tensor out = window;
    for (std::size_t t = 0; t < window.rows(); ++t) {
        for (std::size_t c = 0; c + 2 < window.cols(); c += 3) {
            const double x = window(t, c);
            const double y = window(t, c + 1);
            const double z = window(t, c + 2);
            out(t, c) = m[0] * x + m[1] * y + m[2] * z;
            out(t, c + 1) = m[3] * x + m[4] * y + m[5] * z;
            out(t, c + 2) = m[6] * x + m[7] * y + m[8] * z;
        }
    }
    return out;
}

Tensor jitter(const Jitter& p, const Tensor& window, Rng& rng) {
    if (p.sigma == 0.0) return window;
    Tensor out = window;
    for (double& v : out.data()) v += p.sigma * rng.normal();
    return out;
}

Tensor scale(const Scale& p, const Tensor& window, Rng& rng) {
    Tensor out = window;
    for (std::size_t c = 0; c < window.cols(); ++c) {
        const double factor = rng.uniform(p.low, p.high);
        for (std::size_t t = 0; t < window.rows(); ++t) out(t, c) *= factor;
    }
    return out;
}

Tensor permute_segments(const PermuteSegments& p, const Tensor& window, Rng& rng) {
    const std::size_t len = window.rows();
    const auto span = static_cast<std::size_t>(p.max_segments - p.min_segments + 1);
    std::size_t k = static_cast<std::size_t>(p.min_segments) + rng.uniform_index(span);
    k = std::min(k, len);
    if (k <= 1) return window;

    std::vector<std::size_t> bounds(k + 1);
    for (std::size_t i = 0; i <= k; ++i) bounds[i] = i * len / k;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));

    Tensor out(window.shape());
    std::size_t dst = 0;
    for (std::size_t seg : order) {
        for (std::size_t t = bounds[seg]; t < bounds[seg + 1]; ++t, ++dst) {
            std::copy(window.row(t).begin(), window.row(t).end(), out.row(dst).begin());
        }
    }
    return out;
}

Tensor channel_shuffle(const Tensor& window, Rng& rng) {
    std::vector<std::size_t> perm(window.cols());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor out(window.shape());
    for (std::size_t t = 0; t < window.rows(); ++t) {
        for (std::size_t c = 0; c < window.cols(); ++c) out(t, c) = window(t, perm[c]);
    }
    return out;
}

Tensor shear(const Shear& p, const Tensor& window, Rng& rng) {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            if (r != c) m[r * 3 + c] = rng.uniform(-p.magnitude, p.magnitude);
        }
    }
    return apply_triplet_matrix(window, m);
}

Tensor resized_crop(const ResizedCrop& p, const Tensor& window, Rng& rng) {
    const std::size_t len = window.rows();
    if (len < 2) return window;
    const double fraction = rng.uniform(p.min_fraction, p.max_fraction);
    auto crop = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(len)));
    crop = std::clamp<std::size_t>(crop, 2, len);
    const std::size_t start = rng.uniform_index(len - crop + 1);

    Tensor out(window.shape());
    const double step = static_cast<double>(crop - 1) / static_cast<double>(len - 1);
    for (std::size_t t = 0; t < len; ++t) {
        const double pos = static_cast<double>(start) + step * static_cast<double>(t);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        lo = std::min(lo, start + crop - 1);
        const std::size_t hi = std::min(lo + 1, start + crop - 1);
        const double frac = pos - static_cast<double>(lo);
        for (std::size_t c = 0; c < window.cols(); ++c) {
            out(t, c) = (1.0 - frac) * window(lo, c) + frac * window(hi, c);
        }
    }
    return out;
}

}  // namespace

std::string transform_name(const Transform& t) {
    return std::visit(Overloaded{
                          [](const Jitter&) { return std::string("jitter"); },
                          [](const Scale&) { return std::string("scale"); },
                          [](const Rotate&) { return std::string("rotate"); },
                          [](const PermuteSegments&) { return std::string("permute_segments"); },
                          [](const ChannelShuffle&) { return std::string("channel_shuffle"); },
                          [](const Shear&) { return std::string("shear"); },
                          [](const ResizedCrop&) { return std::string("resized_crop"); },
                      },
                      t);
}

void AugmentSpec::validate(std::size_t channels) const {
    for (const auto& step : steps) {
        const std::string name = transform_name(step.transform);
        if (!(step.probability >= 0.0 && step.probability <= 1.0)) {
            throw ConfigError(name + " probability must lie in [0, 1]");
        }
        std::visit(Overloaded{
                       [&](const Jitter& p) {
                           if (!(p.sigma >= 0.0)) throw ConfigError("jitter sigma must be >= 0");
                       },
                       [&](const Scale& p) {
                           if (!(p.low > 0.0 && p.high >= p.low)) {
                               throw ConfigError("scale range must satisfy 0 < low <= high");
                           }
                       },
                       [&](const Rotate&) {
                           if (channels) require_triplets(channels, "rotate");
                       },
                       [&](const PermuteSegments& p) {
                           if (p.min_segments < 1 || p.max_segments < p.min_segments) {
                               throw ConfigError(
                                   "permute_segments needs 1 <= min_segments <= max_segments");
                           }
                       },
                       [&](const ChannelShuffle&) {},
                       [&](const Shear& p) {
                           if (!(p.magnitude >= 0.0)) {
                               throw ConfigError("shear magnitude must be >= 0");
                           }
                           if (channels) require_triplets(channels, "shear");
                       },
                       [&](const ResizedCrop& p) {
                           if (!(p.min_fraction > 0.0 && p.max_fraction <= 1.0 &&
                                 p.min_fraction <= p.max_fraction)) {
                               throw ConfigError("resized_crop fractions must lie in (0, 1]");
                           }
                       },
                   },
                   step.transform);
    }
}

AugmentSpec AugmentSpec::inertial_default() {
    return {{{Jitter{}, 0.5}, {Scale{}, 0.5}, {PermuteSegments{}, 0.5}, {ChannelShuffle{}, 0.5}}};
}

AugmentSpec AugmentSpec::skeleton_default() {
    return {{{Jitter{}, 0.5},
             {Scale{}, 0.5},
             {Rotate{}, 0.5},
             {Shear{}, 0.5},
             {ResizedCrop{}, 0.5}}};
}

std::array<double, 9> random_rotation(Rng& rng) {
    // Shoemake's construction gives a quaternion uniform on S^3.
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    const double two_pi = 2.0 * std::numbers::pi;
    const double x = a * std::sin(two_pi * u2);
    const double y = a * std::cos(two_pi * u2);
    const double z = b * std::sin(two_pi * u3);
    const double w = b * std::cos(two_pi * u3);
    return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
            2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

Tensor apply_augmentation(const Transform& transform, const Tensor& window, Rng& rng) {
    if (window.rank() != 2 || window.empty()) {
        throw ShapeError("augmentation needs a non-empty [time x channels] window");
    }
    AugmentSpec{{{transform, 1.0}}}.validate(window.cols());
    return std::visit(Overloaded{
                          [&](const Jitter& p) { return jitter(p, window, rng); },
                          [&](const Scale& p) { return scale(p, window, rng); },
                          [&](const Rotate&) {
                              return apply_triplet_matrix(window, random_rotation(rng));
                          },
                          [&](const PermuteSegments& p) { return permute_segments(p, window, rng); },
                          [&](const ChannelShuffle&) { return channel_shuffle(window, rng); },
                          [&](const Shear& p) { return shear(p, window, rng); },
                          [&](const ResizedCrop& p) { return resized_crop(p, window, rng); },
                      },
                      transform);
}

Tensor apply_pipeline(const AugmentSpec& spec, const Tensor& window, Rng& rng) {
    Tensor out = window;
    for (const auto& step : spec.steps) {
        // One gate draw per step, whatever the probability.
        const bool fire = rng.uniform() < step.probability;
        if (fire) out = apply_augmentation(step.transform, out, rng);
    }
    return out;
}

}  // namespace hardneg
