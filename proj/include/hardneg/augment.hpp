#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "hardneg/rng.hpp"
#include "hardneg/tensor.hpp"

namespace hardneg {

// Transform parameters. Defaults are the values used when a run config
// leaves them out.

/// Adds i.i.d. N(0, sigma^2) noise.
struct Jitter {
    double sigma = 0.05;
};

/// Multiplies each channel by its own factor drawn from U[low, high].
struct Scale {
    double low = 0.9;
    double high = 1.1;
};

/// One uniformly random 3D rotation applied to every channel triplet.
struct Rotate {};

/// Splits time into k contiguous segments, k uniform in [min, max], and
/// shuffles their order.
struct PermuteSegments {
    int min_segments = 2;
    int max_segments = 5;
};

/// Random permutation of the channels.
struct ChannelShuffle {};

/// Random shear I + S applied to every channel triplet, off-diagonal
/// entries of S drawn from U[-magnitude, magnitude].
struct Shear {
    double magnitude = 0.2;
};

/// Random crop covering a fraction U[min, max] of the window, resampled back
/// to the original length by linear interpolation.
struct ResizedCrop {
    double min_fraction = 0.6;
    double max_fraction = 1.0;
};

using Transform =
    std::variant<Jitter, Scale, Rotate, PermuteSegments, ChannelShuffle, Shear, ResizedCrop>;

std::string transform_name(const Transform& t);

struct AugmentStep {
    Transform transform;
    double probability = 1.0;
};

/// Ordered pipeline; each step fires independently with its probability.
struct AugmentSpec {
    std::vector<AugmentStep> steps;

    /// Throws ConfigError on bad probabilities or transform parameters, and
    /// when a triplet transform is combined with a channel count not
    /// divisible by 3 (pass channels = 0 to skip that check).
    void validate(std::size_t channels = 0) const;

    static AugmentSpec inertial_default();
    static AugmentSpec skeleton_default();
};

Tensor apply_augmentation(const Transform& transform, const Tensor& window, Rng& rng);

Tensor apply_pipeline(const AugmentSpec& spec, const Tensor& window, Rng& rng);

/// Uniform random rotation matrix (row-major 3x3) from a unit quaternion.
std::array<double, 9> random_rotation(Rng& rng);

}  // namespace hardneg
