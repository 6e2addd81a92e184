#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace hardneg {

/// Seedable generator with a platform-independent draw sequence.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so every
/// conversion to a float or an index is done here:
///   uniform()       top 53 bits of one engine word scaled by 2^-53
///   uniform_index() rejection sampling on 64-bit words (no modulo bias)
///   normal()        Box-Muller, both outputs used in order
/// Sub-streams come from derive(), which mixes the seed and a tag with
/// SplitMix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double low, double high) { return low + (high - low) * uniform(); }
    std::size_t uniform_index(std::size_t n);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Independent generator for a named sub-task; does not advance this one.
    Rng derive(std::uint64_t tag) const;

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hardneg
