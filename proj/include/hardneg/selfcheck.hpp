#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hardneg {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Gradient, reduction-identity, analytic-value and sampler checks on
/// seeded random instances. Fast enough to run on every install.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 0, std::size_t instances = 5);

}  // namespace hardneg
