#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "hardneg/numcore.hpp"
#include "hardneg/rng.hpp"
#include "hardneg/tensor.hpp"
#include "oracles.hpp"

namespace testing {

inline hardneg::Tensor random_matrix(std::size_t rows, std::size_t cols, hardneg::Rng& rng) {
    hardneg::Tensor m({rows, cols});
    for (double& v : m.data()) v = rng.normal();
    return m;
}

inline hardneg::Tensor random_unit(std::size_t rows, std::size_t cols, hardneg::Rng& rng) {
    return hardneg::l2_normalize_rows(random_matrix(rows, cols, rng));
}

inline oracle::Matrix to_matrix(const hardneg::Tensor& t) {
    oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
    }
    return m;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("hardneg_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
