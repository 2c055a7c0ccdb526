#pragma once

#include <cstdint>

#include "maskdl/sampling.hpp"
#include "maskdl/types.hpp"

namespace testing {

inline maskdl::Matrix gaussian(maskdl::Index rows, maskdl::Index cols, std::uint64_t seed) {
    maskdl::Rng rng(seed);
    maskdl::Matrix m(rows, cols);
    for (maskdl::Index j = 0; j < cols; ++j)
        for (maskdl::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

inline maskdl::Vector gaussian_vector(maskdl::Index n, std::uint64_t seed) {
    return gaussian(n, 1, seed).col(0);
}

inline double max_abs_diff(const maskdl::Matrix& a, const maskdl::Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testing
