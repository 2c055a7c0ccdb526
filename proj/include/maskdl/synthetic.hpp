#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "maskdl/types.hpp"

namespace maskdl {

struct SparseDictParams {
    Index p = 400;
    Index n = 5000;
    Index k = 10;
    // Held-out columns drawn from the same model.
    Index n_test = 512;
    // Signal-to-noise power ratio; infinity means no noise.
    double snr = std::numeric_limits<double>::infinity();
    // Fraction of nonzero entries per true atom.
    double atom_density = 0.1;
    std::uint64_t seed = 0;
};

struct SparseDictData {
    Matrix train;   // p x n
    Matrix test;    // p x n_test
    Matrix atoms;   // p x k, each column with unit l1 norm
    Matrix codes;   // k x n
    double noise_std = 0.0;
};

/// X = D_true A + noise with sparse l1-normalized atoms and Gaussian codes
/// scaled so that every entry of D_true A has unit variance on average.
SparseDictData generate_sparse_dict(const SparseDictParams& params);

struct LowRankRatingsParams {
    Index n_users = 2000;
    Index n_items = 500;
    Index rank = 5;
    double density = 0.1;
    double noise = 0.1;
    double mean = 3.5;
    double user_bias_std = 0.2;
    double item_bias_std = 0.2;
    std::uint64_t seed = 0;
};

struct Rating {
    std::int64_t user = 0;
    std::int64_t item = 0;
    double value = 0.0;
};

struct LowRankRatings {
    std::vector<Rating> ratings;  // observed entries, user-major order
    Matrix item_factors;          // n_items x rank
    Matrix user_factors;          // rank x n_users
    Vector user_bias;
    Vector item_bias;
    double mean = 0.0;
};

/// rating(u, i) = mean + b_u + b_i + <item_factors[i], user_factors[u]> + noise,
/// each entry observed independently with probability `density`. The
/// interaction term has unit variance.
LowRankRatings generate_low_rank_ratings(const LowRankRatingsParams& params);

}  // namespace maskdl
