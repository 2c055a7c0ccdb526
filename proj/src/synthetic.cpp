#include "maskdl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskdl/sampling.hpp"

namespace maskdl {

SparseDictData generate_sparse_dict(const SparseDictParams& params) {
    if (params.p < 1 || params.n < 1 || params.k < 1 || params.n_test < 0)
        throw ConfigError("sparse-dict generator needs p, n, k >= 1");
    if (!(params.atom_density > 0.0 && params.atom_density <= 1.0))
        throw ConfigError("atom density must lie in (0, 1]");
    if (!(params.snr > 0.0)) throw ConfigError("snr must be > 0");
    Rng rng(params.seed);
    SparseDictData out;
    const Index support = std::max<Index>(1, static_cast<Index>(std::lround(params.atom_density * params.p)));
    out.atoms = Matrix::Zero(params.p, params.k);
    std::vector<Index> rows(static_cast<std::size_t>(params.p));
    for (Index j = 0; j < params.k; ++j) {
        std::iota(rows.begin(), rows.end(), Index{0});
        rng.shuffle(rows);
        for (Index i = 0; i < support; ++i) out.atoms(rows[static_cast<std::size_t>(i)], j) = rng.normal();
        out.atoms.col(j) /= out.atoms.col(j).lpNorm<1>();
    }
    // Mean per-entry signal power is mean_j ||d_j||_2^2 * code_var / p.
    const double energy = out.atoms.colwise().squaredNorm().mean();
    const double code_std = std::sqrt(static_cast<double>(params.p) / (energy * static_cast<double>(params.k)));
    out.noise_std = std::isinf(params.snr) ? 0.0 : 1.0 / std::sqrt(params.snr);

    auto draw = [&](Index columns, Matrix* codes) {
        Matrix A(params.k, columns);
        for (Index c = 0; c < columns; ++c)
            for (Index j = 0; j < params.k; ++j) A(j, c) = code_std * rng.normal();
        Matrix X = out.atoms * A;
        if (out.noise_std > 0.0)
            for (Index c = 0; c < columns; ++c)
                for (Index m = 0; m < params.p; ++m) X(m, c) += out.noise_std * rng.normal();
        if (codes) *codes = std::move(A);
        return X;
    };
    out.train = draw(params.n, &out.codes);
    out.test = draw(params.n_test, nullptr);
    return out;
}

LowRankRatings generate_low_rank_ratings(const LowRankRatingsParams& params) {
    if (params.n_users < 1 || params.n_items < 1 || params.rank < 1)
        throw ConfigError("ratings generator needs users, items, rank >= 1");
    if (!(params.density > 0.0 && params.density <= 1.0)) throw ConfigError("density must lie in (0, 1]");
    if (!(params.noise >= 0.0)) throw ConfigError("noise must be >= 0");
    Rng rng(params.seed);
    LowRankRatings out;
    out.mean = params.mean;
    const double scale = 1.0 / std::pow(static_cast<double>(params.rank), 0.25);
    out.item_factors.resize(params.n_items, params.rank);
    for (Index i = 0; i < params.n_items; ++i)
        for (Index r = 0; r < params.rank; ++r) out.item_factors(i, r) = scale * rng.normal();
    out.user_factors.resize(params.rank, params.n_users);
    for (Index u = 0; u < params.n_users; ++u)
        for (Index r = 0; r < params.rank; ++r) out.user_factors(r, u) = scale * rng.normal();
    out.user_bias.resize(params.n_users);
    for (Index u = 0; u < params.n_users; ++u) out.user_bias[u] = params.user_bias_std * rng.normal();
    out.item_bias.resize(params.n_items);
    for (Index i = 0; i < params.n_items; ++i) out.item_bias[i] = params.item_bias_std * rng.normal();
    for (Index u = 0; u < params.n_users; ++u) {
        for (Index i = 0; i < params.n_items; ++i) {
            if (rng.uniform() >= params.density) continue;
            const double clean = out.mean + out.user_bias[u] + out.item_bias[i] +
                                 out.item_factors.row(i).dot(out.user_factors.col(u));
            out.ratings.push_back({u, i, clean + params.noise * rng.normal()});
        }
    }
    return out;
}

}  // namespace maskdl
