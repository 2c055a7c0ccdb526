#include <doctest.h>

#include "maskdl/synthetic.hpp"

using namespace maskdl;

TEST_CASE("noise-free sparse-dict data is an exact factorization") {
    SparseDictParams params;
    params.p = 60;
    params.n = 100;
    params.k = 5;
    params.n_test = 10;
    params.seed = 1;
    const auto d = generate_sparse_dict(params);
    CHECK((d.train - d.atoms * d.codes).cwiseAbs().maxCoeff() == 0.0);
    for (Index j = 0; j < 5; ++j) {
        CHECK(d.atoms.col(j).lpNorm<1>() == doctest::Approx(1.0));
        CHECK((d.atoms.col(j).array() != 0.0).count() == 6);
    }
    CHECK(d.test.cols() == 10);
}

TEST_CASE("snr sets the noise level") {
    SparseDictParams params;
    params.p = 100;
    params.n = 400;
    params.k = 4;
    params.snr = 10.0;
    params.seed = 2;
    const auto d = generate_sparse_dict(params);
    const Matrix signal = d.atoms * d.codes;
    const double power = signal.squaredNorm() / static_cast<double>(signal.size());
    const double noise = (d.train - signal).squaredNorm() / static_cast<double>(signal.size());
    CHECK(power / noise == doctest::Approx(10.0).epsilon(0.15));
}

TEST_CASE("ratings count stays within a binomial bound") {
    LowRankRatingsParams params;
    params.n_users = 2000;
    params.n_items = 500;
    params.density = 0.05;
    params.seed = 3;
    const auto r = generate_low_rank_ratings(params);
    const double mean = 0.05 * 2000 * 500;
    const double sd = std::sqrt(mean * 0.95);
    CHECK(std::abs(static_cast<double>(r.ratings.size()) - mean) <= 5.0 * sd);
}

TEST_CASE("generators are deterministic under a seed") {
    LowRankRatingsParams params;
    params.n_users = 50;
    params.n_items = 20;
    params.seed = 4;
    const auto a = generate_low_rank_ratings(params);
    const auto b = generate_low_rank_ratings(params);
    REQUIRE(a.ratings.size() == b.ratings.size());
    for (std::size_t i = 0; i < a.ratings.size(); ++i) CHECK(a.ratings[i].value == b.ratings[i].value);
    CHECK_THROWS_AS(generate_low_rank_ratings({.density = 0.0}), ConfigError);
}
