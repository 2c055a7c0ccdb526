#include <doctest.h>

#include "helpers.hpp"
#include "maskdl/proj_kernels.hpp"
#include "oracles.hpp"

using namespace maskdl;

TEST_CASE("l1 projection matches the sort oracle and face enumeration") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Index n = seed < 20 ? 4 : 64;
        const Vector v = testing::gaussian_vector(n, seed) * (seed % 3 == 0 ? 0.1 : 2.0);
        const auto fast = proj::project_l1_ball(v);
        const auto sorted = oracle::project_l1_sort(v);
        CHECK(testing::max_abs_diff(fast.value, sorted.value) <= 1e-14);
        CHECK(std::abs(fast.threshold - sorted.threshold) <= 1e-14);
        if (n <= 4) CHECK(testing::max_abs_diff(fast.value, oracle::project_l1_faces(v)) <= 1e-12);
        CHECK(fast.value.lpNorm<1>() <= 1.0 + 1e-12);
    }
}

TEST_CASE("l1 threshold satisfies the sum condition") {
    const Vector v = testing::gaussian_vector(257, 3) * 5.0;
    const double theta = proj::l1_ball_threshold(v, 1.0);
    double sum = 0.0;
    for (Index i = 0; i < v.size(); ++i) sum += std::max(std::abs(v[i]) - theta, 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("l1 projection edge cases") {
    SUBCASE("inside the ball is unchanged") {
        const Vector v = Vector::Constant(4, 0.2);
        const auto r = proj::project_l1_ball(v);
        CHECK(r.threshold == 0.0);
        CHECK(r.value == v);
    }
    SUBCASE("all equal magnitudes") {
        Vector v(4);
        v << 1.0, -1.0, 1.0, -1.0;
        const auto r = proj::project_l1_ball(v);
        CHECK(r.threshold == doctest::Approx(0.75));
        CHECK(r.value.cwiseAbs().maxCoeff() == doctest::Approx(0.25));
    }
    SUBCASE("zero radius keeps nothing") {
        const Vector v = testing::gaussian_vector(8, 1);
        CHECK(proj::l1_ball_threshold(v, 0.0) == doctest::Approx(v.cwiseAbs().maxCoeff()));
        CHECK(proj::project_l1_ball_partial(v, 0.0).isZero());
    }
    SUBCASE("partial radius") {
        const Vector v = testing::gaussian_vector(16, 2) * 3.0;
        const Vector u = proj::project_l1_ball_partial(v, 0.4);
        CHECK(testing::max_abs_diff(u, oracle::project_l1_sort(v, 0.4).value) <= 1e-14);
    }
}

TEST_CASE("l2 projections") {
    const Vector v = testing::gaussian_vector(10, 4) * 3.0;
    CHECK(testing::max_abs_diff(proj::project_l2_ball(v), oracle::project_l2(v)) <= 1e-15);
    CHECK(proj::project_l2_ball(v).norm() == doctest::Approx(1.0));
    const Vector small = v / (10.0 * v.norm());
    CHECK(proj::project_l2_ball(small) == small);
    CHECK(proj::project_l2_ball_partial(v, 0.5).norm() == doctest::Approx(0.5));
    CHECK(testing::max_abs_diff(proj::project_ball(Norm::L1, v), oracle::project(Norm::L1, v)) <= 1e-14);
}

TEST_CASE("soft threshold") {
    CHECK(proj::soft_threshold(3.0, 1.0) == 2.0);
    CHECK(proj::soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(proj::soft_threshold(0.5, 1.0) == 0.0);
}
