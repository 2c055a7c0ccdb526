#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "maskdl/binary_io.hpp"
#include "maskdl/dictionary.hpp"
#include "oracles.hpp"

using namespace maskdl;

namespace {

std::vector<Index> random_rows(Rng& rng, Index p, Index count) {
    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    std::vector<Index> rows(all.begin(), all.begin() + count);
    std::sort(rows.begin(), rows.end());
    return rows;
}

// Applies random masked steps to a lazy dictionary and an eager copy.
double lazy_vs_eager(Norm norm, ProjectionMode mode, Index p, int updates, std::uint64_t seed) {
    Rng rng(seed);
    const RowMatrix init = testing::gaussian(p, 2, seed);
    Dictionary dict(init, norm, mode);
    Matrix eager = dict.materialize();
    Vector out;
    for (int u = 0; u < updates; ++u) {
        const Index atom = static_cast<Index>(rng.below(2));
        const Index count = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min<Index>(p, 16))));
        const auto rows = random_rows(rng, p, count);
        Vector step(count);
        for (Index i = 0; i < count; ++i) step[i] = 0.3 * rng.normal();
        out.resize(count);
        dict.step_column(atom, rows, step, out);

        Vector stepped(count);
        for (Index i = 0; i < count; ++i) stepped[i] = eager(rows[static_cast<std::size_t>(i)], atom) - step[i];
        if (mode == ProjectionMode::ExactLazy) {
            Vector full = eager.col(atom);
            for (Index i = 0; i < count; ++i) full[rows[static_cast<std::size_t>(i)]] = stepped[i];
            eager.col(atom) = oracle::project(norm, full);
        } else {
            eager.col(atom) = oracle::project_restricted(norm, eager.col(atom), rows, stepped);
        }
        for (Index i = 0; i < count; ++i)
            REQUIRE(std::abs(out[i] - eager(rows[static_cast<std::size_t>(i)], atom)) <= 1e-10);
    }
    return testing::max_abs_diff(dict.materialize(), eager);
}

}  // namespace

TEST_CASE("exact lazy projections equal eager projections") {
    CHECK(lazy_vs_eager(Norm::L2, ProjectionMode::ExactLazy, 200, 500, 1) <= 1e-12);
    CHECK(lazy_vs_eager(Norm::L1, ProjectionMode::ExactLazy, 200, 500, 2) <= 1e-12);
}

TEST_CASE("approximate projections equal the restricted oracle") {
    CHECK(lazy_vs_eager(Norm::L2, ProjectionMode::Approximate, 60, 300, 3) <= 1e-12);
    CHECK(lazy_vs_eager(Norm::L1, ProjectionMode::Approximate, 6, 300, 4) <= 1e-12);
}

TEST_CASE("approximate l1 columns stay feasible") {
    Rng rng(5);
    Dictionary dict(testing::gaussian(80, 3, 5), Norm::L1, ProjectionMode::Approximate);
    Vector out;
    for (int u = 0; u < 400; ++u) {
        const auto rows = random_rows(rng, 80, 20);
        Vector step(20);
        for (Index i = 0; i < 20; ++i) step[i] = rng.normal();
        out.resize(20);
        dict.step_column(static_cast<Index>(u % 3), rows, step, out);
    }
    const RowMatrix D = dict.materialize();
    for (Index j = 0; j < 3; ++j) CHECK(D.col(j).lpNorm<1>() <= 1.0 + 1e-10);
}

TEST_CASE("constructor projects the initial atoms") {
    const RowMatrix init = testing::gaussian(30, 4, 6) * 3.0;
    for (auto norm : {Norm::L1, Norm::L2}) {
        const Dictionary dict(init, norm, ProjectionMode::ExactLazy);
        const RowMatrix D = dict.materialize();
        for (Index j = 0; j < 4; ++j) {
            CHECK(column_norm(norm, D.col(j)) <= 1.0 + 1e-12);
            CHECK(testing::max_abs_diff(D.col(j), oracle::project(norm, init.col(j))) <= 1e-14);
        }
    }
}

TEST_CASE("full-mask update is one block coordinate descent cycle") {
    const Index p = 12, k = 3;
    SufficientStats stats = SufficientStats::zeros(p, k, 1.0);
    const Matrix A = testing::gaussian(k, 20, 1);
    stats.C = A * A.transpose() / 20.0;
    stats.B = testing::gaussian(p, k, 2);
    Dictionary dict(testing::gaussian(p, k, 3), Norm::L2, ProjectionMode::ExactLazy);
    Matrix D = dict.materialize();
    std::vector<Index> rows(static_cast<std::size_t>(p));
    for (Index m = 0; m < p; ++m) rows[static_cast<std::size_t>(m)] = m;
    dictionary_update(dict, stats, rows);
    for (Index j = 0; j < k; ++j) {
        const Vector u = D.col(j) - (D * stats.C.col(j) - stats.B.col(j)) / stats.C(j, j);
        D.col(j) = oracle::project_l2(u);
    }
    CHECK(testing::max_abs_diff(dict.materialize(), D) <= 1e-13);
}

TEST_CASE("unused atoms are skipped") {
    SufficientStats stats = SufficientStats::zeros(5, 2, 1.0);
    stats.C(0, 0) = 1.0;
    Dictionary dict(testing::gaussian(5, 2, 1), Norm::L2, ProjectionMode::ExactLazy);
    const RowMatrix before = dict.materialize();
    std::vector<Index> rows{0, 1, 2, 3, 4};
    CHECK(dictionary_update(dict, stats, rows).skipped_atoms == 1);
    CHECK(dict.materialize().col(1) == before.col(1));
}

TEST_CASE("dictionary save and load round trip") {
    Rng rng(7);
    for (auto norm : {Norm::L1, Norm::L2}) {
        Dictionary dict(testing::gaussian(40, 3, 8), norm, ProjectionMode::ExactLazy);
        Vector out(5);
        for (int u = 0; u < 50; ++u) {
            const auto rows = random_rows(rng, 40, 5);
            dict.step_column(u % 3, rows, testing::gaussian_vector(5, 100 + u), out);
        }
        BinaryWriter w;
        dict.save(w);
        BinaryReader r(w.data());
        const Dictionary back = Dictionary::load(r);
        BinaryWriter w2;
        back.save(w2);
        CHECK(w.data() == w2.data());
        CHECK(back.materialize() == dict.materialize());
    }
}
