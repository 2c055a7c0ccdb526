#include <doctest.h>

#include <sstream>

#include "maskdl/completion.hpp"

using namespace maskdl;

namespace {

RatingsDataset parse(const std::string& text, RatingsFormat format = RatingsFormat::Auto, double fraction = 0.25,
                     std::uint64_t seed = 0) {
    std::istringstream in(text);
    return parse_ratings(in, format, {fraction, seed});
}

// Rank-1 ratings u_i * v_j observed on a dense-ish pattern.
std::vector<Rating> rank_one(Index users, Index items, double density, std::uint64_t seed) {
    Rng rng(seed);
    Vector u(users), v(items);
    for (Index i = 0; i < users; ++i) u[i] = 1.0 + rng.uniform();
    for (Index j = 0; j < items; ++j) v[j] = 1.0 + rng.uniform();
    std::vector<Rating> out;
    for (Index i = 0; i < users; ++i)
        for (Index j = 0; j < items; ++j)
            if (rng.uniform() < density) out.push_back({i, j, u[i] * v[j]});
    return out;
}

}  // namespace

TEST_CASE("double-colon line parses into user, item, rating") {
    const auto d = parse("1::20::3.5::978300760\n", RatingsFormat::DoubleColon, 0.0);
    REQUIRE(d.n == 1);
    REQUIRE(d.p == 1);
    CHECK(d.user_ids[0] == "1");
    CHECK(d.item_ids[0] == "20");
    CHECK(d.train[0][0].value == 3.5);
}

TEST_CASE("formats are detected and malformed lines report their number") {
    CHECK(parse("1,2,3\n2,3,4\n", RatingsFormat::Auto, 0.0).train_size() == 2);
    CHECK(parse("1\t2\t3\t99\n", RatingsFormat::Auto, 0.0).train_size() == 1);
    CHECK_THROWS_WITH_AS(parse("1,2,3\n1,4,x\n", RatingsFormat::Comma, 0.0), doctest::Contains("line 2"), DataError);
    CHECK_THROWS_AS(parse("", RatingsFormat::Auto), DataError);
}

TEST_CASE("four-line toy file splits 3/1 deterministically") {
    const std::string text = "1,1,4\n1,2,3\n2,1,5\n2,2,2\n";
    const auto a = parse(text, RatingsFormat::Comma, 0.25, 7);
    const auto b = parse(text, RatingsFormat::Comma, 0.25, 7);
    CHECK(a.train_size() == 3);
    CHECK(a.test_size() == 1);
    for (Index u = 0; u < a.n; ++u) {
        REQUIRE(a.test[static_cast<std::size_t>(u)].size() == b.test[static_cast<std::size_t>(u)].size());
        for (std::size_t i = 0; i < a.test[static_cast<std::size_t>(u)].size(); ++i)
            CHECK(a.test[static_cast<std::size_t>(u)][i].item == b.test[static_cast<std::size_t>(u)][i].item);
    }
}

TEST_CASE("duplicates keep the last rating") {
    const auto d = parse("1,1,2\n1,1,5\n", RatingsFormat::Comma, 0.0);
    CHECK(d.duplicates == 1);
    CHECK(d.train_size() == 1);
    CHECK(d.train[0][0].value == 5.0);
}

TEST_CASE("bias examples") {
    SUBCASE("single rating equal to the mean") {
        const auto d = parse("1,1,4\n", RatingsFormat::Comma, 0.0);
        const auto b = fit_biases(d);
        CHECK(b.mu == 4.0);
        CHECK(b.b_user[0] == 0.0);
        CHECK(b.b_item[0] == 0.0);
    }
    SUBCASE("one round with eps_b = 0") {
        const auto d = parse("1,1,5\n1,2,3\n", RatingsFormat::Comma, 0.0);
        const auto b = fit_biases(d, 0.0, 1);
        CHECK(b.mu == 4.0);
        CHECK(b.b_item[0] == doctest::Approx(1.0));
        CHECK(b.b_item[1] == doctest::Approx(-1.0));
        CHECK(b.b_user[0] == doctest::Approx(0.0));
    }
    SUBCASE("changes between rounds shrink") {
        LowRankRatingsParams params;
        params.n_users = 60;
        params.n_items = 30;
        params.density = 0.3;
        params.seed = 4;
        const auto d = make_dataset(generate_low_rank_ratings(params).ratings, {0.0, 1});
        double previous = std::numeric_limits<double>::infinity();
        BiasModel last = fit_biases(d, 10.0, 1);
        for (int rounds = 2; rounds <= 10; ++rounds) {
            const BiasModel next = fit_biases(d, 10.0, rounds);
            const double change = std::max((next.b_user - last.b_user).cwiseAbs().maxCoeff(),
                                           (next.b_item - last.b_item).cwiseAbs().maxCoeff());
            CHECK(change <= previous);
            previous = change;
            last = next;
        }
    }
}

TEST_CASE("rmse examples") {
    const std::vector<double> a{1.0, 2.0}, b{3.0, 5.0}, c{4.0, 4.0};
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(c, b) == doctest::Approx(1.0));
    const std::vector<double> x{1.0}, y{1.5};
    CHECK(rmse(x, y) == doctest::Approx(0.5));
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST_CASE("lambda grid") {
    const auto grid = lambda_grid();
    REQUIRE(grid.size() == 15);
    CHECK(grid.front() == 1e-2);
    CHECK(grid.back() == 10.0);
    for (std::size_t i = 1; i < grid.size(); ++i)
        CHECK(std::log(grid[i] / grid[i - 1]) == doctest::Approx(std::log(1000.0) / 14.0));
}

TEST_CASE("constant ratings are explained by the mean") {
    std::vector<Rating> ratings;
    for (Index u = 0; u < 20; ++u)
        for (Index i = 0; i < 10; ++i) ratings.push_back({u, i, 3.0});
    const auto d = make_dataset(ratings, {0.25, 2});
    CompletionConfig cfg;
    cfg.k = 2;
    cfg.epochs = 2;
    CompletionRun run(d, cfg);
    run.run();
    CHECK(run.test_rmse() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(run.predict_bias_only(0, 0) == 3.0);
}

// The dictionary step uses one global code covariance while each row of B
// only averages the users that rated that item, so the recovery error of
// noise-free rank-1 data shrinks with the number of users per item instead
// of vanishing at a fixed size.
TEST_CASE("noise-free rank-1 ratings: error shrinks with users per item") {
    auto rank_one_rmse = [](Index users) {
        LowRankRatingsParams params;
        params.n_users = users;
        params.n_items = 10;
        params.rank = 1;
        params.density = 1.0;
        params.noise = 0.0;
        params.user_bias_std = 0.0;
        params.item_bias_std = 0.0;
        params.seed = 2;
        const auto d = make_dataset(generate_low_rank_ratings(params).ratings, {0.25, 5});
        CompletionConfig cfg;
        cfg.k = 1;
        cfg.lambda = 1e-6;
        cfg.eps_b = 1e9;
        cfg.epochs = 20;
        cfg.epsilon = 1e-12;
        cfg.clip = false;
        cfg.seed = 1;
        CompletionRun run(d, cfg);
        run.run();
        CHECK(run.learner().code_cache()->covered() == d.n);
        CHECK(run.uncovered_test_pairs() == 0);
        return run.test_rmse();
    };
    const double small = rank_one_rmse(500);
    const double large = rank_one_rmse(4000);
    MESSAGE("rank-1 rmse ", small, " -> ", large);
    CHECK(large < 0.6 * small);
    CHECK(large < 0.05);
}

TEST_CASE("predictions are clipped to the train range") {
    const auto d = make_dataset(rank_one(40, 20, 0.6, 4), {0.25, 6});
    CompletionConfig cfg;
    cfg.k = 2;
    cfg.epochs = 3;
    CompletionRun run(d, cfg);
    run.run();
    const RowMatrix dict = run.learner().dictionary().materialize() * 1e6;
    for (Index u = 0; u < d.n; ++u) {
        for (const auto& e : d.test[static_cast<std::size_t>(u)]) {
            const auto value = run.predict(u, e.item, dict);
            REQUIRE(value);
            CHECK(*value >= d.min_rating);
            CHECK(*value <= d.max_rating);
        }
    }
}

TEST_CASE("test ratings only enter through the truths") {
    auto d = make_dataset(rank_one(60, 20, 0.5, 5), {0.25, 7});
    CompletionConfig cfg;
    cfg.k = 2;
    cfg.epochs = 3;
    CompletionRun a(d, cfg);
    a.run();
    auto perturbed = d;
    for (auto& list : perturbed.test)
        for (auto& e : list) e.value += 0.5;
    CompletionRun b(perturbed, cfg);
    b.run();
    CHECK(a.learner().dictionary().materialize() == b.learner().dictionary().materialize());
    CHECK(a.learner().code_cache()->codes == b.learner().code_cache()->codes);
    CHECK(a.test_rmse() != b.test_rmse());
}

TEST_CASE("cross-validation tie rule and large-lambda collapse") {
    SUBCASE("all-constant data ties at every lambda") {
        std::vector<Rating> ratings;
        for (Index u = 0; u < 30; ++u)
            for (Index i = 0; i < 8; ++i) ratings.push_back({u, i, 4.0});
        const auto d = make_dataset(ratings, {0.25, 1});
        CompletionConfig cfg;
        cfg.k = 2;
        cfg.epochs = 1;
        const std::vector<double> grid{0.01, 1.0, 10.0};
        CHECK(cross_validate_lambda(d, cfg, 2, grid).chosen == 0.01);
    }
    SUBCASE("factorizable data prefers a small lambda") {
        const auto d = make_dataset(rank_one(120, 30, 0.5, 8), {0.25, 2});
        CompletionConfig cfg;
        cfg.k = 1;
        cfg.epochs = 5;
        cfg.eps_b = 1e9;
        const std::vector<double> grid{0.01, 10.0};
        const auto cv = cross_validate_lambda(d, cfg, 2, grid);
        CHECK(cv.chosen < 10.0);
        CHECK(cv.mean_rmse[0] < cv.mean_rmse[1]);
    }
}

TEST_CASE("inner split partitions the train ratings") {
    const auto d = make_dataset(rank_one(30, 10, 0.8, 9), {0.25, 3});
    const auto inner = inner_split(d, 1.0 / 3.0, 4);
    CHECK(inner.train_size() + inner.test_size() == d.train_size());
    CHECK(static_cast<double>(inner.test_size()) == doctest::Approx(d.train_size() / 3.0).epsilon(0.01));
}
