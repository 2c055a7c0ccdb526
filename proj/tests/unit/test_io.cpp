#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "maskdl/binary_io.hpp"
#include "maskdl/io.hpp"

using namespace maskdl;

TEST_CASE("doubles round-trip through text") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(40)) - 20.0);
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK_FALSE(parse_double("1.5x"));
    CHECK_FALSE(parse_double(""));
}

TEST_CASE("trajectory text round trip") {
    std::vector<TrajectoryRecord> records(3);
    for (int i = 0; i < 3; ++i) {
        records[i].t = i * 10;
        records[i].epochs = 0.1 * i;
        records[i].cpu_time_s = 1.0 / 3.0 * i;
        records[i].surrogate = -2.0 / 7.0 * i;
        records[i].l1_l2_ratio = 1.25;
    }
    records[1].test_objective = 0.1;
    records[2].rmse = 0.9;
    const auto back = parse_trajectory(format_trajectory(records, true));
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back[i].t == records[i].t);
        CHECK(back[i].cpu_time_s == records[i].cpu_time_s);
        CHECK(back[i].surrogate == records[i].surrogate);
        CHECK(back[i].test_objective == records[i].test_objective);
        CHECK(back[i].rmse == records[i].rmse);
    }
    CHECK(format_trajectory(records, false).rfind("t,epochs,cpu_time_s,surrogate,test_objective,l1_l2_ratio\n", 0) == 0);
    CHECK_THROWS_AS(parse_trajectory("t,epochs\n1,2\n"), DataError);
}

TEST_CASE("convergence time: monotone and oscillating") {
    const std::vector<double> times{0, 1, 2, 3, 4, 5};
    SUBCASE("monotone decrease enters the band once") {
        const std::vector<double> scores{2.0, 1.5, 1.1, 1.0005, 1.0002, 1.0};
        CHECK(*convergence_time(times, scores) == 3.0);
    }
    SUBCASE("oscillation uses the last entry into the band") {
        const std::vector<double> scores{2.0, 1.0001, 1.2, 1.0003, 0.99, 1.0};
        CHECK(*convergence_time(times, scores) == 5.0);
    }
    CHECK_FALSE(convergence_time({}, {}));
}

TEST_CASE("key=value config parsing") {
    const auto kv = parse_key_values("# comment\nk = 5\n\nnorm=l1  # trailing\n");
    CHECK(kv.at("k") == "5");
    CHECK(kv.at("norm") == "l1");
    CHECK(parse_key_values(format_key_values(kv)) == kv);
    CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
}

TEST_CASE("matrix files and checkpoint header") {
    const auto path = (std::filesystem::temp_directory_path() / "maskdl_io_test.mtx").string();
    const Matrix m = testing::gaussian(7, 3, 2);
    write_matrix(path, m);
    CHECK(read_matrix(path) == m);
    std::remove(path.c_str());

    DenseSource data(testing::gaussian(10, 20, 3));
    LearnerConfig cfg;
    cfg.k = 2;
    cfg.max_epochs = 1;
    Learner learner(cfg, data);
    learner.fit();
    const auto bytes = encode_checkpoint(learner, "k=2\n");
    BinaryReader reader(bytes);
    const auto header = read_checkpoint_header(reader);
    CHECK(header.version == 1);
    CHECK(header.run_config == "k=2\n");
    const Learner back = Learner::load(reader, data);
    CHECK(encode_checkpoint(back, "k=2\n") == bytes);

    auto corrupt = bytes;
    corrupt[0] = 'X';
    BinaryReader bad(corrupt);
    CHECK_THROWS_AS(read_checkpoint_header(bad), DataError);
}
