#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskdl/data_source.hpp"
#include "maskdl/learner.hpp"
#include "maskdl/synthetic.hpp"
#include "maskdl/types.hpp"

namespace maskdl {

enum class RatingsFormat { Auto, DoubleColon, Comma, Tab };

std::optional<RatingsFormat> parse_ratings_format(std::string_view text);

struct Entry {
    Index item = 0;
    double value = 0.0;
};

/// Ratings re-indexed contiguously: users 0..n-1, items 0..p-1. Per-user
/// entry lists are sorted by item.
struct RatingsDataset {
    Index p = 0;  // items
    Index n = 0;  // users
    std::vector<std::vector<Entry>> train;
    std::vector<std::vector<Entry>> test;
    double global_mean = 0.0;
    double min_rating = 0.0;
    double max_rating = 0.0;
    std::int64_t duplicates = 0;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;

    std::size_t train_size() const;
    std::size_t test_size() const;
    /// Recomputes the global mean and rating range from the train lists.
    void refresh_train_summary();
};

struct SplitOptions {
    double test_fraction = 0.25;
    std::uint64_t seed = 0;
};

/// Parses user, item, rating[, timestamp] lines. Blank lines and lines
/// starting with '#' are skipped. Duplicate (user, item) pairs keep the last
/// rating and are counted.
RatingsDataset parse_ratings(std::istream& in, RatingsFormat format, const SplitOptions& split);
RatingsDataset ingest_ratings(const std::string& path, RatingsFormat format, const SplitOptions& split);

/// Builds a dataset from in-memory ratings (ids kept as given, split as above).
RatingsDataset make_dataset(std::span<const Rating> ratings, const SplitOptions& split);

/// Random inner split of the train ratings of `data`: a `fraction` of them
/// becomes the test part, the rest the train part.
RatingsDataset inner_split(const RatingsDataset& data, double fraction, std::uint64_t seed);

struct BiasModel {
    double mu = 0.0;
    Vector b_user;
    Vector b_item;
    double eps_b = 10.0;
    int iterations = 10;

    double predict(Index user, Index item) const { return mu + b_user[user] + b_item[item]; }
};

BiasModel fit_biases(const RatingsDataset& data, double eps_b = 10.0, int iterations = 10);

double rmse(std::span<const double> predictions, std::span<const double> truths);

/// 15 log-spaced values from 1e-2 to 10.
std::vector<double> lambda_grid();

struct CompletionConfig {
    Index k = 30;
    double lambda = 0.1;
    double beta = 0.9;
    // 0 selects max(1, n / 100).
    Index batch_size = 0;
    double epochs = 30.0;
    double epsilon = 1e-6;
    std::int64_t eval_interval = 0;
    double eps_b = 10.0;
    int bias_iterations = 10;
    bool clip = true;
    // Stream item columns instead of user columns.
    bool item_columns = false;
    std::uint64_t seed = 0;

    LearnerConfig learner_config(Index columns) const;
};

/// Streaming completion on the debiased train ratings. Test ratings only
/// enter through the RMSE evaluation.
class CompletionRun {
   public:
    CompletionRun(const RatingsDataset& data, const CompletionConfig& config);
    /// Resumes from a saved learner state.
    CompletionRun(const RatingsDataset& data, const CompletionConfig& config, BinaryReader& state);
    CompletionRun(const CompletionRun&) = delete;
    CompletionRun& operator=(const CompletionRun&) = delete;

    const std::vector<TrajectoryRecord>& run();

    /// Clipped prediction for (user, item), or nullopt when the user has no code yet.
    std::optional<double> predict(Index user, Index item, const RowMatrix& dict) const;
    double predict_bias_only(Index user, Index item) const;

    /// Test RMSE over pairs whose user has a cached code.
    double test_rmse() const;
    /// Number of test pairs excluded because their user has no cached code.
    std::int64_t uncovered_test_pairs() const;
    /// Users present in test but with no train ratings.
    std::int64_t cold_start_users() const;

    Learner& learner() { return *learner_; }
    const Learner& learner() const { return *learner_; }
    const BiasModel& biases() const { return bias_; }
    const SparseColumnSource& residuals() const { return *residuals_; }

   private:
    void build_source();
    void attach_evaluator();
    double rmse_with(const RowMatrix& dict, std::int64_t* uncovered) const;

    const RatingsDataset* data_;
    CompletionConfig config_;
    BiasModel bias_;
    std::unique_ptr<SparseColumnSource> residuals_;
    std::unique_ptr<Learner> learner_;
};

/// Inner-validation RMSE of each grid value averaged over `splits` random
/// 33% splits of the train ratings. Returns the smallest-RMSE lambda, ties
/// going to the smaller value.
struct CrossValidation {
    double chosen = 0.0;
    std::vector<double> grid;
    std::vector<double> mean_rmse;
};

CrossValidation cross_validate_lambda(const RatingsDataset& data, const CompletionConfig& config,
                                      int splits = 3, std::span<const double> grid = {});

}  // namespace maskdl
