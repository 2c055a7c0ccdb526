#include "maskdl/completion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <string_view>
#include <tuple>
#include <unordered_map>

#include "maskdl/binary_io.hpp"
#include "maskdl/sampling.hpp"

namespace maskdl {

namespace {

struct RawRating {
    Index user;
    Index item;
    double value;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line, RatingsFormat format) {
    std::vector<std::string_view> fields;
    const std::string_view sep = format == RatingsFormat::DoubleColon ? "::"
                                 : format == RatingsFormat::Comma     ? ","
                                                                      : "\t";
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + sep.size();
    }
    return fields;
}

RatingsFormat detect_format(std::string_view line) {
    if (line.find("::") != std::string_view::npos) return RatingsFormat::DoubleColon;
    if (line.find('\t') != std::string_view::npos) return RatingsFormat::Tab;
    return RatingsFormat::Comma;
}

class IdMap {
   public:
    Index get(std::string_view id) {
        auto [it, inserted] = index_.try_emplace(std::string(id), static_cast<Index>(ids_.size()));
        if (inserted) ids_.emplace_back(id);
        return it->second;
    }
    std::vector<std::string> take() { return std::move(ids_); }
    Index size() const { return static_cast<Index>(ids_.size()); }

   private:
    std::unordered_map<std::string, Index> index_;
    std::vector<std::string> ids_;
};

// Keeps the last rating of each (user, item) pair, splits, fills the dataset.
RatingsDataset build_dataset(std::vector<RawRating> raw, Index users, Index items,
                             const SplitOptions& split) {
    if (raw.empty()) throw DataError("no ratings found");
    if (!(split.test_fraction >= 0.0 && split.test_fraction < 1.0))
        throw ConfigError("test fraction must lie in [0, 1)");
    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(raw[a].user, raw[a].item) < std::tie(raw[b].user, raw[b].item);
    });
    RatingsDataset data;
    std::vector<RawRating> unique;
    unique.reserve(raw.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& r = raw[order[i]];
        if (!unique.empty() && unique.back().user == r.user && unique.back().item == r.item) {
            unique.back() = r;  // later line wins (stable order)
            ++data.duplicates;
        } else {
            unique.push_back(r);
        }
    }
    std::vector<std::size_t> perm(unique.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(split.seed);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const auto n_test = static_cast<std::size_t>(std::llround(split.test_fraction * static_cast<double>(unique.size())));
    std::vector<bool> is_test(unique.size(), false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[perm[i]] = true;

    data.p = items;
    data.n = users;
    data.train.assign(static_cast<std::size_t>(users), {});
    data.test.assign(static_cast<std::size_t>(users), {});
    // `unique` is sorted by (user, item), so per-user lists come out sorted.
    for (std::size_t i = 0; i < unique.size(); ++i) {
        auto& lists = is_test[i] ? data.test : data.train;
        lists[static_cast<std::size_t>(unique[i].user)].push_back({unique[i].item, unique[i].value});
    }
    data.refresh_train_summary();
    return data;
}

}  // namespace

std::optional<RatingsFormat> parse_ratings_format(std::string_view text) {
    if (text == "auto") return RatingsFormat::Auto;
    if (text == "double-colon" || text == "::") return RatingsFormat::DoubleColon;
    if (text == "comma" || text == "csv" || text == ",") return RatingsFormat::Comma;
    if (text == "tab" || text == "tsv") return RatingsFormat::Tab;
    return std::nullopt;
}

std::size_t RatingsDataset::train_size() const {
    std::size_t total = 0;
    for (const auto& u : train) total += u.size();
    return total;
}

std::size_t RatingsDataset::test_size() const {
    std::size_t total = 0;
    for (const auto& u : test) total += u.size();
    return total;
}

void RatingsDataset::refresh_train_summary() {
    double sum = 0.0;
    std::size_t count = 0;
    min_rating = std::numeric_limits<double>::infinity();
    max_rating = -std::numeric_limits<double>::infinity();
    for (const auto& u : train) {
        for (const auto& e : u) {
            sum += e.value;
            ++count;
            min_rating = std::min(min_rating, e.value);
            max_rating = std::max(max_rating, e.value);
        }
    }
    if (count == 0) throw DataError("train split is empty");
    global_mean = sum / static_cast<double>(count);
}

RatingsDataset parse_ratings(std::istream& in, RatingsFormat format, const SplitOptions& split) {
    IdMap users;
    IdMap items;
    std::vector<RawRating> raw;
    std::string line;
    std::int64_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string_view view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        if (format == RatingsFormat::Auto) format = detect_format(view);
        const auto fields = split_fields(view, format);
        auto fail = [&](const std::string& why) {
            return DataError("line " + std::to_string(number) + ": " + why);
        };
        if (fields.size() < 3 || fields.size() > 4) throw fail("expected user, item, rating[, timestamp]");
        if (fields[0].empty() || fields[1].empty()) throw fail("empty user or item id");
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), value);
        if (ec != std::errc() || ptr != fields[2].data() + fields[2].size() || !std::isfinite(value))
            throw fail("rating '" + std::string(fields[2]) + "' is not a finite number");
        raw.push_back({users.get(fields[0]), items.get(fields[1]), value});
    }
    if (raw.empty()) throw DataError("ratings input contains no ratings");
    const Index n_users = users.size();
    const Index n_items = items.size();
    RatingsDataset data = build_dataset(std::move(raw), n_users, n_items, split);
    data.user_ids = users.take();
    data.item_ids = items.take();
    return data;
}

RatingsDataset ingest_ratings(const std::string& path, RatingsFormat format, const SplitOptions& split) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ratings file '" + path + "'");
    return parse_ratings(in, format, split);
}

RatingsDataset make_dataset(std::span<const Rating> ratings, const SplitOptions& split) {
    IdMap users;
    IdMap items;
    std::vector<RawRating> raw;
    raw.reserve(ratings.size());
    for (const auto& r : ratings)
        raw.push_back({users.get(std::to_string(r.user)), items.get(std::to_string(r.item)), r.value});
    const Index n_users = users.size();
    const Index n_items = items.size();
    RatingsDataset data = build_dataset(std::move(raw), n_users, n_items, split);
    data.user_ids = users.take();
    data.item_ids = items.take();
    return data;
}

RatingsDataset inner_split(const RatingsDataset& data, double fraction, std::uint64_t seed) {
    RatingsDataset out;
    out.p = data.p;
    out.n = data.n;
    out.user_ids = data.user_ids;
    out.item_ids = data.item_ids;
    std::vector<std::pair<Index, Entry>> all;
    for (Index u = 0; u < data.n; ++u)
        for (const auto& e : data.train[static_cast<std::size_t>(u)]) all.push_back({u, e});
    std::vector<std::size_t> perm(all.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(all.size())));
    std::vector<bool> is_test(all.size(), false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[perm[i]] = true;
    out.train.assign(static_cast<std::size_t>(data.n), {});
    out.test.assign(static_cast<std::size_t>(data.n), {});
    for (std::size_t i = 0; i < all.size(); ++i)
        (is_test[i] ? out.test : out.train)[static_cast<std::size_t>(all[i].first)].push_back(all[i].second);
    out.refresh_train_summary();
    return out;
}

BiasModel fit_biases(const RatingsDataset& data, double eps_b, int iterations) {
    if (data.train_size() == 0) throw DataError("cannot fit biases without train ratings");
    BiasModel m;
    m.mu = data.global_mean;
    m.eps_b = eps_b;
    m.iterations = iterations;
    m.b_user = Vector::Zero(data.n);
    m.b_item = Vector::Zero(data.p);
    Vector item_count = Vector::Zero(data.p);
    for (const auto& u : data.train)
        for (const auto& e : u) item_count[e.item] += 1.0;
    Vector item_sum(data.p);
    for (int round = 0; round < iterations; ++round) {
        item_sum.setZero();
        for (Index u = 0; u < data.n; ++u)
            for (const auto& e : data.train[static_cast<std::size_t>(u)])
                item_sum[e.item] += e.value - m.mu - m.b_user[u];
        for (Index i = 0; i < data.p; ++i) m.b_item[i] = item_sum[i] / (item_count[i] + eps_b);
        for (Index u = 0; u < data.n; ++u) {
            const auto& list = data.train[static_cast<std::size_t>(u)];
            double sum = 0.0;
            for (const auto& e : list) sum += e.value - m.mu - m.b_item[e.item];
            const double denom = static_cast<double>(list.size()) + eps_b;
            m.b_user[u] = denom > 0.0 ? sum / denom : 0.0;
        }
    }
    return m;
}

double rmse(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.size() != truths.size()) throw DataError("rmse: length mismatch");
    if (predictions.empty()) throw DataError("rmse of an empty set");
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - truths[i];
        total += d * d;
    }
    return std::sqrt(total / static_cast<double>(predictions.size()));
}

std::vector<double> lambda_grid() {
    std::vector<double> grid(15);
    for (int i = 0; i < 15; ++i) grid[static_cast<std::size_t>(i)] = std::pow(10.0, -2.0 + 3.0 * i / 14.0);
    grid.front() = 1e-2;
    grid.back() = 10.0;
    return grid;
}

LearnerConfig CompletionConfig::learner_config(Index columns) const {
    LearnerConfig c;
    c.k = k;
    c.penalty = {PenaltyKind::SquaredL2, lambda};
    c.norm = Norm::L2;
    c.mode = ProjectionMode::ExactLazy;
    c.reduction = 1;
    c.batch_size = batch_size > 0 ? batch_size : std::max<Index>(1, columns / 100);
    c.beta = beta;
    c.epsilon = epsilon;
    c.max_epochs = epochs;
    c.eval_interval = eval_interval;
    c.seed = seed;
    c.mask_mode = MaskMode::ObservedSupport;
    c.cache_codes = true;
    c.test_columns = 0;
    return c;
}

CompletionRun::CompletionRun(const RatingsDataset& data, const CompletionConfig& config)
    : data_(&data), config_(config) {
    build_source();
    learner_ = std::make_unique<Learner>(config_.learner_config(residuals_->cols()), *residuals_);
    attach_evaluator();
}

CompletionRun::CompletionRun(const RatingsDataset& data, const CompletionConfig& config, BinaryReader& state)
    : data_(&data), config_(config) {
    build_source();
    learner_ = std::make_unique<Learner>(Learner::load(state, *residuals_));
    attach_evaluator();
}

void CompletionRun::build_source() {
    bias_ = fit_biases(*data_, config_.eps_b, config_.bias_iterations);
    const auto& d = *data_;
    std::vector<SparseColumnSource::Column> columns;
    if (!config_.item_columns) {
        columns.resize(static_cast<std::size_t>(d.n));
        for (Index u = 0; u < d.n; ++u) {
            auto& c = columns[static_cast<std::size_t>(u)];
            for (const auto& e : d.train[static_cast<std::size_t>(u)]) {
                c.rows.push_back(e.item);
                c.values.push_back(e.value - bias_.predict(u, e.item));
            }
        }
        residuals_ = std::make_unique<SparseColumnSource>(d.p, std::move(columns));
    } else {
        columns.resize(static_cast<std::size_t>(d.p));
        for (Index u = 0; u < d.n; ++u) {
            for (const auto& e : d.train[static_cast<std::size_t>(u)]) {
                auto& c = columns[static_cast<std::size_t>(e.item)];
                c.rows.push_back(u);
                c.values.push_back(e.value - bias_.predict(u, e.item));
            }
        }
        residuals_ = std::make_unique<SparseColumnSource>(d.n, std::move(columns));
    }
}

void CompletionRun::attach_evaluator() {
    learner_->set_evaluator([this](const Learner& l, TrajectoryRecord& rec) {
        std::int64_t uncovered = 0;
        const double value = rmse_with(l.dictionary().materialize(), &uncovered);
        if (std::isfinite(value)) rec.rmse = value;
    });
}

const std::vector<TrajectoryRecord>& CompletionRun::run() { return learner_->fit(); }

double CompletionRun::predict_bias_only(Index user, Index item) const {
    double value = bias_.predict(user, item);
    if (config_.clip) value = std::clamp(value, data_->min_rating, data_->max_rating);
    return value;
}

std::optional<double> CompletionRun::predict(Index user, Index item, const RowMatrix& dict) const {
    const auto& cache = learner_->code_cache();
    const Index column = config_.item_columns ? item : user;
    const Index row = config_.item_columns ? user : item;
    if (!cache || !cache->has(column)) return std::nullopt;
    double value = bias_.predict(user, item) + dict.row(row).dot(cache->codes.col(column));
    if (config_.clip) value = std::clamp(value, data_->min_rating, data_->max_rating);
    return value;
}

double CompletionRun::rmse_with(const RowMatrix& dict, std::int64_t* uncovered) const {
    std::vector<double> predictions;
    std::vector<double> truths;
    std::int64_t missing = 0;
    for (Index u = 0; u < data_->n; ++u) {
        if (data_->train[static_cast<std::size_t>(u)].empty()) continue;  // cold start
        for (const auto& e : data_->test[static_cast<std::size_t>(u)]) {
            const auto pred = predict(u, e.item, dict);
            if (!pred) {
                ++missing;
                continue;
            }
            predictions.push_back(*pred);
            truths.push_back(e.value);
        }
    }
    if (uncovered) *uncovered = missing;
    if (predictions.empty()) return std::numeric_limits<double>::quiet_NaN();
    return rmse(predictions, truths);
}

double CompletionRun::test_rmse() const {
    const double value = rmse_with(learner_->dictionary().materialize(), nullptr);
    if (!std::isfinite(value)) throw DataError("no test pair can be predicted");
    return value;
}

std::int64_t CompletionRun::uncovered_test_pairs() const {
    std::int64_t uncovered = 0;
    rmse_with(learner_->dictionary().materialize(), &uncovered);
    return uncovered;
}

std::int64_t CompletionRun::cold_start_users() const {
    std::int64_t count = 0;
    for (Index u = 0; u < data_->n; ++u)
        if (data_->train[static_cast<std::size_t>(u)].empty() && !data_->test[static_cast<std::size_t>(u)].empty())
            ++count;
    return count;
}

CrossValidation cross_validate_lambda(const RatingsDataset& data, const CompletionConfig& config,
                                      int splits, std::span<const double> grid) {
    CrossValidation cv;
    cv.grid = grid.empty() ? lambda_grid() : std::vector<double>(grid.begin(), grid.end());
    std::sort(cv.grid.begin(), cv.grid.end());
    cv.mean_rmse.assign(cv.grid.size(), 0.0);
    for (int s = 0; s < splits; ++s) {
        const RatingsDataset inner =
            inner_split(data, 1.0 / 3.0, derive_seed(config.seed, 100 + static_cast<std::uint64_t>(s)));
        for (std::size_t g = 0; g < cv.grid.size(); ++g) {
            CompletionConfig c = config;
            c.lambda = cv.grid[g];
            CompletionRun run(inner, c);
            run.run();
            cv.mean_rmse[g] += run.test_rmse() / splits;
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < cv.grid.size(); ++g)
        if (cv.mean_rmse[g] < cv.mean_rmse[best]) best = g;
    cv.chosen = cv.grid[best];
    return cv;
}

}  // namespace maskdl
