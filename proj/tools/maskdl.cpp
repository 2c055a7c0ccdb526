#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "maskdl/binary_io.hpp"
#include "maskdl/completion.hpp"
#include "maskdl/data_source.hpp"
#include "maskdl/io.hpp"
#include "maskdl/learner.hpp"
#include "maskdl/synthetic.hpp"

namespace fs = std::filesystem;
using namespace maskdl;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4, kOutputExists = 5 };

class OutputExists : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

constexpr const char* kSeedVariable = "MASKDL_SEED";

// ---------------------------------------------------------------- helpers

void prepare_output(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir) && !fs::is_directory(dir)) throw OutputExists("'" + dir.string() + "' is not a directory");
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!overwrite)
            throw OutputExists("output directory '" + dir.string() + "' already exists (use --overwrite)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

// Writes to a sibling file first so a crash never leaves a truncated file.
void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    write_bytes(tmp.string(), bytes);
    fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Resolved option values of a subcommand as key=value text.
KeyValues resolved_options(const CLI::App& sub) {
    KeyValues values;
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config" || name == "overwrite" || name == "jobs") continue;
        if (opt->count() > 0)
            values[name] = opt->get_items_expected_max() > 1 ? join(opt->results(), ',') : opt->results().back();
        else if (opt->get_expected_min() == 0 && opt->get_default_str().empty())
            values[name] = "false";
        else
            values[name] = opt->get_default_str();
    }
    return values;
}

// Dense matrix from a binary matrix file or comma-separated text (one matrix row per line).
Matrix load_dense(const std::string& path) {
    const auto bytes = read_bytes(path);
    static const std::string magic = "MSKDLMX\n";
    if (bytes.size() >= magic.size() && std::equal(magic.begin(), magic.end(), bytes.begin()))
        return read_matrix(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ',')) {
            const auto begin = field.find_first_not_of(" \t\r");
            const auto end = field.find_last_not_of(" \t\r");
            const auto v = begin == std::string::npos ? std::nullopt
                                                      : parse_double(std::string_view(field).substr(begin, end - begin + 1));
            if (!v || !std::isfinite(*v))
                throw DataError(path + ": line " + std::to_string(number) + ": bad number");
            row.push_back(*v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError(path + ": line " + std::to_string(number) + ": wrong field count");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path + ": no data");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

template <typename T>
T parse_enum(std::optional<T> value, const std::string& what, const std::string& text) {
    if (!value) throw ConfigError("unknown " + what + " '" + text + "'");
    return *value;
}

// Runs `count` tasks on up to `jobs` threads; the first failure is rethrown.
void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string kind = "sparse-dict";
    std::string out;
    bool overwrite = false;
    std::uint64_t seed = 0;
    Index p = 400;
    Index n = 5000;
    Index k = 10;
    Index n_test = 512;
    double snr = std::numeric_limits<double>::infinity();
    double atom_density = 0.1;
    double density = 0.1;
    double noise = 0.1;
    double mean = 3.5;
    double user_bias_std = 0.2;
    double item_bias_std = 0.2;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
    app.add_option("--kind", a.kind, "sparse-dict or low-rank-ratings")->check(CLI::IsMember({"sparse-dict", "low-rank-ratings"}));
    app.add_option("--out", a.out, "Output directory")->required();
    app.add_flag("--overwrite", a.overwrite, "Replace an existing output directory");
    app.add_option("--seed", a.seed, "Random seed");
    app.add_option("-p,--p", a.p, "Rows (sparse-dict) or items (ratings)");
    app.add_option("-n,--n", a.n, "Train columns (sparse-dict) or users (ratings)");
    app.add_option("-k,--k", a.k, "Atoms (sparse-dict) or rank (ratings)");
    app.add_option("--n-test", a.n_test, "Held-out columns (sparse-dict)");
    app.add_option("--snr", a.snr, "Signal-to-noise power ratio, inf for no noise (sparse-dict)");
    app.add_option("--atom-density", a.atom_density, "Fraction of nonzero rows per atom (sparse-dict)");
    app.add_option("--density", a.density, "Observation probability (ratings)");
    app.add_option("--noise", a.noise, "Rating noise standard deviation (ratings)");
    app.add_option("--mean", a.mean, "Global mean rating (ratings)");
    app.add_option("--user-bias-std", a.user_bias_std, "User bias standard deviation (ratings)");
    app.add_option("--item-bias-std", a.item_bias_std, "Item bias standard deviation (ratings)");
}

void write_column(const fs::path& path, const Vector& v) { write_matrix(path.string(), Matrix(v)); }

int run_generate(const GenerateArgs& a, const CLI::App& sub) {
    const fs::path dir(a.out);
    prepare_output(dir, a.overwrite);
    write_text(dir / "config.txt", format_key_values(resolved_options(sub)));
    if (a.kind == "sparse-dict") {
        SparseDictParams params;
        params.p = a.p;
        params.n = a.n;
        params.k = a.k;
        params.n_test = a.n_test;
        params.snr = a.snr;
        params.atom_density = a.atom_density;
        params.seed = a.seed;
        const auto data = generate_sparse_dict(params);
        write_matrix((dir / "train.mtx").string(), data.train);
        write_matrix((dir / "test.mtx").string(), data.test);
        write_matrix((dir / "atoms.mtx").string(), data.atoms);
        write_matrix((dir / "codes.mtx").string(), data.codes);
        std::cout << "kind=sparse-dict\np=" << a.p << "\nn=" << a.n << "\nn_test=" << a.n_test
                  << "\nnoise_std=" << format_double(data.noise_std) << "\n";
        return kOk;
    }
    LowRankRatingsParams params;
    params.n_users = a.n;
    params.n_items = a.p;
    params.rank = a.k;
    params.density = a.density;
    params.noise = a.noise;
    params.mean = a.mean;
    params.user_bias_std = a.user_bias_std;
    params.item_bias_std = a.item_bias_std;
    params.seed = a.seed;
    const auto data = generate_low_rank_ratings(params);
    std::string text = "# user,item,rating\n";
    for (const auto& r : data.ratings)
        text += std::to_string(r.user) + ',' + std::to_string(r.item) + ',' + format_double(r.value) + '\n';
    write_text(dir / "ratings.csv", text);
    write_matrix((dir / "item_factors.mtx").string(), data.item_factors);
    write_matrix((dir / "user_factors.mtx").string(), data.user_factors);
    write_column(dir / "user_bias.mtx", data.user_bias);
    write_column(dir / "item_bias.mtx", data.item_bias);
    std::cout << "kind=low-rank-ratings\nusers=" << a.n << "\nitems=" << a.p << "\nratings=" << data.ratings.size()
              << "\n";
    return kOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string train;
    std::string test;
    std::string out;
    std::string resume;
    bool overwrite = false;
    int jobs = 1;
    std::vector<Index> r_sweep;
    Index k = 10;
    std::string penalty = "l1";
    double lambda = 0.1;
    std::string norm = "l2";
    std::string mode = "exact-lazy";
    Index reduction = 1;
    Index batch_size = 1;
    double beta = 1.0;
    double epsilon = 1e-4;
    double epochs = 10.0;
    std::int64_t eval_interval = 0;
    std::uint64_t seed = 0;
    std::string mask_mode = "subsample";
    bool per_column_masks = false;
    Index test_columns = 512;
};

void add_fit(CLI::App& app, FitArgs& a) {
    app.add_option("--train", a.train, "Train matrix (p x n; binary matrix file or comma-separated text)");
    app.add_option("--test", a.test, "Held-out matrix for the test objective");
    app.add_option("--out", a.out, "Output directory")->required();
    app.add_option("--resume", a.resume, "Continue from a checkpoint file");
    app.add_flag("--overwrite", a.overwrite, "Replace an existing output directory");
    app.add_option("--jobs", a.jobs, "Concurrent runs for sweeps")->check(CLI::PositiveNumber);
    app.add_option("--r-sweep", a.r_sweep, "Comma-separated reductions, one run each")->delimiter(',');
    app.add_option("-k,--k", a.k, "Dictionary atoms");
    app.add_option("--penalty", a.penalty, "Code penalty: l1 or ridge");
    app.add_option("--lambda", a.lambda, "Code penalty weight");
    app.add_option("--norm", a.norm, "Atom constraint ball: l1 or l2");
    app.add_option("--mode", a.mode, "Projection mode: exact-lazy or approximate");
    app.add_option("-r,--reduction", a.reduction, "Subsampling ratio r");
    app.add_option("--batch-size", a.batch_size, "Mini-batch size");
    app.add_option("--beta", a.beta, "Weight decay exponent in (0.75, 1]");
    app.add_option("--epsilon", a.epsilon, "Relative surrogate tolerance for stopping");
    app.add_option("--epochs", a.epochs, "Epoch budget");
    app.add_option("--eval-interval", a.eval_interval, "Iterations between evaluations (0 = automatic)");
    app.add_option("--seed", a.seed, "Random seed");
    app.add_option("--mask-mode", a.mask_mode, "subsample or observed-support");
    app.add_flag("--per-column-masks", a.per_column_masks, "Draw one mask per column");
    app.add_option("--test-columns", a.test_columns, "Held-out columns used for the test objective");
}

LearnerConfig learner_config(const FitArgs& a) {
    LearnerConfig c;
    c.k = a.k;
    c.penalty = {parse_enum(parse_penalty(a.penalty), "penalty", a.penalty), a.lambda};
    c.norm = parse_enum(parse_norm(a.norm), "norm", a.norm);
    c.mode = parse_enum(parse_mode(a.mode), "mode", a.mode);
    c.reduction = a.reduction;
    c.batch_size = a.batch_size;
    c.beta = a.beta;
    c.epsilon = a.epsilon;
    c.max_epochs = a.epochs;
    c.eval_interval = a.eval_interval;
    c.seed = a.seed;
    c.mask_mode = parse_enum(parse_mask_mode(a.mask_mode), "mask mode", a.mask_mode);
    c.per_column_masks = a.per_column_masks;
    c.test_columns = a.test_columns;
    c.validate();
    return c;
}

struct FitOutputs {
    fs::path trajectory;
    fs::path checkpoint;
    fs::path dictionary;
};

FitOutputs fit_outputs(const fs::path& dir, const std::string& suffix) {
    return {dir / ("trajectory" + suffix + ".csv"), dir / ("checkpoint" + suffix + ".bin"),
            dir / ("dictionary" + suffix + ".mtx")};
}

void run_learner(Learner& learner, const FitOutputs& out, const std::string& config_text) {
    learner.set_checkpoint_hook([&](const Learner& l) {
        write_text_atomic(out.trajectory, format_trajectory(l.trajectory(), false));
        write_atomic(out.checkpoint, encode_checkpoint(l, config_text));
    });
    learner.fit();
    write_text_atomic(out.trajectory, format_trajectory(learner.trajectory(), false));
    write_atomic(out.checkpoint, encode_checkpoint(learner, config_text));
    write_matrix(out.dictionary.string(), Matrix(learner.dictionary().materialize()));
}

std::string fit_summary(const std::string& label, const Learner& l) {
    const auto& last = l.trajectory().back();
    std::ostringstream out;
    out << label << "t=" << last.t << " epochs=" << format_double(last.epochs)
              << " surrogate=" << format_double(last.surrogate);
    if (last.test_objective) out << " test_objective=" << format_double(*last.test_objective);
    out << " l1_l2_ratio=" << format_double(last.l1_l2_ratio) << " cpu_time_s=" << format_double(l.cpu_time())
        << (l.stopped() ? " stopped=converged" : "") << "\n";
    return out.str();
}

int run_fit(FitArgs a, const CLI::App& sub) {
    std::optional<BinaryReader> state;
    std::string checkpoint_config;
    if (!a.resume.empty()) {
        if (!a.r_sweep.empty()) throw ConfigError("--resume cannot be combined with --r-sweep");
        state.emplace(read_bytes(a.resume));
        checkpoint_config = read_checkpoint_header(*state).run_config;
        const KeyValues saved = parse_key_values(checkpoint_config);
        if (a.train.empty() && saved.count("train")) a.train = saved.at("train");
        if (a.test.empty() && saved.count("test")) a.test = saved.at("test");
    }
    if (a.train.empty()) throw ConfigError("--train is required");

    std::vector<Index> reductions = a.r_sweep;
    const bool sweep = !reductions.empty();
    if (!sweep) reductions.push_back(a.reduction);
    std::vector<LearnerConfig> configs;
    if (!state) {
        for (Index r : reductions) {
            FitArgs run = a;
            run.reduction = r;
            configs.push_back(learner_config(run));
        }
    }

    KeyValues echo = resolved_options(sub);
    echo["train"] = a.train;
    echo["test"] = a.test;
    const fs::path dir(a.out);
    prepare_output(dir, a.overwrite);
    write_text(dir / "config.txt", format_key_values(echo));

    const DenseSource train(load_dense(a.train));
    std::optional<DenseSource> test;
    if (!a.test.empty()) {
        test.emplace(load_dense(a.test));
        if (test->rows() != train.rows()) throw DataError("train and test row counts differ");
    }

    if (state) {
        Learner learner = Learner::load(*state, train);
        if (!state->at_end()) throw DataError("trailing bytes in checkpoint '" + a.resume + "'");
        if (sub.get_option("--epochs")->count() > 0) learner.set_max_epochs(a.epochs);
        if (test) learner.set_test_source(&*test);
        run_learner(learner, fit_outputs(dir, ""), format_key_values(echo));
        std::cout << fit_summary("", learner);
        return kOk;
    }

    std::vector<std::string> summaries(reductions.size());
    run_parallel(reductions.size(), a.jobs, [&](std::size_t i) {
        KeyValues run_echo = echo;
        run_echo["reduction"] = std::to_string(reductions[i]);
        Learner learner(configs[i], train);
        if (test) learner.set_test_source(&*test);
        const std::string suffix = sweep ? "_r" + std::to_string(reductions[i]) : "";
        run_learner(learner, fit_outputs(dir, suffix), format_key_values(run_echo));
        summaries[i] = fit_summary(sweep ? "r=" + std::to_string(reductions[i]) + " " : "", learner);
    });
    for (const auto& s : summaries) std::cout << s;
    return kOk;
}

// ---------------------------------------------------------------- complete

struct CompleteArgs {
    std::string ratings;
    std::string format = "auto";
    double test_fraction = 0.25;
    std::uint64_t split_seed = 0;
    std::string out;
    std::string resume;
    bool overwrite = false;
    int jobs = 1;
    bool cv = false;
    int cv_splits = 3;
    std::vector<double> beta_sweep;
    Index k = 30;
    double lambda = 0.1;
    double beta = 0.9;
    Index batch_size = 0;
    double epochs = 30.0;
    double epsilon = 1e-6;
    std::int64_t eval_interval = 0;
    double eps_b = 10.0;
    int bias_iterations = 10;
    bool clip = true;
    bool item_columns = false;
    bool predictions = true;
    std::uint64_t seed = 0;
};

void add_complete(CLI::App& app, CompleteArgs& a) {
    app.add_option("--ratings", a.ratings, "Ratings file (user, item, rating[, timestamp])");
    app.add_option("--format", a.format, "auto, double-colon, comma or tab");
    app.add_option("--test-fraction", a.test_fraction, "Fraction of ratings held out for testing");
    app.add_option("--split-seed", a.split_seed, "Seed of the train/test split");
    app.add_option("--out", a.out, "Output directory")->required();
    app.add_option("--resume", a.resume, "Continue from a checkpoint file");
    app.add_flag("--overwrite", a.overwrite, "Replace an existing output directory");
    app.add_option("--jobs", a.jobs, "Concurrent runs for sweeps")->check(CLI::PositiveNumber);
    app.add_flag("--cv", a.cv, "Select lambda by inner cross-validation over the grid");
    app.add_option("--cv-splits", a.cv_splits, "Inner cross-validation splits")->check(CLI::PositiveNumber);
    app.add_option("--beta-sweep", a.beta_sweep, "Comma-separated beta values, one run each")->delimiter(',');
    app.add_option("-k,--k", a.k, "Dictionary atoms");
    app.add_option("--lambda", a.lambda, "Ridge penalty on codes");
    app.add_option("--beta", a.beta, "Weight decay exponent in (0.75, 1]");
    app.add_option("--batch-size", a.batch_size, "Users per mini-batch (0 = n / 100)");
    app.add_option("--epochs", a.epochs, "Epoch budget");
    app.add_option("--epsilon", a.epsilon, "Relative surrogate tolerance for stopping");
    app.add_option("--eval-interval", a.eval_interval, "Iterations between evaluations (0 = automatic)");
    app.add_option("--eps-b", a.eps_b, "Bias ridge");
    app.add_option("--bias-iterations", a.bias_iterations, "Alternating bias rounds");
    app.add_option("--clip", a.clip, "Clip predictions to the train rating range");
    app.add_flag("--item-columns", a.item_columns, "Stream item columns instead of user columns");
    app.add_option("--predictions", a.predictions, "Write test predictions");
    app.add_option("--seed", a.seed, "Random seed");
}

CompletionConfig completion_config(const CompleteArgs& a) {
    CompletionConfig c;
    c.k = a.k;
    c.lambda = a.lambda;
    c.beta = a.beta;
    c.batch_size = a.batch_size;
    c.epochs = a.epochs;
    c.epsilon = a.epsilon;
    c.eval_interval = a.eval_interval;
    c.eps_b = a.eps_b;
    c.bias_iterations = a.bias_iterations;
    c.clip = a.clip;
    c.item_columns = a.item_columns;
    c.seed = a.seed;
    return c;
}

double bias_only_rmse(const CompletionRun& run, const RatingsDataset& data) {
    std::vector<double> predictions;
    std::vector<double> truths;
    for (Index u = 0; u < data.n; ++u) {
        if (data.train[static_cast<std::size_t>(u)].empty()) continue;
        for (const auto& e : data.test[static_cast<std::size_t>(u)]) {
            predictions.push_back(run.predict_bias_only(u, e.item));
            truths.push_back(e.value);
        }
    }
    return predictions.empty() ? std::numeric_limits<double>::quiet_NaN() : rmse(predictions, truths);
}

std::string prediction_csv(const CompletionRun& run, const RatingsDataset& data) {
    const RowMatrix dict = run.learner().dictionary().materialize();
    std::string text = "user,item,prediction\n";
    for (Index u = 0; u < data.n; ++u) {
        for (const auto& e : data.test[static_cast<std::size_t>(u)]) {
            const double value = run.predict(u, e.item, dict).value_or(run.predict_bias_only(u, e.item));
            text += data.user_ids[static_cast<std::size_t>(u)] + ',' + data.item_ids[static_cast<std::size_t>(e.item)] +
                    ',' + format_double(value) + '\n';
        }
    }
    return text;
}

KeyValues completion_report(const CompletionRun& run, const RatingsDataset& data, const CompletionConfig& config) {
    const auto& trajectory = run.learner().trajectory();
    std::vector<double> times;
    std::vector<double> scores;
    for (const auto& r : trajectory) {
        if (!r.rmse) continue;
        times.push_back(r.cpu_time_s);
        scores.push_back(*r.rmse);
    }
    KeyValues report;
    report["rmse"] = format_double(run.test_rmse());
    report["bias_only_rmse"] = format_double(bias_only_rmse(run, data));
    report["lambda"] = format_double(config.lambda);
    report["beta"] = format_double(config.beta);
    report["k"] = std::to_string(config.k);
    if (const auto t = convergence_time(times, scores)) report["convergence_time_s"] = format_double(*t);
    report["cpu_time_s"] = format_double(run.learner().cpu_time());
    report["iterations"] = std::to_string(run.learner().iteration());
    report["epochs"] = format_double(run.learner().epochs());
    report["stopped"] = run.learner().stopped() ? "converged" : "budget";
    report["users"] = std::to_string(data.n);
    report["items"] = std::to_string(data.p);
    report["train_ratings"] = std::to_string(data.train_size());
    report["test_ratings"] = std::to_string(data.test_size());
    report["duplicates"] = std::to_string(data.duplicates);
    report["uncovered_test_pairs"] = std::to_string(run.uncovered_test_pairs());
    report["cold_start_users"] = std::to_string(run.cold_start_users());
    return report;
}

int run_complete(CompleteArgs a, const CLI::App& sub) {
    std::optional<BinaryReader> state;
    if (!a.resume.empty()) {
        if (!a.beta_sweep.empty() || a.cv) throw ConfigError("--resume cannot be combined with --beta-sweep or --cv");
        state.emplace(read_bytes(a.resume));
        const KeyValues saved = parse_key_values(read_checkpoint_header(*state).run_config);
        // The dataset and split must match the checkpointed run.
        auto take = [&](const std::string& key, auto& field) {
            if (!saved.count(key)) throw DataError("checkpoint lacks '" + key + "'");
            std::istringstream in(saved.at(key));
            in >> field;
        };
        if (a.ratings.empty()) a.ratings = saved.count("ratings") ? saved.at("ratings") : "";
        take("format", a.format);
        take("test-fraction", a.test_fraction);
        take("split-seed", a.split_seed);
        take("eps-b", a.eps_b);
        take("bias-iterations", a.bias_iterations);
        take("lambda", a.lambda);
        std::string flag;
        take("item-columns", flag);
        a.item_columns = flag == "true" || flag == "1";
    }
    if (a.ratings.empty()) throw ConfigError("--ratings is required");
    const RatingsFormat format = parse_enum(parse_ratings_format(a.format), "ratings format", a.format);
    if (!(a.test_fraction > 0.0 && a.test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");

    CompletionConfig base = completion_config(a);
    for (double beta : a.beta_sweep.empty() ? std::vector<double>{a.beta} : a.beta_sweep) {
        CompletionConfig check = base;
        check.beta = beta;
        check.learner_config(1).validate();
    }
    const fs::path dir(a.out);
    prepare_output(dir, a.overwrite);
    const RatingsDataset data = ingest_ratings(a.ratings, format, {a.test_fraction, a.split_seed});

    std::optional<CrossValidation> cv;
    if (a.cv) {
        cv = cross_validate_lambda(data, base, a.cv_splits);
        base.lambda = cv->chosen;
        a.lambda = cv->chosen;
        std::string table = "lambda,mean_rmse\n";
        for (std::size_t i = 0; i < cv->grid.size(); ++i)
            table += format_double(cv->grid[i]) + ',' + format_double(cv->mean_rmse[i]) + '\n';
        write_text(dir / "cv.csv", table);
    }
    KeyValues echo = resolved_options(sub);
    echo["ratings"] = a.ratings;
    echo["lambda"] = format_double(base.lambda);
    write_text(dir / "config.txt", format_key_values(echo));

    std::vector<double> betas = a.beta_sweep;
    const bool sweep = !betas.empty();
    if (!sweep) betas.push_back(a.beta);
    std::vector<std::string> summaries(betas.size());
    run_parallel(betas.size(), a.jobs, [&](std::size_t i) {
        CompletionConfig config = base;
        config.beta = betas[i];
        KeyValues run_echo = echo;
        run_echo["beta"] = format_double(betas[i]);
        const std::string config_text = format_key_values(run_echo);
        const std::string suffix = sweep ? "_beta" + format_double(betas[i]) : "";
        const fs::path trajectory_path = dir / ("trajectory" + suffix + ".csv");
        const fs::path checkpoint_path = dir / ("checkpoint" + suffix + ".bin");

        std::unique_ptr<CompletionRun> run;
        if (state) {
            run = std::make_unique<CompletionRun>(data, config, *state);
            if (sub.get_option("--epochs")->count() > 0) run->learner().set_max_epochs(config.epochs);
        } else {
            run = std::make_unique<CompletionRun>(data, config);
        }
        run->learner().set_checkpoint_hook([&](const Learner& l) {
            write_text_atomic(trajectory_path, format_trajectory(l.trajectory(), true));
            write_atomic(checkpoint_path, encode_checkpoint(l, config_text));
        });
        run->run();
        write_text_atomic(trajectory_path, format_trajectory(run->learner().trajectory(), true));
        write_atomic(checkpoint_path, encode_checkpoint(run->learner(), config_text));

        KeyValues report = completion_report(*run, data, config);
        if (cv) report["lambda_cv"] = "true";
        write_text(dir / ("report" + suffix + ".txt"), format_key_values(report));
        if (a.predictions && !sweep) write_text(dir / "predictions.csv", prediction_csv(*run, data));
        summaries[i] = (sweep ? "beta=" + format_double(betas[i]) + " " : "") + "rmse=" + report["rmse"] +
                       " bias_only_rmse=" + report["bias_only_rmse"] + " lambda=" + report["lambda"] +
                       (report.count("convergence_time_s") ? " convergence_time_s=" + report["convergence_time_s"] : "") +
                       "\n";
    });
    for (const auto& s : summaries) std::cout << s;
    return kOk;
}

// ---------------------------------------------------------------- eval-trajectory

struct EvalArgs {
    std::string trajectory;
    std::string metric = "auto";
    double tolerance = 1e-3;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    app.add_option("--trajectory", a.trajectory, "Trajectory file")->required();
    app.add_option("--metric", a.metric, "auto, rmse, test_objective or surrogate")
        ->check(CLI::IsMember({"auto", "rmse", "test_objective", "surrogate"}));
    app.add_option("--tolerance", a.tolerance, "Relative band around the final score")->check(CLI::PositiveNumber);
}

int run_eval(const EvalArgs& a) {
    const auto records = read_trajectory(a.trajectory);
    std::string metric = a.metric;
    if (metric == "auto") {
        const bool has_rmse = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.rmse.has_value(); });
        const bool has_test = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.test_objective.has_value(); });
        metric = has_rmse ? "rmse" : has_test ? "test_objective" : "surrogate";
    }
    std::vector<double> times;
    std::vector<double> scores;
    std::vector<std::int64_t> iterations;
    for (const auto& r : records) {
        std::optional<double> v = metric == "rmse" ? r.rmse : metric == "test_objective" ? r.test_objective
                                                                                         : std::optional<double>(r.surrogate);
        if (!v) continue;
        times.push_back(r.cpu_time_s);
        scores.push_back(*v);
        iterations.push_back(r.t);
    }
    if (scores.empty()) throw DataError("trajectory has no '" + metric + "' values");
    const double t = *convergence_time(times, scores, a.tolerance);
    const auto at = static_cast<std::size_t>(std::find(times.begin(), times.end(), t) - times.begin());
    KeyValues report;
    report["metric"] = metric;
    report["final"] = format_double(scores.back());
    report["tolerance"] = format_double(a.tolerance);
    report["convergence_time_s"] = format_double(t);
    report["convergence_iteration"] = std::to_string(iterations[at]);
    report["points"] = std::to_string(scores.size());
    std::cout << format_key_values(report);
    return kOk;
}

// ---------------------------------------------------------------- main

// Splices `--key=value` pairs from a subcommand's --config file in front of
// its command-line arguments, so flags given later take precedence. The seed
// variable, when set, goes last and overrides both.
std::vector<std::string> expand_config(const std::vector<std::string>& args,
                                       const std::vector<std::string>& subcommands) {
    std::vector<std::string> out;
    std::size_t sub = args.size();
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (std::find(subcommands.begin(), subcommands.end(), args[i]) != subcommands.end()) {
            sub = i;
            break;
        }
    }
    std::optional<std::string> path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i > sub && args[i] == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config needs a file");
            path = args[++i];
            continue;
        }
        if (i > sub && args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            continue;
        }
        rest.push_back(args[i]);
    }
    for (std::size_t i = 0; i <= sub && i < rest.size(); ++i) out.push_back(rest[i]);
    if (path) {
        for (const auto& [key, value] : read_key_values(*path)) {
            if (value.empty()) continue;
            out.push_back("--" + key + "=" + value);
        }
    }
    for (std::size_t i = sub + 1; i < rest.size(); ++i) out.push_back(rest[i]);
    const char* env = std::getenv(kSeedVariable);
    if (env && sub < args.size() && args[sub] != "eval-trajectory") {
        std::cerr << kSeedVariable << "=" << env << " overrides --seed\n";
        out.push_back(std::string("--seed=") + env);
    }
    return out;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"Masked online dictionary learning"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
    app.require_subcommand(1);

    GenerateArgs gen;
    FitArgs fit;
    CompleteArgs complete;
    EvalArgs eval;
    auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic dataset with its ground truth");
    auto* fit_cmd = app.add_subcommand("fit", "Learn a dictionary from a dense matrix");
    auto* complete_cmd = app.add_subcommand("complete", "Matrix completion on a ratings file");
    auto* eval_cmd = app.add_subcommand("eval-trajectory", "Convergence time of a trajectory file");
    add_generate(*gen_cmd, gen);
    add_fit(*fit_cmd, fit);
    add_complete(*complete_cmd, complete);
    add_eval(*eval_cmd, eval);
    for (auto* cmd : {gen_cmd, fit_cmd, complete_cmd})
        cmd->add_option("--config", "Flat key=value file; command-line flags take precedence");

    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args, {"generate", "fit", "complete", "eval-trajectory"});
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    if (*gen_cmd) return run_generate(gen, *gen_cmd);
    if (*fit_cmd) return run_fit(fit, *fit_cmd);
    if (*complete_cmd) return run_complete(complete, *complete_cmd);
    return run_eval(eval);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const OutputExists& e) {
        std::cerr << "output error: " << e.what() << "\n";
        return kOutputExists;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
