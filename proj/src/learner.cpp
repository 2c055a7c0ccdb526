#include "maskdl/learner.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <limits>
#include <numeric>

#include "maskdl/binary_io.hpp"

namespace maskdl {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::uint64_t kBatchStream = 3;

std::int64_t column_budget(double max_epochs, Index n) {
    return static_cast<std::int64_t>(std::ceil(max_epochs * static_cast<double>(n)));
}

void write_config(BinaryWriter& out, const LearnerConfig& c) {
    out.i64(c.k);
    out.u8(c.penalty.kind == PenaltyKind::L1 ? 1 : 2);
    out.f64(c.penalty.lambda);
    out.u8(c.norm == Norm::L1 ? 1 : 2);
    out.u8(c.mode == ProjectionMode::ExactLazy ? 1 : 2);
    out.i64(c.reduction);
    out.i64(c.batch_size);
    out.f64(c.beta);
    out.f64(c.epsilon);
    out.f64(c.max_epochs);
    out.i64(c.eval_interval);
    out.u64(c.seed);
    out.u8(c.mask_mode == MaskMode::Subsample ? 1 : 2);
    out.u8(c.per_column_masks ? 1 : 0);
    out.u8(c.cache_codes ? 1 : 0);
    out.i64(c.test_columns);
    out.f64(c.code_options.tolerance);
    out.i64(c.code_options.max_cycles);
    out.u8(c.code_options.polish ? 1 : 0);
    out.f64(c.code_options.max_condition);
}

LearnerConfig read_config(BinaryReader& in) {
    LearnerConfig c;
    c.k = in.i64();
    c.penalty.kind = in.u8() == 1 ? PenaltyKind::L1 : PenaltyKind::SquaredL2;
    c.penalty.lambda = in.f64();
    c.norm = in.u8() == 1 ? Norm::L1 : Norm::L2;
    c.mode = in.u8() == 1 ? ProjectionMode::ExactLazy : ProjectionMode::Approximate;
    c.reduction = in.i64();
    c.batch_size = in.i64();
    c.beta = in.f64();
    c.epsilon = in.f64();
    c.max_epochs = in.f64();
    c.eval_interval = in.i64();
    c.seed = in.u64();
    c.mask_mode = in.u8() == 1 ? MaskMode::Subsample : MaskMode::ObservedSupport;
    c.per_column_masks = in.u8() != 0;
    c.cache_codes = in.u8() != 0;
    c.test_columns = in.i64();
    c.code_options.tolerance = in.f64();
    c.code_options.max_cycles = static_cast<int>(in.i64());
    c.code_options.polish = in.u8() != 0;
    c.code_options.max_condition = in.f64();
    return c;
}

void write_optional(BinaryWriter& out, const std::optional<double>& v) {
    out.u8(v ? 1 : 0);
    out.f64(v.value_or(0.0));
}

std::optional<double> read_optional(BinaryReader& in) {
    const bool present = in.u8() != 0;
    const double v = in.f64();
    if (present) return v;
    return std::nullopt;
}

}  // namespace

std::string_view to_string(MaskMode mode) {
    return mode == MaskMode::Subsample ? "subsample" : "observed-support";
}

std::optional<MaskMode> parse_mask_mode(std::string_view text) {
    if (text == "subsample") return MaskMode::Subsample;
    if (text == "observed-support" || text == "observed") return MaskMode::ObservedSupport;
    return std::nullopt;
}

void LearnerConfig::validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(penalty.lambda >= 0.0) || !std::isfinite(penalty.lambda))
        throw ConfigError("lambda must be finite and >= 0");
    if (reduction < 1) throw ConfigError("reduction must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(beta > 0.75 && beta <= 1.0)) throw ConfigError("beta must lie in (0.75, 1]");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(max_epochs >= 0.0) || !std::isfinite(max_epochs))
        throw ConfigError("max_epochs must be finite and >= 0");
    if (eval_interval < 0) throw ConfigError("eval_interval must be >= 0");
    if (mask_mode == MaskMode::ObservedSupport && reduction != 1)
        throw ConfigError("observed-support masks require reduction 1");
}

std::int64_t LearnerConfig::resolved_eval_interval(Index n) const {
    if (eval_interval > 0) return eval_interval;
    return 100 * std::max<std::int64_t>(1, n / (batch_size * 1000));
}

CodeCache CodeCache::empty(Index k, Index n) {
    return CodeCache{Matrix::Zero(k, n), std::vector<std::int64_t>(static_cast<std::size_t>(n), -1)};
}

Index CodeCache::covered() const {
    return static_cast<Index>(
        std::count_if(last_update.begin(), last_update.end(), [](std::int64_t v) { return v >= 0; }));
}

void CodeCache::save(BinaryWriter& out) const {
    out.matrix(codes);
    out.i64_vector(last_update);
}

CodeCache CodeCache::load(BinaryReader& in) {
    CodeCache c;
    c.codes = in.matrix<Matrix>();
    c.last_update = in.i64_vector();
    if (static_cast<Index>(c.last_update.size()) != c.codes.cols())
        throw DataError("inconsistent code cache segment");
    return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + stream * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double process_cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

Dictionary init_dictionary(const LearnerConfig& config, const DataSource& data) {
    const Index n = data.cols();
    const Index p = data.rows();
    if (n < config.k) throw DataError("data has fewer columns than requested atoms");
    Rng rng(derive_seed(config.seed, kInitStream));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = 0; i < config.k; ++i) {
        const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<Index> chosen(order.begin(), order.begin() + config.k);
    std::sort(chosen.begin(), chosen.end());
    RowMatrix atoms(p, config.k);
    for (Index j = 0; j < config.k; ++j) atoms.col(j) = data.dense_column(chosen[static_cast<std::size_t>(j)]);
    return Dictionary(atoms, config.norm, config.mode);
}

double test_objective(const Eigen::Ref<const RowMatrix>& dict, const DataSource& test,
                      const Penalty& penalty, Index max_columns, const CodeSolverOptions& options) {
    const Index count = std::min(max_columns, test.cols());
    if (count == 0) return 0.0;
    const Index p = dict.rows();
    MaskedSample sample;
    sample.p = p;
    sample.rows.resize(static_cast<std::size_t>(p));
    std::iota(sample.rows.begin(), sample.rows.end(), Index{0});
    double total = 0.0;
    for (Index j = 0; j < count; ++j) {
        sample.values = test.dense_column(j);
        const Code code = solve_code(sample, dict, penalty, options);
        const Vector residual = sample.values - dict * code.alpha;
        total += 0.5 * residual.squaredNorm() + penalty.lambda * penalty.omega(code.alpha);
    }
    return total / static_cast<double>(count);
}

double sparsity_ratio(const Eigen::Ref<const RowMatrix>& dict) {
    double total = 0.0;
    Index nonzero = 0;
    for (Index j = 0; j < dict.cols(); ++j) {
        const double l2 = dict.col(j).norm();
        if (l2 == 0.0) continue;
        total += dict.col(j).lpNorm<1>() / l2;
        ++nonzero;
    }
    return nonzero == 0 ? 0.0 : total / static_cast<double>(nonzero);
}

bool surrogate_converged(double previous, double current, double epsilon) {
    if (current > 0.0) return std::abs(previous / current - 1.0) < epsilon;
    return std::abs(previous - current) / std::max(std::abs(current), 1e-12) < epsilon;
}

Learner::Learner(LearnerConfig config, const DataSource& data)
    : Learner(config, data, init_dictionary(config, data)) {}

Learner::Learner(LearnerConfig config, const DataSource& data, Dictionary initial)
    : config_(std::move(config)), data_(&data), dict_(std::move(initial)) {
    config_.validate();
    if (dict_.rows() != data.rows() || dict_.atoms() != config_.k)
        throw ConfigError("initial dictionary shape does not match data rows and k");
    if (config_.reduction > data.rows()) throw ConfigError("reduction must not exceed the row count");
    if (config_.batch_size > data.cols()) throw ConfigError("batch size must not exceed the column count");
    stats_ = SufficientStats::zeros(data.rows(), config_.k, config_.beta);
    setup_schedules();
    if (config_.cache_codes) cache_ = CodeCache::empty(config_.k, data.cols());
}

void Learner::setup_schedules() {
    masks_ = MaskSchedule(data_->rows(), config_.reduction, derive_seed(config_.seed, kMaskStream));
    batches_ = BatchSchedule(data_->cols(), config_.batch_size, derive_seed(config_.seed, kBatchStream),
                             column_budget(config_.max_epochs, data_->cols()));
}

void Learner::set_max_epochs(double epochs) {
    config_.max_epochs = epochs;
    config_.validate();
    batches_.set_limit(column_budget(epochs, data_->cols()));
    stopped_ = false;
}

bool Learner::step() {
    const double start = process_cpu_seconds();
    auto batch = batches_.next_batch();
    if (!batch) return false;

    samples_.clear();
    columns_.clear();
    std::vector<Index> shared;
    if (config_.mask_mode == MaskMode::Subsample && !config_.per_column_masks) shared = masks_.next_mask();
    for (const Index j : *batch) {
        MaskedSample sample;
        if (config_.mask_mode == MaskMode::ObservedSupport)
            data_->gather_observed(j, sample);
        else if (config_.per_column_masks)
            data_->gather(j, masks_.next_mask(), sample);
        else
            data_->gather(j, shared, sample);
        if (sample.rows.empty()) {
            ++skipped_samples_;
            continue;
        }
        samples_.push_back(std::move(sample));
        columns_.push_back(j);
    }
    if (samples_.empty()) {
        cpu_time_ += process_cpu_seconds() - start;
        return true;
    }

    // Codes against the dictionary as it stands before this iteration's update.
    codes_.clear();
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (i == 0 || samples_[i].rows != samples_[i - 1].rows) dict_.gather_rows(samples_[i].rows, dict_rows_);
        codes_.push_back(solve_code(samples_[i], dict_rows_, config_.penalty, config_.code_options));
    }

    stats_.t += 1;
    const double w = stats_.weight();
    update_C(stats_, codes_, w);
    update_B(stats_, samples_, codes_);
    update_penalty_acc(stats_, samples_, codes_, config_.penalty, w);

    std::vector<Index> rows;
    if (samples_.size() == 1) {
        rows = samples_.front().rows;
    } else {
        for (const auto& s : samples_) rows.insert(rows.end(), s.rows.begin(), s.rows.end());
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    }
    skipped_atoms_ += dictionary_update(dict_, stats_, rows).skipped_atoms;

    if (cache_) {
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            cache_->codes.col(columns_[i]) = codes_[i].alpha;
            cache_->last_update[static_cast<std::size_t>(columns_[i])] = stats_.t;
        }
    }
    cpu_time_ += process_cpu_seconds() - start;
    return true;
}

const TrajectoryRecord& Learner::evaluate() {
    const RowMatrix D = dict_.materialize();
    TrajectoryRecord rec;
    rec.t = stats_.t;
    rec.epochs = batches_.epochs();
    rec.cpu_time_s = cpu_time_;
    rec.surrogate = surrogate_value(stats_, D);
    if (test_ && test_->cols() > 0)
        rec.test_objective = test_objective(D, *test_, config_.penalty, config_.test_columns, config_.code_options);
    rec.l1_l2_ratio = sparsity_ratio(D);
    for (Index j = 0; j < D.cols(); ++j)
        rec.max_atom_norm = std::max(rec.max_atom_norm, column_norm(dict_.norm(), D.col(j)));
    if (evaluator_) evaluator_(*this, rec);
    trajectory_.push_back(rec);
    return trajectory_.back();
}

const std::vector<TrajectoryRecord>& Learner::fit() {
    const std::int64_t q = config_.resolved_eval_interval(data_->cols());
    if (trajectory_.empty()) {
        evaluate();
        last_surrogate_ = trajectory_.back().surrogate;
        if (hook_) hook_(*this);
    }
    while (!stopped_) {
        try {
            if (!step()) break;
        } catch (const NumericError&) {
            if (hook_) hook_(*this);
            throw;
        }
        if (stats_.t % q != 0 || stats_.t == trajectory_.back().t) continue;
        const double h = evaluate().surrogate;
        if (last_surrogate_ && stats_.t >= config_.reduction &&
            surrogate_converged(*last_surrogate_, h, config_.epsilon))
            stopped_ = true;
        last_surrogate_ = h;
        if (hook_) hook_(*this);
    }
    if (trajectory_.back().t != stats_.t) {
        last_surrogate_ = evaluate().surrogate;
        if (hook_) hook_(*this);
    }
    return trajectory_;
}

void Learner::save(BinaryWriter& out) const {
    write_config(out, config_);
    dict_.save(out);
    stats_.save(out);
    masks_.save(out);
    batches_.save(out);
    out.u8(cache_ ? 1 : 0);
    if (cache_) cache_->save(out);
    out.u64(trajectory_.size());
    for (const auto& r : trajectory_) {
        out.i64(r.t);
        out.f64(r.epochs);
        out.f64(r.cpu_time_s);
        out.f64(r.surrogate);
        write_optional(out, r.test_objective);
        write_optional(out, r.rmse);
        out.f64(r.l1_l2_ratio);
        out.f64(r.max_atom_norm);
    }
    write_optional(out, last_surrogate_);
    out.f64(cpu_time_);
    out.u8(stopped_ ? 1 : 0);
    out.i64(skipped_samples_);
    out.i64(skipped_atoms_);
}

Learner Learner::load(BinaryReader& in, const DataSource& data) {
    Learner l;
    l.config_ = read_config(in);
    l.config_.validate();
    l.data_ = &data;
    l.dict_ = Dictionary::load(in);
    l.stats_ = SufficientStats::load(in);
    l.masks_ = MaskSchedule::load(in);
    l.batches_ = BatchSchedule::load(in);
    if (in.u8() != 0) l.cache_ = CodeCache::load(in);
    if (l.dict_.rows() != data.rows() || l.batches_.columns() != data.cols() ||
        l.dict_.atoms() != l.config_.k || l.stats_.rows() != data.rows() || l.stats_.atoms() != l.config_.k)
        throw DataError("checkpoint does not match the data dimensions");
    const auto records = in.size_prefix(8);
    l.trajectory_.resize(records);
    for (auto& r : l.trajectory_) {
        r.t = in.i64();
        r.epochs = in.f64();
        r.cpu_time_s = in.f64();
        r.surrogate = in.f64();
        r.test_objective = read_optional(in);
        r.rmse = read_optional(in);
        r.l1_l2_ratio = in.f64();
        r.max_atom_norm = in.f64();
    }
    l.last_surrogate_ = read_optional(in);
    l.cpu_time_ = in.f64();
    l.stopped_ = in.u8() != 0;
    l.skipped_samples_ = in.i64();
    l.skipped_atoms_ = in.i64();
    return l;
}

}  // namespace maskdl
