#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "maskdl/code_solver.hpp"
#include "maskdl/data_source.hpp"
#include "maskdl/dictionary.hpp"
#include "maskdl/sampling.hpp"
#include "maskdl/stats.hpp"
#include "maskdl/types.hpp"

namespace maskdl {

enum class MaskMode {
    // Masks come from the chunked-permutation schedule (intersected with the
    // observed support for partially observed data).
    Subsample,
    // The mask of a column is its own observed support.
    ObservedSupport,
};

std::string_view to_string(MaskMode mode);
std::optional<MaskMode> parse_mask_mode(std::string_view text);

struct LearnerConfig {
    Index k = 10;
    Penalty penalty{PenaltyKind::L1, 0.1};
    Norm norm = Norm::L2;
    ProjectionMode mode = ProjectionMode::ExactLazy;
    Index reduction = 1;
    Index batch_size = 1;
    double beta = 1.0;
    double epsilon = 1e-4;
    // Columns consumed before stopping, in units of n. Fractional values allowed.
    double max_epochs = 10.0;
    // Evaluation / stopping-check cadence in iterations; 0 selects
    // 100 * max(1, n / (batch_size * 1000)).
    std::int64_t eval_interval = 0;
    std::uint64_t seed = 0;
    MaskMode mask_mode = MaskMode::Subsample;
    // Draw one schedule mask per column instead of one per mini-batch.
    bool per_column_masks = false;
    // Keep the most recent code of every column (needed for prediction).
    bool cache_codes = false;
    // Held-out columns used for the test objective.
    Index test_columns = 512;
    CodeSolverOptions code_options;

    void validate() const;
    std::int64_t resolved_eval_interval(Index n) const;
};

struct TrajectoryRecord {
    std::int64_t t = 0;
    double epochs = 0.0;
    double cpu_time_s = 0.0;
    double surrogate = 0.0;
    std::optional<double> test_objective;
    std::optional<double> rmse;
    double l1_l2_ratio = 0.0;
    // Largest psi(d_j) over the atoms at this point.
    double max_atom_norm = 0.0;
};

/// Most recent code per column and the iteration that produced it.
struct CodeCache {
    Matrix codes;                           // k x n
    std::vector<std::int64_t> last_update;  // -1 when the column was never drawn

    static CodeCache empty(Index k, Index n);
    bool has(Index column) const { return last_update[static_cast<std::size_t>(column)] >= 0; }
    Index covered() const;

    void save(BinaryWriter& out) const;
    static CodeCache load(BinaryReader& in);
};

/// D_0: k distinct columns drawn under `seed`, unobserved entries zero, each
/// projected onto the unit ball.
Dictionary init_dictionary(const LearnerConfig& config, const DataSource& data);

/// Mean over columns of min_alpha 1/2 ||x - D alpha||^2 + lambda Omega(alpha),
/// solved on the full column.
double test_objective(const Eigen::Ref<const RowMatrix>& dict, const DataSource& test,
                      const Penalty& penalty, Index max_columns = 512,
                      const CodeSolverOptions& options = {});

/// Mean of ||d_j||_1 / ||d_j||_2 over the nonzero atoms.
double sparsity_ratio(const Eigen::Ref<const RowMatrix>& dict);

/// Stopping rule on two consecutive surrogate evaluations.
bool surrogate_converged(double previous, double current, double epsilon);

class Learner {
   public:
    // Extra metrics computed at evaluation points (e.g. RMSE).
    using Evaluator = std::function<void(const Learner&, TrajectoryRecord&)>;

    Learner(LearnerConfig config, const DataSource& data);
    Learner(LearnerConfig config, const DataSource& data, Dictionary initial);

    /// One iteration: batch draw, codes, statistics, dictionary update.
    /// Returns false once the epoch budget is exhausted.
    bool step();

    /// Evaluates the current iterate and appends it to the trajectory.
    const TrajectoryRecord& evaluate();

    /// Runs to the stopping rule or the epoch budget. Evaluates at t = 0 (when
    /// nothing has been recorded yet), every eval_interval iterations and at
    /// the end.
    const std::vector<TrajectoryRecord>& fit();

    void set_test_source(const DataSource* test) { test_ = test; }
    void set_evaluator(Evaluator evaluator) { evaluator_ = std::move(evaluator); }
    /// Called after each evaluation, e.g. to write a checkpoint.
    void set_checkpoint_hook(std::function<void(const Learner&)> hook) { hook_ = std::move(hook); }
    /// Extends or shortens the epoch budget (used on resume).
    void set_max_epochs(double epochs);

    const LearnerConfig& config() const { return config_; }
    const Dictionary& dictionary() const { return dict_; }
    const SufficientStats& stats() const { return stats_; }
    const std::vector<TrajectoryRecord>& trajectory() const { return trajectory_; }
    const std::optional<CodeCache>& code_cache() const { return cache_; }
    const DataSource& data() const { return *data_; }
    std::int64_t iteration() const { return stats_.t; }
    double epochs() const { return batches_.epochs(); }
    double cpu_time() const { return cpu_time_; }
    bool stopped() const { return stopped_; }
    std::int64_t skipped_samples() const { return skipped_samples_; }
    std::int64_t skipped_atoms() const { return skipped_atoms_; }
    /// Columns and codes of the most recent iteration.
    const std::vector<Index>& last_columns() const { return columns_; }
    const std::vector<Code>& last_codes() const { return codes_; }

    /// Full state (config, schedules, dictionary, statistics, trajectory,
    /// optional code cache).
    void save(BinaryWriter& out) const;
    static Learner load(BinaryReader& in, const DataSource& data);

   private:
    Learner() = default;
    void setup_schedules();

    LearnerConfig config_;
    const DataSource* data_ = nullptr;
    const DataSource* test_ = nullptr;
    Dictionary dict_;
    SufficientStats stats_;
    MaskSchedule masks_;
    BatchSchedule batches_;
    std::optional<CodeCache> cache_;
    std::vector<TrajectoryRecord> trajectory_;
    std::optional<double> last_surrogate_;
    double cpu_time_ = 0.0;
    bool stopped_ = false;
    std::int64_t skipped_samples_ = 0;
    std::int64_t skipped_atoms_ = 0;
    Evaluator evaluator_;
    std::function<void(const Learner&)> hook_;

    // Scratch reused across iterations.
    std::vector<MaskedSample> samples_;
    std::vector<Code> codes_;
    std::vector<Index> columns_;
    RowMatrix dict_rows_;
};

/// Process CPU time in seconds.
double process_cpu_seconds();

/// Seed for an independent stream derived from `seed` (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace maskdl
