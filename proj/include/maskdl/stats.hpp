#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskdl/code_solver.hpp"
#include "maskdl/types.hpp"

namespace maskdl {

class BinaryWriter;
class BinaryReader;

/// Sufficient statistics of the approximate surrogate
///     h_t(D) = 1/2 Tr(D^T D C) - Tr(D^T B) + penalty_acc,
/// i.e. the averaged loss 1/2 ||x - D alpha||^2 up to the data-energy constant
/// 1/2 mean ||x||^2, which does not depend on D and is not tracked.
///
/// C is the weighted average of alpha alpha^T, B the per-row weighted average
/// of x alpha^T over the iterations in which that row was observed, and
/// `seen[m]` counts those iterations (the diagonal of sum_i M_i).
struct SufficientStats {
    Matrix C;
    RowMatrix B;
    std::vector<std::int64_t> seen;
    double penalty_acc = 0.0;
    std::int64_t t = 0;
    double beta = 1.0;

    static SufficientStats zeros(Index p, Index k, double beta);

    Index rows() const { return B.rows(); }
    Index atoms() const { return C.rows(); }

    /// Global weight (1/t)^beta for the current iteration counter.
    double weight() const;

    void save(BinaryWriter& out) const;
    static SufficientStats load(BinaryReader& in);
};

/// C <- (1 - w) C + w alpha alpha^T.
void update_C(SufficientStats& stats, const Code& code, double w);

/// Mini-batch variant: the alpha alpha^T contributions are averaged first.
void update_C(SufficientStats& stats, std::span<const Code> codes, double w);

/// For each masked row m: seen[m] += 1, then
///     B[m,:] <- B[m,:] + (1/seen[m])^beta (x[m] alpha^T - B[m,:]).
/// Rows outside the mask are not touched.
void update_B(SufficientStats& stats, const MaskedSample& sample, const Code& code);

/// Mini-batch variant: each row seen by the batch is counted once and moves
/// toward the batch average of x[m] alpha^T over the samples that observed it.
void update_B(SufficientStats& stats, std::span<const MaskedSample> samples,
              std::span<const Code> codes);

/// penalty_acc <- (1 - w) penalty_acc + w * lambda * (s/p) * Omega(alpha).
void update_penalty_acc(SufficientStats& stats, const MaskedSample& sample, const Code& code,
                        const Penalty& penalty, double w);

/// Mini-batch variant averaging lambda (s_i/p) Omega(alpha_i) over the batch.
void update_penalty_acc(SufficientStats& stats, std::span<const MaskedSample> samples,
                        std::span<const Code> codes, const Penalty& penalty, double w);

/// 1/2 Tr(D^T D C) - Tr(D^T B) + penalty_acc, for a materialized dictionary. O(p k^2).
double surrogate_value(const SufficientStats& stats, const Eigen::Ref<const RowMatrix>& dict);

/// Gradient of h_t: D C - B.
RowMatrix surrogate_gradient(const SufficientStats& stats, const Eigen::Ref<const RowMatrix>& dict);

}  // namespace maskdl
