#pragma once

#include <vector>

#include "maskdl/types.hpp"

namespace maskdl {

/// One column observed through a mask: strictly increasing row indices and the
/// matching values. `p` is the ambient row count.
struct MaskedSample {
    std::vector<Index> rows;
    Vector values;
    Index p = 0;

    Index size() const { return static_cast<Index>(rows.size()); }
    // Throws DataError when the invariants do not hold.
    void validate() const;
};

struct Code {
    Vector alpha;
};

struct CodeSolverOptions {
    // Coordinate descent stops once the largest coordinate change in a cycle
    // falls below `tolerance`, or after `max_cycles` cycles.
    double tolerance = 1e-8;
    int max_cycles = 200;
    // After coordinate descent, re-solve the sign-fixed active set exactly and
    // keep it when the optimality conditions hold.
    bool polish = true;
    // Ridge systems whose reciprocal condition estimate falls below 1/max_condition
    // raise NumericError.
    double max_condition = 1e12;
};

/// Minimizes (1/2)||x - V alpha||^2 + scaled_lambda * Omega(alpha) given the
/// Gram matrix G = V^T V and correlations c = V^T x.
Code solve_gram(const Matrix& gram, const Vector& correlations, PenaltyKind kind,
                double scaled_lambda, const CodeSolverOptions& options = {});

/// Masked penalized regression
///     min_alpha (1/2)||M(x - D alpha)||^2 + lambda * (s/p) * Omega(alpha)
/// with `dict_rows` the s x k rows of the dictionary selected by the mask.
/// This is the same minimizer as the p/(2s)-scaled form of the masked loss.
Code solve_code(const MaskedSample& sample, const Eigen::Ref<const RowMatrix>& dict_rows,
                const Penalty& penalty, const CodeSolverOptions& options = {});

}  // namespace maskdl
