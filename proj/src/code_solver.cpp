#include "maskdl/code_solver.hpp"

#include <cmath>
#include <string>

#include "maskdl/op_counter.hpp"
#include "maskdl/proj_kernels.hpp"

namespace maskdl {

void MaskedSample::validate() const {
    if (rows.empty()) throw DataError("masked sample has an empty mask");
    if (static_cast<Index>(rows.size()) != values.size())
        throw DataError("masked sample rows/values length mismatch");
    if (static_cast<Index>(rows.size()) > p) throw DataError("masked sample larger than p");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= p) throw DataError("masked sample row index out of range");
        if (i > 0 && rows[i] <= rows[i - 1])
            throw DataError("masked sample rows must be strictly increasing");
    }
}

namespace {

Code solve_ridge(const Matrix& gram, const Vector& c, double scaled_lambda,
                 const CodeSolverOptions& options) {
    const Index k = gram.rows();
    Matrix system = gram;
    system.diagonal().array() += 2.0 * scaled_lambda;
    Eigen::LLT<Matrix> llt(system);
    ops::add(static_cast<std::uint64_t>(k * k * k / 3 + 2 * k * k));
    if (llt.info() != Eigen::Success)
        throw NumericError("ridge code system is not positive definite");
    const double rcond = llt.rcond();
    if (!(rcond >= 1.0 / options.max_condition))
        throw NumericError("ridge code system is ill-conditioned (rcond=" + std::to_string(rcond) +
                           ")");
    return Code{llt.solve(c)};
}

// Exact solve on the sign-fixed support of a coordinate-descent iterate.
// Returns false when the re-solved point violates the optimality conditions.
bool polish_lasso(const Matrix& gram, const Vector& c, double lam, Vector& alpha) {
    const Index k = gram.rows();
    std::vector<Index> support;
    for (Index j = 0; j < k; ++j)
        if (alpha[j] != 0.0) support.push_back(j);
    if (support.empty()) return false;
    const auto s = static_cast<Index>(support.size());
    Matrix sub(s, s);
    Vector rhs(s);
    for (Index a = 0; a < s; ++a) {
        for (Index b = 0; b < s; ++b) sub(a, b) = gram(support[a], support[b]);
        rhs[a] = c[support[a]] - lam * (alpha[support[a]] > 0.0 ? 1.0 : -1.0);
    }
    Eigen::LDLT<Matrix> ldlt(sub);
    ops::add(static_cast<std::uint64_t>(s * s * s / 3 + k * s));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const Vector sol = ldlt.solve(rhs);
    if (!sol.allFinite()) return false;
    if ((sub * sol - rhs).norm() > 1e-10 * (1.0 + rhs.norm())) return false;
    Vector candidate = Vector::Zero(k);
    for (Index a = 0; a < s; ++a) {
        if ((sol[a] > 0.0) != (alpha[support[a]] > 0.0) || sol[a] == 0.0) return false;
        candidate[support[a]] = sol[a];
    }
    const Vector grad = c - gram * candidate;
    const double slack = 1e-12 * (1.0 + lam + c.cwiseAbs().maxCoeff());
    for (Index j = 0; j < k; ++j)
        if (candidate[j] == 0.0 && std::abs(grad[j]) > lam + slack) return false;
    alpha = candidate;
    return true;
}

Code solve_lasso(const Matrix& gram, const Vector& c, double lam,
                 const CodeSolverOptions& options) {
    const Index k = gram.rows();
    Vector alpha = Vector::Zero(k);
    // q = c - G alpha, maintained incrementally.
    Vector q = c;
    for (int cycle = 0; cycle < options.max_cycles; ++cycle) {
        double max_change = 0.0;
        for (Index j = 0; j < k; ++j) {
            const double gjj = gram(j, j);
            if (gjj <= 0.0) continue;
            const double rho = q[j] + gjj * alpha[j];
            const double updated = proj::soft_threshold(rho, lam) / gjj;
            const double delta = updated - alpha[j];
            ops::add(1);
            if (delta != 0.0) {
                q.noalias() -= delta * gram.col(j);
                alpha[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
                ops::add(static_cast<std::uint64_t>(k));
            }
        }
        if (max_change < options.tolerance) break;
    }
    if (options.polish) polish_lasso(gram, c, lam, alpha);
    return Code{std::move(alpha)};
}

}  // namespace

Code solve_gram(const Matrix& gram, const Vector& correlations, PenaltyKind kind,
                double scaled_lambda, const CodeSolverOptions& options) {
    if (kind == PenaltyKind::SquaredL2) return solve_ridge(gram, correlations, scaled_lambda, options);
    return solve_lasso(gram, correlations, scaled_lambda, options);
}

Code solve_code(const MaskedSample& sample, const Eigen::Ref<const RowMatrix>& dict_rows,
                const Penalty& penalty, const CodeSolverOptions& options) {
    const Index s = sample.size();
    const Index k = dict_rows.cols();
    if (dict_rows.rows() != s) throw DataError("dictionary view does not match the mask size");
    if (s == 0 || k == 0) throw DataError("empty code problem");
    Matrix gram = Matrix::Zero(k, k);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(dict_rows.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    const Vector correlations = dict_rows.transpose() * sample.values;
    ops::add(static_cast<std::uint64_t>(s * k * (k + 1) / 2 + s * k));
    const double scaled_lambda =
        penalty.lambda * static_cast<double>(s) / static_cast<double>(sample.p);
    return solve_gram(gram, correlations, penalty.kind, scaled_lambda, options);
}

}  // namespace maskdl
