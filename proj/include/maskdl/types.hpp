#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace maskdl {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Dictionary-shaped (p x k) storage is row-major so that masked rows are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Norm defining the per-atom constraint ball psi(d_j) <= 1.
enum class Norm { L1, L2 };

enum class ProjectionMode { ExactLazy, Approximate };

enum class PenaltyKind { L1, SquaredL2 };

struct Penalty {
    PenaltyKind kind = PenaltyKind::L1;
    double lambda = 0.0;

    // Omega(alpha), without the lambda factor.
    double omega(const Eigen::Ref<const Vector>& alpha) const {
        return kind == PenaltyKind::L1 ? alpha.lpNorm<1>() : alpha.squaredNorm();
    }
};

double column_norm(Norm norm, const Eigen::Ref<const Vector>& v);

std::string_view to_string(Norm norm);
std::string_view to_string(ProjectionMode mode);
std::string_view to_string(PenaltyKind kind);
std::optional<Norm> parse_norm(std::string_view text);
std::optional<ProjectionMode> parse_mode(std::string_view text);
std::optional<PenaltyKind> parse_penalty(std::string_view text);

// Error taxonomy; the CLI maps each onto a distinct exit status.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace maskdl
