#include "maskdl/types.hpp"

namespace maskdl {

double column_norm(Norm norm, const Eigen::Ref<const Vector>& v) {
    return norm == Norm::L1 ? v.lpNorm<1>() : v.norm();
}

std::string_view to_string(Norm norm) { return norm == Norm::L1 ? "l1" : "l2"; }

std::string_view to_string(ProjectionMode mode) {
    return mode == ProjectionMode::ExactLazy ? "exact-lazy" : "approximate";
}

std::string_view to_string(PenaltyKind kind) { return kind == PenaltyKind::L1 ? "l1" : "l2sq"; }

std::optional<Norm> parse_norm(std::string_view text) {
    if (text == "l1") return Norm::L1;
    if (text == "l2") return Norm::L2;
    return std::nullopt;
}

std::optional<ProjectionMode> parse_mode(std::string_view text) {
    if (text == "exact-lazy" || text == "exact") return ProjectionMode::ExactLazy;
    if (text == "approximate" || text == "approx") return ProjectionMode::Approximate;
    return std::nullopt;
}

std::optional<PenaltyKind> parse_penalty(std::string_view text) {
    if (text == "l1" || text == "lasso") return PenaltyKind::L1;
    if (text == "l2sq" || text == "ridge") return PenaltyKind::SquaredL2;
    return std::nullopt;
}

}  // namespace maskdl
