#pragma once

#include "maskdl/types.hpp"

namespace maskdl::proj {

/// sign(u) * max(|u| - theta, 0).
inline double soft_threshold(double u, double theta) {
    const double mag = std::abs(u) - theta;
    if (mag <= 0.0) return 0.0;
    return u > 0.0 ? mag : -mag;
}

Vector soft_threshold(const Eigen::Ref<const Vector>& v, double theta);

/// Smallest theta >= 0 such that sum_i max(|v_i| - theta, 0) <= radius.
/// Returns 0 when ||v||_1 <= radius. For radius == 0 returns max_i |v_i|.
///
/// Uses the expected-linear pivot search (partition around a pivot, keep or
/// discard the upper block) instead of a full sort.
double l1_ball_threshold(const Eigen::Ref<const Vector>& v, double radius = 1.0);

/// v / max(1, ||v||_2).
Vector project_l2_ball(const Eigen::Ref<const Vector>& v);

struct L1Projection {
    Vector value;
    double threshold = 0.0;
};

/// Euclidean projection onto the unit l1 ball together with the threshold
/// theta such that value == soft_threshold(v, theta) elementwise.
L1Projection project_l1_ball(const Eigen::Ref<const Vector>& v);

/// Euclidean projection onto {u : ||u||_1 <= radius}.
Vector project_l1_ball_partial(const Eigen::Ref<const Vector>& v, double radius);

/// Euclidean projection onto {u : ||u||_2 <= radius}.
Vector project_l2_ball_partial(const Eigen::Ref<const Vector>& v, double radius);

/// Projection onto the unit ball of `norm`.
Vector project_ball(Norm norm, const Eigen::Ref<const Vector>& v);

}  // namespace maskdl::proj
