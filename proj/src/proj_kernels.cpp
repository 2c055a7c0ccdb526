#include "maskdl/proj_kernels.hpp"

#include <algorithm>
#include <vector>

#include "maskdl/op_counter.hpp"

namespace maskdl::proj {

Vector soft_threshold(const Eigen::Ref<const Vector>& v, double theta) {
    Vector out(v.size());
    for (Index i = 0; i < v.size(); ++i) out[i] = soft_threshold(v[i], theta);
    return out;
}

double l1_ball_threshold(const Eigen::Ref<const Vector>& v, double radius) {
    const auto n = static_cast<std::size_t>(v.size());
    std::vector<double> a(n);
    double total = 0.0;
    double largest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::abs(v[static_cast<Index>(i)]);
        total += a[i];
        largest = std::max(largest, a[i]);
    }
    ops::add(2 * n);
    if (total <= radius) return 0.0;
    if (radius <= 0.0) return largest;

    // Invariant: every element outside [lo, hi) is either known to be in the
    // support (accounted in `sum`/`count`) or known to be outside it.
    std::size_t lo = 0;
    std::size_t hi = n;
    double sum = 0.0;
    std::size_t count = 0;
    while (lo < hi) {
        std::swap(a[lo], a[lo + (hi - lo) / 2]);
        const double pivot = a[lo];
        const auto first = a.begin() + static_cast<std::ptrdiff_t>(lo + 1);
        const auto mid = std::partition(first, a.begin() + static_cast<std::ptrdiff_t>(hi),
                                        [pivot](double x) { return x >= pivot; });
        const auto upper_end = static_cast<std::size_t>(mid - a.begin());
        double block_sum = pivot;
        for (std::size_t i = lo + 1; i < upper_end; ++i) block_sum += a[i];
        const std::size_t block_count = upper_end - lo;
        ops::add(hi - lo);
        if ((sum + block_sum) - static_cast<double>(count + block_count) * pivot < radius) {
            sum += block_sum;
            count += block_count;
            lo = upper_end;
        } else {
            lo = lo + 1;
            hi = upper_end;
        }
    }
    return std::max(0.0, (sum - radius) / static_cast<double>(count));
}

Vector project_l2_ball(const Eigen::Ref<const Vector>& v) {
    const double nrm = v.norm();
    ops::add(static_cast<std::uint64_t>(2 * v.size()));
    if (nrm <= 1.0) return v;
    return v / nrm;
}

L1Projection project_l1_ball(const Eigen::Ref<const Vector>& v) {
    L1Projection out;
    out.threshold = l1_ball_threshold(v, 1.0);
    out.value = out.threshold > 0.0 ? soft_threshold(v, out.threshold) : Vector(v);
    return out;
}

Vector project_l1_ball_partial(const Eigen::Ref<const Vector>& v, double radius) {
    if (radius <= 0.0) return Vector::Zero(v.size());
    const double theta = l1_ball_threshold(v, radius);
    if (theta <= 0.0) return v;
    return soft_threshold(v, theta);
}

Vector project_l2_ball_partial(const Eigen::Ref<const Vector>& v, double radius) {
    if (radius <= 0.0) return Vector::Zero(v.size());
    const double nrm = v.norm();
    ops::add(static_cast<std::uint64_t>(2 * v.size()));
    if (nrm <= radius) return v;
    return v * (radius / nrm);
}

Vector project_ball(Norm norm, const Eigen::Ref<const Vector>& v) {
    return norm == Norm::L1 ? project_l1_ball(v).value : project_l2_ball(v);
}

}  // namespace maskdl::proj
