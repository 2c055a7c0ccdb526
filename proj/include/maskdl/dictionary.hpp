#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskdl/stats.hpp"
#include "maskdl/types.hpp"

namespace maskdl {

class BinaryWriter;
class BinaryReader;

/// p x k dictionary whose atoms are kept inside the unit ball of `norm`.
///
/// Storage depends on the projection mode:
///  - ExactLazy, l2: raw column f_j, lazy[j] = ||f_j||_2 and a scale
///    s_j >= max(1, ||f_j||_2); the atom is d_j = f_j / s_j.
///  - ExactLazy, l1: raw column f_j and an accumulated threshold lazy[j];
///    the atom is d_j = soft_threshold(f_j, lazy[j]).
///  - Approximate: raw column holds d_j itself and lazy[j] caches ||d_j||_1
///    (l1) or ||d_j||_2^2 (l2).
/// Either way every update touches only the masked rows of the raw storage
/// (the exact l1 projection still reads the whole column).
class Dictionary {
   public:
    Dictionary() = default;

    /// Projects each column of `atoms` onto the unit ball.
    Dictionary(const RowMatrix& atoms, Norm norm, ProjectionMode mode);

    /// Direct construction from a lazy state. For ExactLazy l2 a missing scale
    /// defaults to max(1, lazy[j]).
    static Dictionary from_state(RowMatrix raw, Vector lazy, Norm norm, ProjectionMode mode,
                                 std::optional<Vector> scale = std::nullopt);

    Index rows() const { return raw_.rows(); }
    Index atoms() const { return raw_.cols(); }
    Norm norm() const { return norm_; }
    ProjectionMode mode() const { return mode_; }

    double entry(Index row, Index atom) const {
        const double f = raw_(row, atom);
        if (mode_ == ProjectionMode::Approximate) return f;
        if (norm_ == Norm::L2) return f / scale_[atom];
        const double mag = std::abs(f) - lazy_[atom];
        if (mag <= 0.0) return 0.0;
        return f > 0.0 ? mag : -mag;
    }

    Vector materialize_column(Index atom) const;
    RowMatrix materialize() const;
    /// Materialized rows, out is resized to rows.size() x k.
    void gather_rows(std::span<const Index> rows, RowMatrix& out) const;

    /// Gradient step d_j[rows] -= step followed by the exact projection of d_j
    /// onto the ball, kept lazy. `out` receives the new d_j[rows].
    void project_column_exact_lazy(Index atom, std::span<const Index> rows,
                                   const Eigen::Ref<const Vector>& step, Eigen::Ref<Vector> out);

    /// Gradient step d_j[rows] -= step followed by the projection onto
    /// {d : psi(d) <= 1, d agrees with the previous d_j outside `rows`}.
    void project_column_approximate(Index atom, std::span<const Index> rows,
                                    const Eigen::Ref<const Vector>& step, Eigen::Ref<Vector> out);

    /// Dispatches on the mode.
    void step_column(Index atom, std::span<const Index> rows, const Eigen::Ref<const Vector>& step,
                     Eigen::Ref<Vector> out);

    const RowMatrix& raw() const { return raw_; }
    const Vector& lazy() const { return lazy_; }
    const Vector& scale() const { return scale_; }
    std::int64_t drift_events() const { return drift_events_; }

    void save(BinaryWriter& out) const;
    static Dictionary load(BinaryReader& in);

   private:
    void refresh_cache(Index atom);

    RowMatrix raw_;
    Vector lazy_;
    Vector scale_;
    std::vector<std::int64_t> touched_;
    Norm norm_ = Norm::L2;
    ProjectionMode mode_ = ProjectionMode::ExactLazy;
    std::int64_t drift_events_ = 0;
};

struct UpdateDiagnostics {
    Index skipped_atoms = 0;
};

/// One block-coordinate-descent cycle over the atoms (ascending order),
/// restricted to the sorted rows `mask_rows`. Atoms with C[j,j] <= 1e-12 are
/// left unchanged.
UpdateDiagnostics dictionary_update(Dictionary& dict, const SufficientStats& stats,
                                    std::span<const Index> mask_rows);

}  // namespace maskdl
