#include "maskdl/dictionary.hpp"

#include <cmath>

#include "maskdl/binary_io.hpp"
#include "maskdl/op_counter.hpp"
#include "maskdl/proj_kernels.hpp"

namespace maskdl {

namespace {

// Exact power-of-two rescaling keeps d_j = f_j / s_j bit-identical.
constexpr double kScaleLimit = 0x1p64;
constexpr double kScaleShrink = 0x1p-64;
// Beyond this accumulated threshold the raw l1 column is rebuilt from d_j.
constexpr double kThresholdLimit = 1e6;
constexpr double kUnusedAtom = 1e-12;

double lift(double u, double threshold) {
    if (u > 0.0) return u + threshold;
    if (u < 0.0) return u - threshold;
    return 0.0;
}

}  // namespace

Dictionary::Dictionary(const RowMatrix& atoms, Norm norm, ProjectionMode mode)
    : raw_(atoms.rows(), atoms.cols()),
      lazy_(Vector::Zero(atoms.cols())),
      scale_(Vector::Ones(atoms.cols())),
      touched_(static_cast<std::size_t>(atoms.cols()), 0),
      norm_(norm),
      mode_(mode) {
    for (Index j = 0; j < atoms.cols(); ++j) {
        const Vector column = atoms.col(j);
        if (mode_ == ProjectionMode::Approximate) {
            raw_.col(j) = proj::project_ball(norm_, column);
            refresh_cache(j);
        } else if (norm_ == Norm::L2) {
            raw_.col(j) = column;
            lazy_[j] = column.norm();
            scale_[j] = std::max(1.0, lazy_[j]);
        } else {
            raw_.col(j) = column;
            lazy_[j] = proj::l1_ball_threshold(column, 1.0);
        }
    }
}

Dictionary Dictionary::from_state(RowMatrix raw, Vector lazy, Norm norm, ProjectionMode mode,
                                  std::optional<Vector> scale) {
    if (lazy.size() != raw.cols()) throw DataError("lazy state size does not match atom count");
    Dictionary d;
    d.norm_ = norm;
    d.mode_ = mode;
    d.raw_ = std::move(raw);
    d.lazy_ = std::move(lazy);
    d.touched_.assign(static_cast<std::size_t>(d.raw_.cols()), 0);
    if (scale) {
        d.scale_ = *scale;
    } else {
        d.scale_ = Vector::Ones(d.raw_.cols());
        if (mode == ProjectionMode::ExactLazy && norm == Norm::L2)
            for (Index j = 0; j < d.lazy_.size(); ++j) d.scale_[j] = std::max(1.0, d.lazy_[j]);
    }
    return d;
}

Vector Dictionary::materialize_column(Index atom) const {
    Vector out(rows());
    for (Index m = 0; m < rows(); ++m) out[m] = entry(m, atom);
    return out;
}

RowMatrix Dictionary::materialize() const {
    if (mode_ == ProjectionMode::Approximate) return raw_;
    RowMatrix out(rows(), atoms());
    for (Index m = 0; m < rows(); ++m)
        for (Index j = 0; j < atoms(); ++j) out(m, j) = entry(m, j);
    return out;
}

void Dictionary::gather_rows(std::span<const Index> rows, RowMatrix& out) const {
    const Index k = atoms();
    out.resize(static_cast<Index>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Index j = 0; j < k; ++j) out(static_cast<Index>(i), j) = entry(rows[i], j);
    ops::add(rows.size() * static_cast<std::size_t>(k));
}

void Dictionary::refresh_cache(Index atom) {
    touched_[static_cast<std::size_t>(atom)] = 0;
    if (mode_ == ProjectionMode::Approximate) {
        lazy_[atom] = norm_ == Norm::L1 ? raw_.col(atom).lpNorm<1>() : raw_.col(atom).squaredNorm();
    } else if (norm_ == Norm::L2) {
        lazy_[atom] = raw_.col(atom).norm();
    }
    ops::add(static_cast<std::uint64_t>(rows()));
}

void Dictionary::project_column_exact_lazy(Index atom, std::span<const Index> rows,
                                           const Eigen::Ref<const Vector>& step,
                                           Eigen::Ref<Vector> out) {
    const auto s = static_cast<Index>(rows.size());
    auto column = raw_.col(atom);
    if (norm_ == Norm::L2) {
        const double scale = scale_[atom];
        double before = 0.0;
        double after = 0.0;
        for (Index i = 0; i < s; ++i) {
            double& f = column[rows[static_cast<std::size_t>(i)]];
            before += f * f;
            f -= scale * step[i];
            after += f * f;
        }
        ops::add(static_cast<std::uint64_t>(4 * s));
        const double l = lazy_[atom];
        const double radicand = l * l - before + after;
        auto& touched = touched_[static_cast<std::size_t>(atom)];
        touched += s;
        if (radicand < -1e-8 * l * l) {
            ++drift_events_;
            refresh_cache(atom);
        } else if (touched >= raw_.rows()) {
            refresh_cache(atom);
        } else {
            lazy_[atom] = std::sqrt(std::max(radicand, 0.0));
        }
        scale_[atom] = std::max(scale, lazy_[atom]);
        if (scale_[atom] > kScaleLimit) {
            column *= kScaleShrink;
            lazy_[atom] *= kScaleShrink;
            scale_[atom] *= kScaleShrink;
        }
        const double inv = scale_[atom];
        for (Index i = 0; i < s; ++i) out[i] = column[rows[static_cast<std::size_t>(i)]] / inv;
        return;
    }

    // l1: the threshold of the step is found on the whole pre-projection
    // column; masked raw entries are lifted so that soft-thresholding by the
    // accumulated threshold reproduces the stepped values.
    const double l = lazy_[atom];
    Vector pre(raw_.rows());
    for (Index m = 0; m < raw_.rows(); ++m) pre[m] = proj::soft_threshold(column[m], l);
    for (Index i = 0; i < s; ++i) {
        const Index m = rows[static_cast<std::size_t>(i)];
        pre[m] -= step[i];
    }
    ops::add(static_cast<std::uint64_t>(raw_.rows() + s));
    const double theta = proj::l1_ball_threshold(pre, 1.0);
    for (Index i = 0; i < s; ++i) {
        const Index m = rows[static_cast<std::size_t>(i)];
        column[m] = lift(pre[m], l);
    }
    lazy_[atom] = l + theta;
    if (lazy_[atom] > kThresholdLimit) {
        for (Index m = 0; m < raw_.rows(); ++m) column[m] = proj::soft_threshold(column[m], lazy_[atom]);
        lazy_[atom] = 0.0;
    }
    for (Index i = 0; i < s; ++i) out[i] = entry(rows[static_cast<std::size_t>(i)], atom);
}

void Dictionary::project_column_approximate(Index atom, std::span<const Index> rows,
                                            const Eigen::Ref<const Vector>& step,
                                            Eigen::Ref<Vector> out) {
    const auto s = static_cast<Index>(rows.size());
    auto column = raw_.col(atom);
    Vector stepped(s);
    double before = 0.0;
    for (Index i = 0; i < s; ++i) {
        const double d = column[rows[static_cast<std::size_t>(i)]];
        before += norm_ == Norm::L1 ? std::abs(d) : d * d;
        stepped[i] = d - step[i];
    }
    // Measure (l1 norm or squared l2 norm) of the frozen, unmasked part.
    const double rest = s == raw_.rows() ? 0.0 : std::max(0.0, lazy_[atom] - before);
    Vector projected;
    double after = 0.0;
    if (norm_ == Norm::L1) {
        projected = proj::project_l1_ball_partial(stepped, std::max(0.0, 1.0 - rest));
        after = projected.lpNorm<1>();
    } else {
        projected = proj::project_l2_ball_partial(stepped, std::sqrt(std::max(0.0, 1.0 - rest)));
        after = projected.squaredNorm();
    }
    for (Index i = 0; i < s; ++i) column[rows[static_cast<std::size_t>(i)]] = projected[i];
    out = projected;
    ops::add(static_cast<std::uint64_t>(4 * s));
    auto& touched = touched_[static_cast<std::size_t>(atom)];
    touched += s;
    if (touched >= raw_.rows())
        refresh_cache(atom);
    else
        lazy_[atom] = rest + after;
}

void Dictionary::step_column(Index atom, std::span<const Index> rows,
                             const Eigen::Ref<const Vector>& step, Eigen::Ref<Vector> out) {
    if (mode_ == ProjectionMode::Approximate)
        project_column_approximate(atom, rows, step, out);
    else
        project_column_exact_lazy(atom, rows, step, out);
}

void Dictionary::save(BinaryWriter& out) const {
    out.u8(norm_ == Norm::L1 ? 1 : 2);
    out.u8(mode_ == ProjectionMode::ExactLazy ? 1 : 2);
    out.matrix(raw_);
    out.matrix(lazy_);
    out.matrix(scale_);
    out.i64_vector(touched_);
    out.i64(drift_events_);
}

Dictionary Dictionary::load(BinaryReader& in) {
    Dictionary d;
    const auto norm = in.u8();
    const auto mode = in.u8();
    if ((norm != 1 && norm != 2) || (mode != 1 && mode != 2))
        throw DataError("corrupt dictionary segment");
    d.norm_ = norm == 1 ? Norm::L1 : Norm::L2;
    d.mode_ = mode == 1 ? ProjectionMode::ExactLazy : ProjectionMode::Approximate;
    d.raw_ = in.matrix<RowMatrix>();
    d.lazy_ = in.matrix<Vector>();
    d.scale_ = in.matrix<Vector>();
    d.touched_ = in.i64_vector();
    d.drift_events_ = in.i64();
    if (d.lazy_.size() != d.raw_.cols() || d.scale_.size() != d.raw_.cols() ||
        static_cast<Index>(d.touched_.size()) != d.raw_.cols())
        throw DataError("inconsistent dictionary segment");
    return d;
}

UpdateDiagnostics dictionary_update(Dictionary& dict, const SufficientStats& stats,
                                    std::span<const Index> mask_rows) {
    UpdateDiagnostics diag;
    const auto s = static_cast<Index>(mask_rows.size());
    const Index k = dict.atoms();
    if (s == 0) return diag;
    RowMatrix local;
    dict.gather_rows(mask_rows, local);
    // Column-major copy of the masked rows of B.
    Matrix b_rows(s, k);
    for (Index i = 0; i < s; ++i) b_rows.row(i) = stats.B.row(mask_rows[static_cast<std::size_t>(i)]);
    Vector step(s);
    Vector updated(s);
    for (Index j = 0; j < k; ++j) {
        const double cjj = stats.C(j, j);
        if (cjj <= kUnusedAtom) {
            ++diag.skipped_atoms;
            continue;
        }
        step.noalias() = local * stats.C.col(j);
        step -= b_rows.col(j);
        step /= cjj;
        ops::add(static_cast<std::uint64_t>(s * k + 2 * s));
        dict.step_column(j, mask_rows, step, updated);
        local.col(j) = updated;
    }
    return diag;
}

}  // namespace maskdl
