#include "maskdl/stats.hpp"

#include <algorithm>
#include <cmath>

#include "maskdl/binary_io.hpp"
#include "maskdl/op_counter.hpp"

namespace maskdl {

SufficientStats SufficientStats::zeros(Index p, Index k, double beta) {
    SufficientStats s;
    s.C = Matrix::Zero(k, k);
    s.B = RowMatrix::Zero(p, k);
    s.seen.assign(static_cast<std::size_t>(p), 0);
    s.beta = beta;
    return s;
}

double SufficientStats::weight() const {
    if (t <= 0) return 1.0;
    return std::pow(1.0 / static_cast<double>(t), beta);
}

void SufficientStats::save(BinaryWriter& out) const {
    out.matrix(C);
    out.matrix(B);
    out.i64_vector(seen);
    out.f64(penalty_acc);
    out.i64(t);
    out.f64(beta);
}

SufficientStats SufficientStats::load(BinaryReader& in) {
    SufficientStats s;
    s.C = in.matrix<Matrix>();
    s.B = in.matrix<RowMatrix>();
    s.seen = in.i64_vector();
    s.penalty_acc = in.f64();
    s.t = in.i64();
    s.beta = in.f64();
    if (s.C.rows() != s.C.cols() || s.B.cols() != s.C.rows() ||
        static_cast<Index>(s.seen.size()) != s.B.rows())
        throw DataError("inconsistent statistics segment");
    return s;
}

void update_C(SufficientStats& stats, const Code& code, double w) {
    // Symmetric by construction: the same expression fills (a, b) and (b, a).
    const Index k = stats.C.rows();
    for (Index b = 0; b < k; ++b)
        for (Index a = 0; a < k; ++a)
            stats.C(a, b) = (1.0 - w) * stats.C(a, b) + w * (code.alpha[a] * code.alpha[b]);
    ops::add(static_cast<std::uint64_t>(2 * k * k));
}

void update_C(SufficientStats& stats, std::span<const Code> codes, double w) {
    if (codes.size() == 1) {
        update_C(stats, codes.front(), w);
        return;
    }
    const Index k = stats.C.rows();
    Matrix outer = Matrix::Zero(k, k);
    for (const Code& code : codes) outer.noalias() += code.alpha * code.alpha.transpose();
    outer /= static_cast<double>(codes.size());
    for (Index b = 0; b < k; ++b)
        for (Index a = 0; a < k; ++a) stats.C(a, b) = (1.0 - w) * stats.C(a, b) + w * outer(a, b);
    ops::add(static_cast<std::uint64_t>((codes.size() + 2) * static_cast<std::size_t>(k * k)));
}

void update_B(SufficientStats& stats, const MaskedSample& sample, const Code& code) {
    const Index k = stats.B.cols();
    const bool unit_beta = stats.beta == 1.0;
    for (Index i = 0; i < sample.size(); ++i) {
        const Index m = sample.rows[static_cast<std::size_t>(i)];
        auto& count = stats.seen[static_cast<std::size_t>(m)];
        ++count;
        const double inv = 1.0 / static_cast<double>(count);
        const double gamma = unit_beta ? inv : std::pow(inv, stats.beta);
        const double x = sample.values[i];
        auto row = stats.B.row(m);
        for (Index j = 0; j < k; ++j) row[j] += gamma * (x * code.alpha[j] - row[j]);
    }
    ops::add(static_cast<std::uint64_t>(2 * sample.size() * k));
}

void update_B(SufficientStats& stats, std::span<const MaskedSample> samples,
              std::span<const Code> codes) {
    if (samples.size() == 1) {
        update_B(stats, samples.front(), codes.front());
        return;
    }
    struct Entry {
        Index row;
        std::size_t sample;
        Index pos;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (Index pos = 0; pos < samples[i].size(); ++pos)
            entries.push_back({samples[i].rows[static_cast<std::size_t>(pos)], i, pos});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.sample < b.sample;
    });
    const Index k = stats.B.cols();
    Vector target(k);
    std::size_t begin = 0;
    while (begin < entries.size()) {
        std::size_t end = begin;
        target.setZero();
        while (end < entries.size() && entries[end].row == entries[begin].row) {
            const Entry& e = entries[end];
            target.noalias() += samples[e.sample].values[e.pos] * codes[e.sample].alpha;
            ++end;
        }
        target /= static_cast<double>(end - begin);
        const Index m = entries[begin].row;
        auto& count = stats.seen[static_cast<std::size_t>(m)];
        ++count;
        const double gamma = std::pow(1.0 / static_cast<double>(count), stats.beta);
        auto row = stats.B.row(m);
        for (Index j = 0; j < k; ++j) row[j] += gamma * (target[j] - row[j]);
        begin = end;
    }
    ops::add(static_cast<std::uint64_t>(2 * static_cast<Index>(entries.size()) * k));
}

void update_penalty_acc(SufficientStats& stats, const MaskedSample& sample, const Code& code,
                        const Penalty& penalty, double w) {
    const double ratio = static_cast<double>(sample.size()) / static_cast<double>(sample.p);
    stats.penalty_acc =
        (1.0 - w) * stats.penalty_acc + w * penalty.lambda * ratio * penalty.omega(code.alpha);
}

void update_penalty_acc(SufficientStats& stats, std::span<const MaskedSample> samples,
                        std::span<const Code> codes, const Penalty& penalty, double w) {
    if (samples.size() == 1) {
        update_penalty_acc(stats, samples.front(), codes.front(), penalty, w);
        return;
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double ratio =
            static_cast<double>(samples[i].size()) / static_cast<double>(samples[i].p);
        mean += penalty.lambda * ratio * penalty.omega(codes[i].alpha);
    }
    mean /= static_cast<double>(samples.size());
    stats.penalty_acc = (1.0 - w) * stats.penalty_acc + w * mean;
}

double surrogate_value(const SufficientStats& stats, const Eigen::Ref<const RowMatrix>& dict) {
    const Matrix gram = dict.transpose() * dict;
    const double quad = (gram.array() * stats.C.array()).sum();
    const double cross = (dict.array() * stats.B.array()).sum();
    return 0.5 * quad - cross + stats.penalty_acc;
}

RowMatrix surrogate_gradient(const SufficientStats& stats,
                             const Eigen::Ref<const RowMatrix>& dict) {
    return dict * stats.C - stats.B;
}

}  // namespace maskdl
