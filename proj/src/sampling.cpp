#include "maskdl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "maskdl/binary_io.hpp"

namespace maskdl {

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    // Rejection of the final partial block keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::shuffle(std::vector<Index>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(below(i));
        std::swap(values[i - 1], values[j]);
    }
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::set_state(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (!is) throw DataError("corrupt random generator state");
}

MaskSchedule::MaskSchedule(Index p, Index reduction, std::uint64_t seed)
    : p_(p), reduction_(reduction), rng_(seed) {
    if (p < 1) throw ConfigError("mask schedule needs p >= 1");
    if (reduction < 1 || reduction > p) throw ConfigError("reduction factor must satisfy 1 <= r <= p");
}

std::vector<std::vector<Index>> MaskSchedule::chunk(std::span<const Index> permutation,
                                                    Index reduction) {
    const auto p = static_cast<Index>(permutation.size());
    const Index size = p / reduction;
    std::vector<std::vector<Index>> chunks;
    for (Index c = 0; c < reduction; ++c) {
        const Index begin = c * size;
        const Index end = c + 1 == reduction ? p : begin + size;
        std::vector<Index> mask(permutation.begin() + begin, permutation.begin() + end);
        std::sort(mask.begin(), mask.end());
        chunks.push_back(std::move(mask));
    }
    return chunks;
}

void MaskSchedule::refill() {
    permutation_.resize(static_cast<std::size_t>(p_));
    std::iota(permutation_.begin(), permutation_.end(), Index{0});
    rng_.shuffle(permutation_);
    chunk_ = 0;
}

std::vector<Index> MaskSchedule::next_mask() {
    if (reduction_ == 1) {
        std::vector<Index> all(static_cast<std::size_t>(p_));
        std::iota(all.begin(), all.end(), Index{0});
        return all;
    }
    if (permutation_.empty() || chunk_ == reduction_) refill();
    const Index size = p_ / reduction_;
    const Index begin = chunk_ * size;
    const Index end = chunk_ + 1 == reduction_ ? p_ : begin + size;
    ++chunk_;
    std::vector<Index> mask(permutation_.begin() + begin, permutation_.begin() + end);
    std::sort(mask.begin(), mask.end());
    return mask;
}

void MaskSchedule::save(BinaryWriter& out) const {
    out.i64(p_);
    out.i64(reduction_);
    out.string(rng_.state());
    out.i64_vector({permutation_.begin(), permutation_.end()});
    out.i64(chunk_);
}

MaskSchedule MaskSchedule::load(BinaryReader& in) {
    MaskSchedule s;
    s.p_ = in.i64();
    s.reduction_ = in.i64();
    s.rng_.set_state(in.string());
    const auto perm = in.i64_vector();
    s.permutation_.assign(perm.begin(), perm.end());
    s.chunk_ = in.i64();
    return s;
}

BatchSchedule::BatchSchedule(Index n, Index batch_size, std::uint64_t seed,
                             std::optional<std::int64_t> max_columns)
    : n_(n), batch_size_(batch_size), rng_(seed), limit_(max_columns) {
    if (n < 1) throw ConfigError("batch schedule needs n >= 1");
    if (batch_size < 1 || batch_size > n) throw ConfigError("batch size must satisfy 1 <= eta <= n");
}

std::optional<std::vector<Index>> BatchSchedule::next_batch() {
    Index want = batch_size_;
    if (limit_) {
        const std::int64_t left = *limit_ - drawn_;
        if (left <= 0) return std::nullopt;
        want = std::min<Index>(want, left);
    }
    std::vector<Index> batch;
    batch.reserve(static_cast<std::size_t>(want));
    while (static_cast<Index>(batch.size()) < want) {
        if (permutation_.empty() || cursor_ == n_) {
            permutation_.resize(static_cast<std::size_t>(n_));
            std::iota(permutation_.begin(), permutation_.end(), Index{0});
            rng_.shuffle(permutation_);
            cursor_ = 0;
        }
        batch.push_back(permutation_[static_cast<std::size_t>(cursor_++)]);
    }
    drawn_ += want;
    return batch;
}

void BatchSchedule::save(BinaryWriter& out) const {
    out.i64(n_);
    out.i64(batch_size_);
    out.string(rng_.state());
    out.i64_vector({permutation_.begin(), permutation_.end()});
    out.i64(cursor_);
    out.i64(drawn_);
    out.u8(limit_ ? 1 : 0);
    out.i64(limit_.value_or(0));
}

BatchSchedule BatchSchedule::load(BinaryReader& in) {
    BatchSchedule s;
    s.n_ = in.i64();
    s.batch_size_ = in.i64();
    s.rng_.set_state(in.string());
    const auto perm = in.i64_vector();
    s.permutation_.assign(perm.begin(), perm.end());
    s.cursor_ = in.i64();
    s.drawn_ = in.i64();
    const bool limited = in.u8() != 0;
    const auto limit = in.i64();
    if (limited) s.limit_ = limit;
    return s;
}

}  // namespace maskdl
