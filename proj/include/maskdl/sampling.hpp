#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "maskdl/types.hpp"

namespace maskdl {

class BinaryWriter;
class BinaryReader;

/// Seeded generator with platform-independent derived draws (the standard
/// distributions are implementation-defined, so they are not used).
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, n), unbiased.
    std::uint64_t below(std::uint64_t n);
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
    /// Standard normal via Box-Muller.
    double normal();

    void shuffle(std::vector<Index>& values);

    std::string state() const;
    void set_state(const std::string& text);

   private:
    std::mt19937_64 engine_;
};

/// Stream of row masks: random permutations of [0, p) cut into `reduction`
/// disjoint chunks of size floor(p / reduction); the last chunk of each
/// permutation also carries the remainder. Emitted masks are sorted.
class MaskSchedule {
   public:
    MaskSchedule() = default;
    MaskSchedule(Index p, Index reduction, std::uint64_t seed);

    std::vector<Index> next_mask();

    Index rows() const { return p_; }
    Index reduction() const { return reduction_; }

    /// The chunks one permutation is cut into, each sorted.
    static std::vector<std::vector<Index>> chunk(std::span<const Index> permutation, Index reduction);

    void save(BinaryWriter& out) const;
    static MaskSchedule load(BinaryReader& in);

   private:
    void refill();

    Index p_ = 0;
    Index reduction_ = 1;
    Rng rng_;
    std::vector<Index> permutation_;
    Index chunk_ = 0;  // next chunk to emit within the current permutation
};

/// Stream of column mini-batches: each epoch is a fresh random permutation of
/// [0, n) consumed `batch_size` at a time. A batch may straddle two epochs.
class BatchSchedule {
   public:
    BatchSchedule() = default;
    /// `max_columns` bounds the stream (end-of-stream afterwards); nullopt streams forever.
    BatchSchedule(Index n, Index batch_size, std::uint64_t seed,
                  std::optional<std::int64_t> max_columns = std::nullopt);

    /// Next batch of column indices, or nullopt at the end of a bounded stream.
    /// The final batch of a bounded stream may be shorter.
    std::optional<std::vector<Index>> next_batch();

    Index columns() const { return n_; }
    Index batch_size() const { return batch_size_; }
    std::int64_t drawn() const { return drawn_; }
    double epochs() const { return static_cast<double>(drawn_) / static_cast<double>(n_); }
    void set_limit(std::optional<std::int64_t> max_columns) { limit_ = max_columns; }

    void save(BinaryWriter& out) const;
    static BatchSchedule load(BinaryReader& in);

   private:
    Index n_ = 0;
    Index batch_size_ = 1;
    Rng rng_;
    std::vector<Index> permutation_;
    Index cursor_ = 0;
    std::int64_t drawn_ = 0;
    std::optional<std::int64_t> limit_;
};

}  // namespace maskdl
