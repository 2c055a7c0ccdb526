#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "maskdl/types.hpp"

namespace maskdl {

// Little-endian binary encoding used by checkpoints. Doubles are stored as
// their IEEE-754 bit patterns so that save -> load -> save is byte-identical.
class BinaryWriter {
   public:
    void u8(std::uint8_t v) { buffer_.push_back(v); }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buffer_.insert(buffer_.end(), p, p + n);
    }

    void string(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }

    template <class Derived>
    void matrix(const Eigen::DenseBase<Derived>& m) {
        i64(m.rows());
        i64(m.cols());
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }

    void i64_vector(const std::vector<std::int64_t>& v) {
        u64(v.size());
        for (auto x : v) i64(x);
    }

    const std::vector<std::uint8_t>& data() const { return buffer_; }

   private:
    std::vector<std::uint8_t> buffer_;
};

class BinaryReader {
   public:
    explicit BinaryReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }

    void bytes(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }

    std::string string() {
        const auto n = size_prefix();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    template <class M>
    M matrix() {
        const auto rows = i64();
        const auto cols = i64();
        if (rows < 0 || cols < 0 || static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) >
                                        (data_.size() - pos_) / 8)
            throw DataError("corrupt matrix header in binary stream");
        M m(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = f64();
        return m;
    }

    std::vector<std::int64_t> i64_vector() {
        const auto n = size_prefix(8);
        std::vector<std::int64_t> v(n);
        for (auto& x : v) x = i64();
        return v;
    }

    bool at_end() const { return pos_ == data_.size(); }

    std::size_t size_prefix(std::size_t element_size = 1) {
        const auto n = u64();
        if (n > (data_.size() - pos_) / element_size)
            throw DataError("corrupt length prefix in binary stream");
        return static_cast<std::size_t>(n);
    }

   private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DataError("unexpected end of binary stream");
    }

    std::vector<std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace maskdl
