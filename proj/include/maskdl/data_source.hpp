#pragma once

#include <span>
#include <utility>
#include <vector>

#include "maskdl/code_solver.hpp"
#include "maskdl/types.hpp"

namespace maskdl {

/// Column-addressable p x n data, possibly partially observed.
class DataSource {
   public:
    virtual ~DataSource() = default;

    virtual Index rows() const = 0;
    virtual Index cols() const = 0;

    /// Observed entries of column j on the sorted row set `rows`.
    virtual void gather(Index j, std::span<const Index> rows, MaskedSample& out) const = 0;

    /// All observed entries of column j.
    virtual void gather_observed(Index j, MaskedSample& out) const = 0;

    /// Column j with unobserved entries set to zero.
    virtual Vector dense_column(Index j) const = 0;
};

/// Fully observed data held as a column-major p x n matrix.
class DenseSource final : public DataSource {
   public:
    explicit DenseSource(Matrix data) : data_(std::move(data)) {}

    Index rows() const override { return data_.rows(); }
    Index cols() const override { return data_.cols(); }
    void gather(Index j, std::span<const Index> rows, MaskedSample& out) const override;
    void gather_observed(Index j, MaskedSample& out) const override;
    Vector dense_column(Index j) const override { return data_.col(j); }

    const Matrix& matrix() const { return data_; }

   private:
    Matrix data_;
};

/// Partially observed data: per column, strictly increasing observed rows
/// and their values.
class SparseColumnSource final : public DataSource {
   public:
    struct Column {
        std::vector<Index> rows;
        std::vector<double> values;
    };

    SparseColumnSource(Index p, std::vector<Column> columns);

    Index rows() const override { return p_; }
    Index cols() const override { return static_cast<Index>(columns_.size()); }
    void gather(Index j, std::span<const Index> rows, MaskedSample& out) const override;
    void gather_observed(Index j, MaskedSample& out) const override;
    Vector dense_column(Index j) const override;

    const Column& column(Index j) const { return columns_[static_cast<std::size_t>(j)]; }
    std::size_t nonzeros() const;

   private:
    Index p_;
    std::vector<Column> columns_;
};

}  // namespace maskdl
