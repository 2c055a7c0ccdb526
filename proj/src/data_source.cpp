#include "maskdl/data_source.hpp"

#include <string>

namespace maskdl {

void DenseSource::gather(Index j, std::span<const Index> rows, MaskedSample& out) const {
    out.p = data_.rows();
    out.rows.assign(rows.begin(), rows.end());
    out.values.resize(static_cast<Index>(rows.size()));
    const auto column = data_.col(j);
    for (std::size_t i = 0; i < rows.size(); ++i) out.values[static_cast<Index>(i)] = column[rows[i]];
}

void DenseSource::gather_observed(Index j, MaskedSample& out) const {
    out.p = data_.rows();
    out.rows.resize(static_cast<std::size_t>(data_.rows()));
    for (Index m = 0; m < data_.rows(); ++m) out.rows[static_cast<std::size_t>(m)] = m;
    out.values = data_.col(j);
}

SparseColumnSource::SparseColumnSource(Index p, std::vector<Column> columns)
    : p_(p), columns_(std::move(columns)) {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        const auto& c = columns_[j];
        if (c.rows.size() != c.values.size())
            throw DataError("column " + std::to_string(j) + ": rows and values differ in length");
        for (std::size_t i = 0; i < c.rows.size(); ++i) {
            if (c.rows[i] < 0 || c.rows[i] >= p || (i > 0 && c.rows[i] <= c.rows[i - 1]))
                throw DataError("column " + std::to_string(j) + ": rows must be increasing and in range");
        }
    }
}

void SparseColumnSource::gather(Index j, std::span<const Index> rows, MaskedSample& out) const {
    const auto& c = column(j);
    out.p = p_;
    out.rows.clear();
    std::vector<double> values;
    // Sorted-list intersection.
    std::size_t a = 0;
    std::size_t b = 0;
    while (a < c.rows.size() && b < rows.size()) {
        if (c.rows[a] < rows[b]) {
            ++a;
        } else if (rows[b] < c.rows[a]) {
            ++b;
        } else {
            out.rows.push_back(c.rows[a]);
            values.push_back(c.values[a]);
            ++a;
            ++b;
        }
    }
    out.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

void SparseColumnSource::gather_observed(Index j, MaskedSample& out) const {
    const auto& c = column(j);
    out.p = p_;
    out.rows = c.rows;
    out.values = Eigen::Map<const Vector>(c.values.data(), static_cast<Index>(c.values.size()));
}

Vector SparseColumnSource::dense_column(Index j) const {
    Vector out = Vector::Zero(p_);
    const auto& c = column(j);
    for (std::size_t i = 0; i < c.rows.size(); ++i) out[c.rows[i]] = c.values[i];
    return out;
}

std::size_t SparseColumnSource::nonzeros() const {
    std::size_t total = 0;
    for (const auto& c : columns_) total += c.rows.size();
    return total;
}

}  // namespace maskdl
