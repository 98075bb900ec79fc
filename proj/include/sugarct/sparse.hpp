#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sugarct {

/// Compressed sparse rows, used to cache projector interpolation weights.
struct SparseRows {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    /// out = M in
    void multiply(std::span<const double> in, std::span<double> out) const
    {
        for (std::size_t r = 0; r < n_rows; ++r) {
            double s = 0.0;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * in[col[k]];
            out[r] = s;
        }
    }

    /// out += M^T in
    void multiply_transpose_add(std::span<const double> in, std::span<double> out) const
    {
        for (std::size_t r = 0; r < n_rows; ++r) {
            const double v = in[r];
            if (v == 0.0) continue;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[col[k]] += val[k] * v;
        }
    }
};

/// Assembles rows in order; entries within a row are appended as visited.
class SparseRowsBuilder {
public:
    SparseRowsBuilder(std::size_t rows, std::size_t cols)
    {
        m_.n_rows = rows;
        m_.n_cols = cols;
        m_.row_ptr.reserve(rows + 1);
        m_.row_ptr.push_back(0);
    }

    void add(std::size_t column, double weight)
    {
        if (weight == 0.0) return;
        m_.col.push_back(static_cast<std::uint32_t>(column));
        m_.val.push_back(weight);
    }
    void end_row() { m_.row_ptr.push_back(m_.col.size()); }
    SparseRows finish() { return std::move(m_); }

private:
    SparseRows m_;
};

} // namespace sugarct
