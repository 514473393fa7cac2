#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "metagps/tensor.hpp"

namespace metagps {

// CSR matrix, sorted column indices per row, no explicitly stored zeros.
// Immutable after construction.
class SparseMatrix {
public:
    SparseMatrix() : n_rows_(0), n_cols_(0), row_ptr_{0} {}

    SparseMatrix(std::int64_t n_rows, std::int64_t n_cols,
                 std::vector<std::tuple<std::int64_t, std::int64_t, double>> coo)
        : n_rows_(n_rows), n_cols_(n_cols) {
        std::sort(coo.begin(), coo.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        row_ptr_.assign(static_cast<std::size_t>(n_rows) + 1, 0);
        std::int64_t prev_r = -1, prev_c = -1;
        for (const auto& [r, c, v] : coo) {
            if (r < 0 || r >= n_rows || c < 0 || c >= n_cols)
                throw std::out_of_range("SparseMatrix: entry out of range");
            if (v == 0.0) continue;
            if (r == prev_r && c == prev_c)
                throw std::invalid_argument("SparseMatrix: duplicate entry at (" + std::to_string(r) + "," +
                                            std::to_string(c) + ")");
            prev_r = r;
            prev_c = c;
            col_idx_.push_back(c);
            vals_.push_back(v);
            ++row_ptr_[static_cast<std::size_t>(r) + 1];
        }
        for (std::size_t i = 1; i < row_ptr_.size(); ++i) row_ptr_[i] += row_ptr_[i - 1];
    }

    std::int64_t n_rows() const { return n_rows_; }
    std::int64_t n_cols() const { return n_cols_; }
    std::int64_t nnz() const { return static_cast<std::int64_t>(vals_.size()); }

    std::int64_t row_begin(std::int64_t r) const { return row_ptr_[static_cast<std::size_t>(r)]; }
    std::int64_t row_end(std::int64_t r) const { return row_ptr_[static_cast<std::size_t>(r) + 1]; }
    std::int64_t col(std::int64_t k) const { return col_idx_[static_cast<std::size_t>(k)]; }
    double val(std::int64_t k) const { return vals_[static_cast<std::size_t>(k)]; }

    std::int64_t degree(std::int64_t r) const { return row_end(r) - row_begin(r); }

    double get(std::int64_t r, std::int64_t c) const {
        auto lo = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_begin(r));
        auto hi = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_end(r));
        auto it = std::lower_bound(lo, hi, c);
        if (it == hi || *it != c) return 0.0;
        return vals_[static_cast<std::size_t>(it - col_idx_.begin())];
    }

    bool is_symmetric(double tol = 0.0) const {
        if (n_rows_ != n_cols_) return false;
        for (std::int64_t r = 0; r < n_rows_; ++r)
            for (std::int64_t k = row_begin(r); k < row_end(r); ++k)
                if (std::abs(get(col(k), r) - val(k)) > tol) return false;
        return true;
    }

    bool has_zero_diagonal() const {
        for (std::int64_t r = 0; r < std::min(n_rows_, n_cols_); ++r)
            if (get(r, r) != 0.0) return false;
        return true;
    }

    // out = this * X  (or this^T * X), X dense n x d
    Tensor multiply(const Tensor& x, bool transpose_self = false) const {
        if (x.shape.size() != 2)
            throw std::invalid_argument("SparseMatrix::multiply: dense operand must be rank-2, got " + shape_str(x.shape));
        std::int64_t in_rows = transpose_self ? n_rows_ : n_cols_;
        std::int64_t out_rows = transpose_self ? n_cols_ : n_rows_;
        if (x.shape[0] != in_rows)
            throw std::invalid_argument("SparseMatrix::multiply: shape mismatch [" + std::to_string(n_rows_) + "," +
                                        std::to_string(n_cols_) + "]" + (transpose_self ? "^T" : "") + " vs " +
                                        shape_str(x.shape));
        std::int64_t d = x.shape[1];
        Tensor out({out_rows, d});
        if (!transpose_self) {
            for (std::int64_t r = 0; r < n_rows_; ++r) {
                double* orow = out.values.data() + r * d;
                for (std::int64_t k = row_begin(r); k < row_end(r); ++k) {
                    const double w = val(k);
                    const double* xrow = x.values.data() + col(k) * d;
                    for (std::int64_t j = 0; j < d; ++j) orow[j] += w * xrow[j];
                }
            }
        } else {
            for (std::int64_t r = 0; r < n_rows_; ++r) {
                const double* xrow = x.values.data() + r * d;
                for (std::int64_t k = row_begin(r); k < row_end(r); ++k) {
                    const double w = val(k);
                    double* orow = out.values.data() + col(k) * d;
                    for (std::int64_t j = 0; j < d; ++j) orow[j] += w * xrow[j];
                }
            }
        }
        return out;
    }

    Tensor to_dense() const {
        Tensor out({n_rows_, n_cols_});
        for (std::int64_t r = 0; r < n_rows_; ++r)
            for (std::int64_t k = row_begin(r); k < row_end(r); ++k) out.at(r, col(k)) = val(k);
        return out;
    }

private:
    std::int64_t n_rows_, n_cols_;
    std::vector<std::int64_t> row_ptr_;
    std::vector<std::int64_t> col_idx_;
    std::vector<double> vals_;
};

// symmetric binary adjacency from an undirected edge list (u < v pairs)
inline SparseMatrix adjacency_from_edges(std::int64_t n, const std::vector<std::pair<std::int64_t, std::int64_t>>& edges) {
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> coo;
    coo.reserve(edges.size() * 2);
    for (auto [u, v] : edges) {
        if (u == v) throw std::invalid_argument("adjacency_from_edges: self-loop at node " + std::to_string(u));
        coo.emplace_back(u, v, 1.0);
        coo.emplace_back(v, u, 1.0);
    }
    return SparseMatrix(n, n, std::move(coo));
}

} // namespace metagps
