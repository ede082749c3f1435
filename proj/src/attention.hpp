// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace kvbudget {

/// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Takes ownership of `values`; throws "shape error" on a length mismatch
    /// and "non-finite value" when any entry is NaN or infinite.
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool empty() const noexcept { return m_values.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return m_values[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_values[r * m_cols + c]; }

    std::span<double> row(std::size_t r) { return {m_values.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const { return {m_values.data() + r * m_cols, m_cols}; }

    std::span<const double> values() const noexcept { return m_values; }

    /// Copies the listed rows, in the given order.
    DenseMatrix gather_rows(std::span<const std::size_t> indices) const;
    /// Copies columns [first, first + count).
    DenseMatrix column_block(std::size_t first, std::size_t count) const;

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_values;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& m);

/// Sorted set of distinct positions.
class IndexSet {
public:
    IndexSet() = default;
    /// Throws "bad index set" unless `indices` is strictly increasing.
    explicit IndexSet(std::vector<std::size_t> indices);
    IndexSet(std::initializer_list<std::size_t> indices);

    /// [first, last)
    static IndexSet range(std::size_t first, std::size_t last);

    std::size_t size() const noexcept { return m_indices.size(); }
    bool empty() const noexcept { return m_indices.empty(); }
    bool contains(std::size_t index) const;
    /// True when every index is < n.
    bool bounded_by(std::size_t n) const noexcept { return m_indices.empty() || m_indices.back() < n; }
    bool is_contiguous() const noexcept;

    std::size_t front() const { return m_indices.front(); }
    std::size_t back() const { return m_indices.back(); }

    std::span<const std::size_t> indices() const noexcept { return m_indices; }
    auto begin() const noexcept { return m_indices.begin(); }
    auto end() const noexcept { return m_indices.end(); }

    bool operator==(const IndexSet&) const = default;

private:
    std::vector<std::size_t> m_indices;
};

/// Row-wise softmax stabilized by subtracting each row's maximum.
DenseMatrix softmax_rows(const DenseMatrix& m);

struct AttentionResult {
    DenseMatrix output;
    DenseMatrix weights;
};

/// softmax(q kᵀ / √d_k) v. With `causal`, query row i is aligned to key
/// position i + (N_k − N_q) and keys after it are excluded from the
/// normalizing sum, leaving exact zeros above the (shifted) diagonal.
AttentionResult scaled_dot_product_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                             bool causal);

/// Single-row kernel shared with the simulator: attends `query` to the first
/// `visible` rows of `keys`, writing `visible` weights and a d_v output row.
void attend_row(std::span<const double> query, const DenseMatrix& keys, const DenseMatrix& values,
                std::size_t visible, std::span<double> weights, std::span<double> output);

/// Positions of the min(k, n) largest values, ties toward the lower index,
/// returned in ascending position order.
IndexSet top_k_indices(std::span<const double> values, std::size_t k);

}  // namespace kvbudget
