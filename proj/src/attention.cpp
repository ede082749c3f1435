// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace kvbudget {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : m_rows(rows), m_cols(cols), m_values(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : m_rows(rows), m_cols(cols), m_values(std::move(values)) {
    KVB_CHECK(m_values.size() == rows * cols, "shape error");
    KVB_CHECK(std::all_of(m_values.begin(), m_values.end(), [](double x) { return std::isfinite(x); }),
              "non-finite value");
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    m_rows = rows.size();
    m_cols = m_rows == 0 ? 0 : rows.begin()->size();
    m_values.reserve(m_rows * m_cols);
    for (const auto& r : rows) {
        KVB_CHECK(r.size() == m_cols, "shape error");
        m_values.insert(m_values.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> indices) const {
    DenseMatrix out(indices.size(), m_cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        KVB_CHECK(indices[i] < m_rows, "row index out of range");
        std::copy_n(row(indices[i]).begin(), m_cols, out.row(i).begin());
    }
    return out;
}

DenseMatrix DenseMatrix::column_block(std::size_t first, std::size_t count) const {
    KVB_CHECK(first + count <= m_cols, "shape error");
    DenseMatrix out(m_rows, count);
    for (std::size_t r = 0; r < m_rows; ++r) {
        auto src = row(r).subspan(first, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    KVB_CHECK(a.cols() == b.rows(), "shape error");
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double s = a(i, p);
            auto src = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += s * src[j];
        }
    }
    return out;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

IndexSet::IndexSet(std::vector<std::size_t> indices) : m_indices(std::move(indices)) {
    for (std::size_t i = 1; i < m_indices.size(); ++i)
        KVB_CHECK(m_indices[i - 1] < m_indices[i], "bad index set");
}

IndexSet::IndexSet(std::initializer_list<std::size_t> indices) : IndexSet(std::vector<std::size_t>(indices)) {}

IndexSet IndexSet::range(std::size_t first, std::size_t last) {
    std::vector<std::size_t> v(last > first ? last - first : 0);
    std::iota(v.begin(), v.end(), first);
    return IndexSet(std::move(v));
}

bool IndexSet::contains(std::size_t index) const {
    return std::binary_search(m_indices.begin(), m_indices.end(), index);
}

bool IndexSet::is_contiguous() const noexcept {
    return m_indices.empty() || m_indices.back() - m_indices.front() + 1 == m_indices.size();
}

namespace {

// Normalizes logits in place into softmax probabilities.
void softmax_inplace(std::span<double> x) {
    KVB_CHECK(!x.empty(), "degenerate row");
    const double mx = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : x) v /= sum;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) s += a[p] * b[p];
    return s;
}

}  // namespace

DenseMatrix softmax_rows(const DenseMatrix& m) {
    DenseMatrix out = m;
    if (m.rows() > 0) KVB_CHECK(m.cols() > 0, "degenerate row");
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
    return out;
}

void attend_row(std::span<const double> query, const DenseMatrix& keys, const DenseMatrix& values,
                std::size_t visible, std::span<double> weights, std::span<double> output) {
    KVB_CHECK(query.size() == keys.cols() && keys.rows() == values.rows(), "shape error");
    KVB_CHECK(visible <= keys.rows() && weights.size() >= visible && output.size() == values.cols(),
              "shape error");
    KVB_CHECK(!query.empty(), "empty head dimension");
    const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
    auto w = weights.first(visible);
    for (std::size_t j = 0; j < visible; ++j) w[j] = dot(query, keys.row(j)) * scale;
    softmax_inplace(w);
    std::fill(output.begin(), output.end(), 0.0);
    for (std::size_t j = 0; j < visible; ++j) {
        const double wj = w[j];
        auto vj = values.row(j);
        for (std::size_t c = 0; c < output.size(); ++c) output[c] += wj * vj[c];
    }
}

AttentionResult scaled_dot_product_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                             bool causal) {
    KVB_CHECK(q.cols() == k.cols() && k.rows() == v.rows(), "shape error");
    KVB_CHECK(q.cols() > 0, "empty head dimension");
    if (causal) KVB_CHECK(q.rows() <= k.rows(), "shape error");

    AttentionResult result{DenseMatrix(q.rows(), v.cols()), DenseMatrix(q.rows(), k.rows())};
    const std::size_t offset = k.rows() - (causal ? q.rows() : 0);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const std::size_t visible = causal ? offset + i + 1 : k.rows();
        attend_row(q.row(i), k, v, visible, result.weights.row(i), result.output.row(i));
    }
    return result;
}

IndexSet top_k_indices(std::span<const double> values, std::size_t k) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return values[a] > values[b] || (values[a] == values[b] && a < b);
                      });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return IndexSet(std::move(order));
}

}  // namespace kvbudget
