#include "cola/kernels.hpp"

#include <algorithm>

namespace cola::kernels {

SparseRows SparseRows::transposed() const {
    SparseRows t;
    t.rows = cols;
    t.cols = rows;
    t.offsets.assign(cols + 1, 0);
    for (auto j : index) ++t.offsets[j + 1];
    for (std::size_t j = 0; j < cols; ++j) t.offsets[j + 1] += t.offsets[j];
    t.index.resize(nnz());
    t.weight.resize(nnz());
    std::vector<std::size_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
    // Rows are visited in ascending order, so each transposed row is sorted by source row.
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t p = offsets[i]; p < offsets[i + 1]; ++p) {
            auto slot = cursor[index[p]]++;
            t.index[slot] = static_cast<std::uint32_t>(i);
            t.weight[slot] = weight[p];
        }
    }
    return t;
}

std::vector<double> SparseRows::to_dense() const {
    std::vector<double> dense(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t p = offsets[i]; p < offsets[i + 1]; ++p) dense[i * cols + index[p]] += weight[p];
    return dense;
}

namespace {

inline double at(std::span<const double> x, Trans t, std::size_t rows, std::size_t cols, std::size_t r,
                 std::size_t c) {
    // x is logically rows×cols after applying t.
    return t == Trans::no ? x[r * cols + c] : x[c * rows + r];
}

inline void gemm_row(Trans ta, Trans tb, std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                     std::span<const double> a, std::span<const double> b, std::span<double> c) {
    double* out = c.data() + i * n;
    if (tb == Trans::no) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = at(a, ta, m, k, i, p);
            if (av == 0.0) continue;
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += at(a, ta, m, k, i, p) * brow[p];
            out[j] += acc;
        }
    }
}

inline void spmm_row(const SparseRows& s, std::size_t i, std::span<const double> x, std::size_t d,
                     std::span<double> out) {
    double* o = out.data() + i * d;
    for (std::size_t p = s.offsets[i]; p < s.offsets[i + 1]; ++p) {
        const double w = s.weight[p];
        const double* xr = x.data() + static_cast<std::size_t>(s.index[p]) * d;
        for (std::size_t j = 0; j < d; ++j) o[j] += w * xr[j];
    }
}

}  // namespace

namespace serial {

void gemm_acc(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
              std::span<const double> b, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) gemm_row(ta, tb, i, m, n, k, a, b, c);
}

void spmm_acc(const SparseRows& s, std::span<const double> x, std::size_t d, std::span<double> out) {
    for (std::size_t i = 0; i < s.rows; ++i) spmm_row(s, i, x, d, out);
}

}  // namespace serial

namespace parallel {

void gemm_acc(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
              std::span<const double> b, std::span<double> c) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_row(ta, tb, static_cast<std::size_t>(i), m, n, k, a, b, c);
}

void spmm_acc(const SparseRows& s, std::span<const double> x, std::size_t d, std::span<double> out) {
    const auto rows = static_cast<std::ptrdiff_t>(s.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) spmm_row(s, static_cast<std::size_t>(i), x, d, out);
}

}  // namespace parallel

void gemm_acc(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
              std::span<const double> b, std::span<double> c) {
    if (m > 1 && m * n * k >= kParallelThreshold)
        parallel::gemm_acc(ta, tb, m, n, k, a, b, c);
    else
        serial::gemm_acc(ta, tb, m, n, k, a, b, c);
}

void spmm_acc(const SparseRows& s, std::span<const double> x, std::size_t d, std::span<double> out) {
    if (s.rows > 1 && s.nnz() * d >= kParallelThreshold)
        parallel::spmm_acc(s, x, d, out);
    else
        serial::spmm_acc(s, x, d, out);
}

}  // namespace cola::kernels
