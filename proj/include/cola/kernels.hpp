#pragma once

// Dense and sparse-row numeric kernels. Every kernel has a serial reference
// in `serial::` and an OpenMP version in `parallel::`; the unqualified
// dispatchers pick the parallel one above a work threshold. Both versions
// assign each output element to exactly one thread and accumulate in a fixed
// order, so results are bitwise identical.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cola::kernels {

enum class Trans { no, yes };

/// Row-compressed sparse matrix: row i holds (index[p], weight[p]) for
/// p in [offsets[i], offsets[i+1]).
struct SparseRows {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> index;
    std::vector<double> weight;

    std::size_t nnz() const { return index.size(); }
    SparseRows transposed() const;
    /// Dense row-major copy, for oracles and small-scale inspection.
    std::vector<double> to_dense() const;
};

namespace serial {
/// c(m×n) += op(a)(m×k) · op(b)(k×n)
void gemm_acc(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
              std::span<const double> a, std::span<const double> b, std::span<double> c);
/// out(rows×d) += s · x(cols×d)
void spmm_acc(const SparseRows& s, std::span<const double> x, std::size_t d, std::span<double> out);
}  // namespace serial

namespace parallel {
void gemm_acc(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
              std::span<const double> a, std::span<const double> b, std::span<double> c);
void spmm_acc(const SparseRows& s, std::span<const double> x, std::size_t d, std::span<double> out);
}  // namespace parallel

void gemm_acc(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
              std::span<const double> a, std::span<const double> b, std::span<double> c);
void spmm_acc(const SparseRows& s, std::span<const double> x, std::size_t d, std::span<double> out);

/// Work size (multiply-adds) above which dispatchers use the OpenMP path.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

}  // namespace cola::kernels
