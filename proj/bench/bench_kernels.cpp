// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cola/kernels.hpp"
#include "cola/retrieval.hpp"

using namespace cola;
using kernels::Trans;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

kernels::SparseRows random_sparse(std::size_t n, std::size_t per_row, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> col(0, static_cast<std::uint32_t>(n - 1));
    kernels::SparseRows s;
    s.rows = s.cols = n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < per_row; ++p) {
            s.index.push_back(col(rng));
            s.weight.push_back(1.0 / static_cast<double>(per_row));
        }
        s.offsets.push_back(s.index.size());
    }
    return s;
}

template <bool Parallel>
void bm_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::parallel::gemm_acc(Trans::no, Trans::no, n, n, n, a, b, c);
        else
            kernels::serial::gemm_acc(Trans::no, Trans::no, n, n, n, a, b, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void bm_spmm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 64;
    const auto s = random_sparse(n, 8, 3);
    const auto x = random_values(n * d, 4);
    std::vector<double> out(n * d);
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::parallel::spmm_acc(s, x, d, out);
        else
            kernels::serial::spmm_acc(s, x, d, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * s.nnz() * d));
}

template <bool Parallel>
void bm_bm25(benchmark::State& state) {
    const auto docs = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::uint32_t> term(0, 999);
    std::vector<Conversation> convs(docs);
    for (std::size_t d = 0; d < docs; ++d) {
        convs[d].conversation_id = "c" + std::to_string(d);
        Utterance u;
        for (int i = 0; i < 12; ++i) u.mentions.push_back({term(rng), Sentiment::like});
        convs[d].utterances.push_back(u);
    }
    const auto index = Bm25Index::build(convs);
    const std::vector<EntityId> query{1, 17, 256, 512, 999};
    for (auto _ : state) {
        auto scores = Parallel ? index.score_all(query) : index.score_all_serial(query);
        benchmark::DoNotOptimize(scores.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * docs));
}

}  // namespace

BENCHMARK(bm_gemm<false>)->Name("gemm/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(bm_gemm<true>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(bm_spmm<false>)->Name("spmm/serial")->RangeMultiplier(4)->Range(1024, 16384);
BENCHMARK(bm_spmm<true>)->Name("spmm/parallel")->RangeMultiplier(4)->Range(1024, 16384);
BENCHMARK(bm_bm25<false>)->Name("bm25/serial")->RangeMultiplier(4)->Range(1024, 16384);
BENCHMARK(bm_bm25<true>)->Name("bm25/parallel")->RangeMultiplier(4)->Range(1024, 16384);

BENCHMARK_MAIN();
