#include <benchmark/benchmark.h>

#include "fdnz/nnmf.hpp"
#include "fdnz/rng.hpp"

namespace {

Eigen::MatrixXd random_nonneg(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    fdnz::SplitMix64 rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform();
    }
    return m;
}

void BM_NnmfFitIteration(benchmark::State& state) {
    const auto v = random_nonneg(784, state.range(0), 1);
    fdnz::NnmfOptions options;
    options.max_iters = 5;
    options.tol = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fdnz::nnmf_fit(v, 30, options, 2).objective_trace.back());
    }
    state.SetItemsProcessed(state.iterations() * options.max_iters);
}
BENCHMARK(BM_NnmfFitIteration)->Arg(500)->Arg(2000);

void BM_NnmfProject(benchmark::State& state) {
    const auto w = random_nonneg(784, 30, 3);
    const auto v_new = random_nonneg(784, state.range(0), 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fdnz::nnmf_project(w, v_new, 200, 5).sum());
    }
}
BENCHMARK(BM_NnmfProject)->Arg(200)->Arg(1000);

} // namespace
