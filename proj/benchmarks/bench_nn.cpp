#include <benchmark/benchmark.h>

#include "fdnz/nn.hpp"
#include "fdnz/pipeline.hpp"
#include "fdnz/rng.hpp"

namespace {

fdnz::Tensor random_images(std::size_t n, std::uint64_t seed) {
    fdnz::Tensor t({n, 28, 28});
    fdnz::SplitMix64 rng(seed);
    for (double& v : t.data) v = rng.uniform();
    return t;
}

void BM_CnnForward(benchmark::State& state) {
    const auto model = fdnz::init_model(fdnz::baseline_cnn_layers(), 1);
    const auto batch = random_images(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fdnz::forward(model, batch).logits.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CnnForward)->Arg(16)->Arg(64);

void BM_CnnForwardBackward(benchmark::State& state) {
    const auto model = fdnz::init_model(fdnz::baseline_cnn_layers(), 1);
    const auto batch = random_images(static_cast<std::size_t>(state.range(0)), 2);
    std::vector<int> labels(state.range(0));
    fdnz::SplitMix64 rng(3);
    for (int& y : labels) y = static_cast<int>(rng.next_below(10));
    for (auto _ : state) {
        auto fwd = fdnz::forward(model, batch);
        auto [loss, dlogits] = fdnz::softmax_cross_entropy(fwd.logits, labels);
        benchmark::DoNotOptimize(loss);
        auto grads = fdnz::backward(model, fwd.cache, dlogits);
        benchmark::DoNotOptimize(grads.input_grad.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CnnForwardBackward)->Arg(16)->Arg(64);

} // namespace
