#include <benchmark/benchmark.h>

#include "fdnz/attack.hpp"
#include "fdnz/diffusion.hpp"
#include "fdnz/pipeline.hpp"
#include "fdnz/rng.hpp"

namespace {

fdnz::Tensor random_images(std::size_t n, std::uint64_t seed) {
    fdnz::Tensor t({n, 28, 28});
    fdnz::SplitMix64 rng(seed);
    for (double& v : t.data) v = rng.uniform();
    return t;
}

std::vector<int> random_labels(std::size_t n, std::uint64_t seed) {
    fdnz::SplitMix64 rng(seed);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.next_below(10));
    return y;
}

void BM_ApgdCe(benchmark::State& state) {
    const auto model = fdnz::init_model(fdnz::baseline_cnn_layers(), 1);
    const auto x = random_images(static_cast<std::size_t>(state.range(0)), 2);
    const auto y = random_labels(static_cast<std::size_t>(state.range(0)), 3);
    fdnz::AttackConfig config;
    config.n_iters = 10;
    config.losses = {fdnz::AttackLoss::CE};
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fdnz::apgd(model, x, y, fdnz::AttackLoss::CE, config, 4).best_loss.sum());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * config.n_iters);
}
BENCHMARK(BM_ApgdCe)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_PurifyClassify(benchmark::State& state) {
    fdnz::DenoiserConfig dconf;
    const auto denoiser = fdnz::make_denoiser(158, dconf);
    const auto classifier = fdnz::init_model(fdnz::hybrid_classifier_layers(158), 5);
    const auto schedule = fdnz::build_schedule();
    fdnz::SplitMix64 rng(6);
    Eigen::MatrixXd features(state.range(0), 158);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (int j = 0; j < 158; ++j) features(i, j) = rng.normal();
    }
    fdnz::PurifyOptions options;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fdnz::purify_classify(features, denoiser, classifier, schedule, options).sum());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * options.m_passes);
}
BENCHMARK(BM_PurifyClassify)->Arg(256)->Unit(benchmark::kMillisecond);

} // namespace
