#include "fdnz/nn.hpp"

#include <gtest/gtest.h>

#include "fdnz/error.hpp"
#include "support.hpp"

using namespace fdnz;

namespace {

std::vector<LayerSpec> small_cnn() {
    return {
        LayerSpec::conv2d(1, 4),  LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv2d(4, 6),  LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::flatten(),
        LayerSpec::dense(6 * 7 * 7, 16, true),
        LayerSpec::relu(),
        LayerSpec::dense(16, 10),
    };
}

} // namespace

TEST(InitModel, DenseShapesAndZeroBias) {
    const ModelParams m = init_model({LayerSpec::dense(4, 3)}, 1);
    ASSERT_EQ(m.tensors.size(), 2u);
    EXPECT_EQ(m.tensors[0].first, "dense1.w");
    EXPECT_EQ(m.tensors[0].second.shape, (std::vector<std::size_t>{3, 4}));
    EXPECT_EQ(m.tensors[1].second.shape, (std::vector<std::size_t>{3}));
    for (const double b : m.tensors[1].second.data) EXPECT_EQ(b, 0.0);

    // Glorot bound
    const double bound = std::sqrt(6.0 / (4 + 3));
    for (const double w : m.tensors[0].second.data) {
        EXPECT_LT(std::abs(w), bound);
    }
}

TEST(InitModel, RejectsConvIntoDenseWithoutFlatten) {
    try {
        init_model({LayerSpec::conv2d(1, 4), LayerSpec::dense(100, 10)}, 1);
        FAIL() << "expected ShapeMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
    }
}

TEST(InitModel, DeterministicInSeed) {
    const ModelParams a = init_model(small_cnn(), 11);
    const ModelParams b = init_model(small_cnn(), 11);
    const ModelParams c = init_model(small_cnn(), 12);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.tensors[0].second.data, c.tensors[0].second.data);
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
    ModelParams m = init_model({LayerSpec::dense(5, 10)}, 1);
    for (auto& [name, t] : m.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    const Tensor x = test::random_tensor({3, 5}, 2);
    const Tensor logits = forward(m, x).logits;
    for (const double v : logits.data) EXPECT_EQ(v, 0.0);
    const Tensor probs = softmax(logits);
    for (const double p : probs.data) EXPECT_NEAR(p, 0.1, 1e-15);
}

TEST(Forward, IdentityDenseLayerPassesInputThrough) {
    ModelParams m = init_model({LayerSpec::dense(4, 4)}, 1);
    Tensor& w = m.tensor("dense1.w");
    std::fill(w.data.begin(), w.data.end(), 0.0);
    for (int i = 0; i < 4; ++i) w.data[i * 4 + i] = 1.0;
    const Tensor x = test::random_tensor({2, 4}, 3);
    const Tensor logits = forward(m, x).logits;
    EXPECT_EQ(logits.data, x.data);
}

TEST(Forward, MatchesScalarLoopOracleOnRandomTwoLayerNet) {
    const ModelParams m = init_model({LayerSpec::dense(6, 8), LayerSpec::relu(),
                                      LayerSpec::dense(8, 5)},
                                     21);
    const Tensor x = test::random_tensor({3, 6}, 22);
    const Tensor got = forward(m, x).logits;
    const Tensor want = test::naive_forward(m, x);
    ASSERT_EQ(got.shape, want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-12);
}

TEST(Forward, MatchesScalarLoopOracleOnFullCnn) {
    const ModelParams m = init_model(small_cnn(), 33);
    const Tensor x = test::random_tensor({2, 28, 28}, 34, 0.0, 1.0);
    const Tensor got = forward(m, x).logits;
    const Tensor want = test::naive_forward(m, x);
    ASSERT_EQ(got.shape, want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-11);
}

TEST(Forward, FeatureOutputIsPostReluActivationOfTaggedLayer) {
    const ModelParams m = init_model(small_cnn(), 5);
    const Tensor x = test::random_tensor({2, 28, 28}, 6, 0.0, 1.0);
    const ForwardResult fwd = forward(m, x);
    ASSERT_EQ(fwd.features.shape, (std::vector<std::size_t>{2, 16}));
    for (const double v : fwd.features.data) EXPECT_GE(v, 0.0);
    // tagged dense feeds a relu; its output is layer index 8 in acts
    const Tensor& relu_out = fwd.cache.acts[9];
    EXPECT_EQ(fwd.features.data, relu_out.data);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLnK) {
    Tensor logits({4, 10});
    const auto [loss, dlogits] = softmax_cross_entropy(logits, {0, 3, 7, 9});
    EXPECT_NEAR(loss, std::log(10.0), 1e-12);
    (void)dlogits;
}

TEST(SoftmaxCrossEntropy, SaturatedTrueLogitGivesZeroLoss) {
    Tensor logits({1, 10});
    logits.data[4] = 1000.0;
    const auto [loss, dlogits] = softmax_cross_entropy(logits, {4});
    EXPECT_NEAR(loss, 0.0, 1e-12);
    (void)dlogits;
}

TEST(SoftmaxCrossEntropy, RowsOfSoftmaxSumToOne) {
    const Tensor logits = test::random_tensor({8, 7}, 44, -30.0, 30.0);
    const Tensor probs = softmax(logits);
    for (std::size_t i = 0; i < 8; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 7; ++j) sum += probs.data[i * 7 + j];
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
    Tensor logits = test::random_tensor({4, 5}, 55, -2.0, 2.0);
    const std::vector<int> y = {1, 0, 4, 2};
    const auto [loss, dlogits] = softmax_cross_entropy(logits, y);
    (void)loss;
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        const double keep = logits.data[i];
        logits.data[i] = keep + h;
        const double up = softmax_cross_entropy(logits, y).first;
        logits.data[i] = keep - h;
        const double down = softmax_cross_entropy(logits, y).first;
        logits.data[i] = keep;
        EXPECT_NEAR(dlogits.data[i], (up - down) / (2 * h), 1e-6);
    }
}

TEST(Backward, ZeroUpstreamGradientZeroesEverything) {
    const ModelParams m = init_model(small_cnn(), 7);
    const Tensor x = test::random_tensor({2, 28, 28}, 8, 0.0, 1.0);
    const ForwardResult fwd = forward(m, x);
    const Tensor dlogits({2, 10});
    const Gradients grads = backward(m, fwd.cache, dlogits);
    for (const auto& [name, g] : grads.tensors) {
        for (const double v : g.data) ASSERT_EQ(v, 0.0) << name;
    }
    for (const double v : grads.input_grad.data) ASSERT_EQ(v, 0.0);
}

TEST(Backward, LinearLayerInputGradIsColumnSumOfWeights) {
    // loss = sum of outputs -> dlogits = 1 -> input grad = column sums of W
    const ModelParams m = init_model({LayerSpec::dense(4, 3)}, 9);
    const Tensor x = test::random_tensor({1, 4}, 10);
    const ForwardResult fwd = forward(m, x);
    Tensor dlogits({1, 3});
    std::fill(dlogits.data.begin(), dlogits.data.end(), 1.0);
    const Gradients grads = backward(m, fwd.cache, dlogits);
    const Tensor& w = m.tensor("dense1.w");
    for (int i = 0; i < 4; ++i) {
        double col = 0;
        for (int o = 0; o < 3; ++o) col += w.data[o * 4 + i];
        EXPECT_NEAR(grads.input_grad.data[i], col, 1e-14);
    }
}

TEST(Backward, StaleCacheIsRejected) {
    const ModelParams m = init_model({LayerSpec::dense(4, 3)}, 9);
    const ForwardResult fwd = forward(m, test::random_tensor({2, 4}, 10));
    const Tensor wrong({3, 3});
    try {
        backward(m, fwd.cache, wrong);
        FAIL() << "expected StaleCache";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StaleCache);
    }
}

TEST(Backward, FullCnnGradientsMatchFiniteDifferences) {
    const ModelParams m = init_model(small_cnn(), 77);
    const Tensor x = test::random_tensor({2, 28, 28}, 78, 0.05, 0.95);
    const std::vector<int> y = {3, 8};
    EXPECT_LT(test::max_grad_rel_err(m, x, y), 1e-4);
}

TEST(OptimizerStep, AdamFirstStepHasClosedForm) {
    ModelParams m = init_model({LayerSpec::dense(2, 2)}, 1);
    const std::vector<double> before = m.tensor("dense1.w").data;
    Gradients grads;
    for (const auto& [name, t] : m.tensors) {
        Tensor g(t.shape);
        std::fill(g.data.begin(), g.data.end(), 1.0);
        grads.tensors.emplace_back(name, std::move(g));
    }
    OptimState state = OptimState::adam(1e-3);
    optimizer_step(m, grads, state);
    const double expected_step = 1e-3 * (1.0 / (1.0 + 1e-8));
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_NEAR(m.tensor("dense1.w").data[i], before[i] - expected_step, 1e-15);
    }
}

TEST(OptimizerStep, ZeroGradZeroMomentumLeavesParamsUnchanged) {
    ModelParams m = init_model({LayerSpec::dense(3, 2)}, 2);
    const std::vector<double> before = m.tensor("dense1.w").data;
    Gradients grads;
    for (const auto& [name, t] : m.tensors) grads.tensors.emplace_back(name, Tensor(t.shape));
    OptimState state = OptimState::sgd_momentum(0.1, 0.0);
    optimizer_step(m, grads, state);
    optimizer_step(m, grads, state);
    EXPECT_EQ(m.tensor("dense1.w").data, before);
}

TEST(OptimizerStep, PlainSgdIsExactlyLrTimesGrad) {
    ModelParams m = init_model({LayerSpec::dense(2, 2)}, 3);
    const std::vector<double> before = m.tensor("dense1.w").data;
    Gradients grads;
    for (const auto& [name, t] : m.tensors) {
        Tensor g(t.shape);
        for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] = 0.5 * (i + 1);
        grads.tensors.emplace_back(name, std::move(g));
    }
    OptimState state = OptimState::sgd_momentum(0.2, 0.0);
    optimizer_step(m, grads, state);
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_DOUBLE_EQ(m.tensor("dense1.w").data[i], before[i] - 0.2 * 0.5 * (i + 1));
    }
}

TEST(OptimizerStep, RejectsMismatchedGradients) {
    ModelParams m = init_model({LayerSpec::dense(2, 2)}, 3);
    Gradients grads;
    grads.tensors.emplace_back("dense1.w", Tensor({2, 2}));
    OptimState state = OptimState::adam();
    EXPECT_THROW(optimizer_step(m, grads, state), Error);
}

TEST(Train, LearnsLinearlySeparableToyProblem) {
    // two Gaussian blobs in 2D
    SplitMix64 rng(5);
    const std::size_t n = 80;
    Tensor x({n, 2});
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        x.data[2 * i] = (y[i] ? 1.5 : -1.5) + 0.3 * rng.normal();
        x.data[2 * i + 1] = (y[i] ? -1.0 : 1.0) + 0.3 * rng.normal();
    }
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.seed = 6;
    const TrainResult result = train(init_model({LayerSpec::dense(2, 2)}, 7), x, y, cfg);
    const std::vector<int> pred = predict(result.model, x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += pred[i] == y[i];
    EXPECT_EQ(hits, n);
}

TEST(Train, ZeroEpochsReturnsInitUnchanged) {
    const ModelParams init = init_model({LayerSpec::dense(3, 2)}, 8);
    Tensor x = test::random_tensor({4, 3}, 9);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult result = train(init, x, {0, 1, 0, 1}, cfg);
    EXPECT_EQ(result.model, init);
    EXPECT_TRUE(result.loss_trace.empty());
}

TEST(Train, DeterministicLossTrace) {
    Tensor x = test::random_tensor({32, 4}, 10);
    const std::vector<int> y = test::random_labels(32, 3, 11);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.seed = 12;
    const ModelParams init = init_model({LayerSpec::dense(4, 3)}, 13);
    const TrainResult a = train(init, x, y, cfg);
    const TrainResult b = train(init, x, y, cfg);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    EXPECT_EQ(a.model, b.model);
}

TEST(Train, EmptyDatasetIsRejected) {
    const ModelParams init = init_model({LayerSpec::dense(3, 2)}, 8);
    Tensor x({0, 3});
    try {
        train(init, x, {}, TrainConfig{});
        FAIL() << "expected EmptyDataset";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
    }
}

TEST(MseLoss, ValueAndGradient) {
    Tensor pred({2, 2});
    pred.data = {1.0, 2.0, 3.0, 4.0};
    Tensor target({2, 2});
    target.data = {0.0, 2.0, 3.0, 2.0};
    const auto [loss, dpred] = mse_loss(pred, target);
    EXPECT_DOUBLE_EQ(loss, (1.0 + 4.0) / 2.0);
    EXPECT_DOUBLE_EQ(dpred.data[0], 2.0 * 1.0 / 2.0);
    EXPECT_DOUBLE_EQ(dpred.data[3], 2.0 * 2.0 / 2.0);
}
