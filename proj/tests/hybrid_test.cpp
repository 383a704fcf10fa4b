#include "fdnz/hybrid.hpp"

#include <gtest/gtest.h>

#include "fdnz/error.hpp"
#include "support.hpp"

using namespace fdnz;

namespace {

ModelParams tagged_model() {
    return init_model({LayerSpec::dense(6, 4, true), LayerSpec::relu(), LayerSpec::dense(4, 3)},
                      31);
}

} // namespace

TEST(ExtractCnnFeatures, MatchesForwardFeaturesBitExactly) {
    const ModelParams m = tagged_model();
    const Tensor x = test::random_tensor({5, 6}, 32);
    const Eigen::MatrixXd feats = extract_cnn_features(m, x);
    const Tensor want = forward(m, x).features;
    ASSERT_EQ(feats.rows(), 5);
    ASSERT_EQ(feats.cols(), 4);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) ASSERT_EQ(feats(i, j), want.data[i * 4 + j]);
    }
}

TEST(ExtractCnnFeatures, ZeroModelGivesZeroFeatures) {
    ModelParams m = tagged_model();
    for (auto& [name, t] : m.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    const Eigen::MatrixXd feats = extract_cnn_features(m, test::random_tensor({3, 6}, 33));
    EXPECT_EQ(feats.norm(), 0.0);
}

TEST(ExtractCnnFeatures, UntaggedModelIsRejected) {
    const ModelParams m = init_model({LayerSpec::dense(6, 3)}, 34);
    try {
        extract_cnn_features(m, test::random_tensor({2, 6}, 35));
        FAIL() << "expected NoFeatureLayer";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoFeatureLayer);
    }
}

TEST(FitScaler, ConstantColumnHitsStdFloor) {
    Eigen::MatrixXd features(4, 2);
    features.col(0).setConstant(3.5);
    features.col(1) << 0.0, 2.0, 0.0, 2.0;
    const ScalerStats stats = fit_scaler(features);
    EXPECT_DOUBLE_EQ(stats.mean(0), 3.5);
    EXPECT_DOUBLE_EQ(stats.stdev(0), kScalerStdFloor);
    EXPECT_DOUBLE_EQ(stats.mean(1), 1.0);
    EXPECT_DOUBLE_EQ(stats.stdev(1), 1.0); // population std of {0,2,0,2}
}

TEST(FitScaler, MatchesTwoPassScalarOracle) {
    SplitMix64 rng(36);
    Eigen::MatrixXd features(100, 5);
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 5; ++j) features(i, j) = rng.uniform(-3.0, 7.0);
    }
    const ScalerStats stats = fit_scaler(features);
    for (int j = 0; j < 5; ++j) {
        double mean = 0;
        for (int i = 0; i < 100; ++i) mean += features(i, j);
        mean /= 100;
        double var = 0;
        for (int i = 0; i < 100; ++i) var += (features(i, j) - mean) * (features(i, j) - mean);
        var /= 100;
        EXPECT_NEAR(stats.mean(j), mean, 1e-12);
        EXPECT_NEAR(stats.stdev(j), std::sqrt(var), 1e-12);
    }
}

TEST(FitScaler, RejectsSingleRow) {
    try {
        fit_scaler(Eigen::MatrixXd::Ones(1, 3));
        FAIL() << "expected TooFewSamples";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
    }
}

TEST(ApplyScaler, NormalizesTheFittingSet) {
    SplitMix64 rng(37);
    Eigen::MatrixXd features(50, 3);
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < 3; ++j) features(i, j) = rng.uniform(0.0, 10.0) * (j + 1);
    }
    const ScalerStats stats = fit_scaler(features);
    const Eigen::MatrixXd scaled = apply_scaler(features, stats);
    for (int j = 0; j < 3; ++j) {
        EXPECT_LT(std::abs(scaled.col(j).mean()), 1e-10);
        const double var = (scaled.col(j).array() - scaled.col(j).mean()).square().mean();
        EXPECT_NEAR(std::sqrt(var), 1.0, 1e-10);
    }
}

TEST(ApplyScaler, IdentityStatsPassThrough) {
    ScalerStats stats;
    stats.mean = Eigen::VectorXd::Zero(3);
    stats.stdev = Eigen::VectorXd::Ones(3);
    stats.cnn_dim = 3;
    stats.layout_checksum = ScalerStats::checksum_for(3, 0);
    Eigen::MatrixXd features(2, 3);
    features << 1, 2, 3, 4, 5, 6;
    EXPECT_EQ(apply_scaler(features, stats), features);
}

TEST(ApplyScaler, WrongDimIsRejected) {
    const ScalerStats stats = fit_scaler(Eigen::MatrixXd::Random(4, 3).cwiseAbs());
    try {
        apply_scaler(Eigen::MatrixXd::Ones(2, 4), stats);
        FAIL() << "expected DimMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimMismatch);
    }
}

TEST(BuildHybrid, ColumnOrderIsCnnThenNnmf) {
    Eigen::MatrixXd cnn(1, 2);
    cnn << 10.0, 20.0;
    Eigen::MatrixXd coeffs(1, 1);
    coeffs << 30.0;
    ScalerStats stats;
    stats.mean = Eigen::VectorXd::Zero(3);
    stats.stdev = Eigen::VectorXd::Ones(3);
    stats.cnn_dim = 2;
    stats.nnmf_k = 1;
    stats.layout_checksum = ScalerStats::checksum_for(2, 1);
    const HybridFeatures hybrid = build_hybrid(cnn, coeffs, stats, {4});
    ASSERT_EQ(hybrid.rows.cols(), 3);
    EXPECT_EQ(hybrid.rows(0, 0), 10.0);
    EXPECT_EQ(hybrid.rows(0, 1), 20.0);
    EXPECT_EQ(hybrid.rows(0, 2), 30.0);
    EXPECT_EQ(hybrid.labels, (std::vector<int>{4}));
}

TEST(BuildHybrid, TrainSetColumnsAreCentered) {
    SplitMix64 rng(38);
    Eigen::MatrixXd cnn(40, 3);
    Eigen::MatrixXd coeffs(40, 2);
    for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 3; ++j) cnn(i, j) = rng.uniform(0.0, 5.0);
        for (int j = 0; j < 2; ++j) coeffs(i, j) = rng.uniform(0.0, 2.0);
    }
    const ScalerStats stats = fit_scaler(concat_features(cnn, coeffs), 3, 2);
    const HybridFeatures hybrid = build_hybrid(cnn, coeffs, stats);
    for (int j = 0; j < 5; ++j) EXPECT_LT(std::abs(hybrid.rows.col(j).mean()), 1e-10);
}

TEST(BuildHybrid, PermutingRowsPermutesOutputIdentically) {
    SplitMix64 rng(39);
    Eigen::MatrixXd cnn(6, 2);
    Eigen::MatrixXd coeffs(6, 2);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 2; ++j) {
            cnn(i, j) = rng.uniform();
            coeffs(i, j) = rng.uniform();
        }
    }
    const ScalerStats stats = fit_scaler(concat_features(cnn, coeffs), 2, 2);
    const HybridFeatures forward_order = build_hybrid(cnn, coeffs, stats);
    const HybridFeatures reversed =
        build_hybrid(cnn.colwise().reverse(), coeffs.colwise().reverse(), stats);
    EXPECT_EQ(forward_order.rows.colwise().reverse(), reversed.rows);
}

TEST(BuildHybrid, RowCountMismatchIsRejected) {
    const ScalerStats stats = fit_scaler(Eigen::MatrixXd::Random(4, 3).cwiseAbs(), 2, 1);
    try {
        build_hybrid(Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Ones(3, 1), stats);
        FAIL() << "expected RowMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::RowMismatch);
    }
}

TEST(BuildHybrid, LayoutChecksumGuardsBlockSwap) {
    Eigen::MatrixXd cnn = Eigen::MatrixXd::Ones(4, 2);
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Ones(4, 3);
    const ScalerStats stats = fit_scaler(concat_features(cnn, coeffs), 2, 3);
    // swapping the blocks flips the layout and must be refused
    try {
        build_hybrid(coeffs, cnn, stats);
        FAIL() << "expected DimMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimMismatch);
    }
    EXPECT_NE(ScalerStats::checksum_for(2, 3), ScalerStats::checksum_for(3, 2));
}
