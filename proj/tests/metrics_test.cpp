#include "fdnz/metrics.hpp"

#include <gtest/gtest.h>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"
#include "support.hpp"

using namespace fdnz;

TEST(Confusion, PerfectPredictionsAreDiagonal) {
    const std::vector<int> y = {0, 1, 2, 1, 0, 2, 2};
    const ConfusionMatrix cm = confusion(y, y, 3);
    EXPECT_EQ(cm.total, 7);
    EXPECT_EQ(cm.counts(0, 0), 2);
    EXPECT_EQ(cm.counts(1, 1), 2);
    EXPECT_EQ(cm.counts(2, 2), 3);
    EXPECT_EQ(cm.counts.sum(), 7);
    EXPECT_EQ(cm.counts(0, 1), 0);
}

TEST(Confusion, SingleSampleLandsAtTruePredCell) {
    const ConfusionMatrix cm = confusion({3}, {7}, 10);
    EXPECT_EQ(cm.counts(3, 7), 1);
    EXPECT_EQ(cm.counts.sum(), 1);
}

TEST(Confusion, RowSumsEqualPerClassTrueCounts) {
    SplitMix64 rng(1);
    std::vector<int> y_true(1000);
    std::vector<int> y_pred(1000);
    std::vector<int> want(10, 0);
    for (int i = 0; i < 1000; ++i) {
        y_true[i] = static_cast<int>(rng.next_below(10));
        y_pred[i] = static_cast<int>(rng.next_below(10));
        ++want[y_true[i]];
    }
    const ConfusionMatrix cm = confusion(y_true, y_pred, 10);
    for (int c = 0; c < 10; ++c) EXPECT_EQ(cm.counts.row(c).sum(), want[c]);
}

TEST(Confusion, RejectsOutOfRangeLabels) {
    try {
        confusion({0, 5}, {0, 1}, 5);
        FAIL() << "expected LabelOutOfRange";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::LabelOutOfRange);
    }
}

TEST(ClassificationMetrics, PerfectPredictorScoresOnes) {
    const std::vector<int> y = {0, 1, 2, 3, 0, 1, 2, 3};
    const ClassificationSummary s = classification_metrics(confusion(y, y, 4));
    EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(s.precision_macro, 1.0);
    EXPECT_DOUBLE_EQ(s.recall_macro, 1.0);
    EXPECT_DOUBLE_EQ(s.f1_macro, 1.0);
    EXPECT_DOUBLE_EQ(s.balanced_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(s.mcc, 1.0);
}

TEST(ClassificationMetrics, BinaryExampleMatchesDirectFormula) {
    // cm = [[2,1],[0,3]] -> MCC = 12 / sqrt(16*18)
    ConfusionMatrix cm;
    cm.counts = Eigen::MatrixXi(2, 2);
    cm.counts << 2, 1, 0, 3;
    cm.total = 6;
    const ClassificationSummary s = classification_metrics(cm);
    EXPECT_NEAR(s.mcc, 12.0 / std::sqrt(16.0 * 18.0), 1e-12);
    EXPECT_NEAR(s.mcc, 0.7071, 5e-5);
    EXPECT_DOUBLE_EQ(s.accuracy, 5.0 / 6.0);
}

TEST(ClassificationMetrics, DegeneratePredictorGetsZeroMcc) {
    // everything predicted as class 0 on balanced 2-class data
    const std::vector<int> y_true = {0, 0, 1, 1};
    const std::vector<int> y_pred = {0, 0, 0, 0};
    const ClassificationSummary s = classification_metrics(confusion(y_true, y_pred, 2));
    EXPECT_EQ(s.mcc, 0.0);
    EXPECT_DOUBLE_EQ(s.accuracy, 0.5);
    // precision of the empty class is 0 by convention
    EXPECT_DOUBLE_EQ(s.precision_macro, 0.5 * (0.5 + 0.0));
}

TEST(ClassificationMetrics, MulticlassFormulaReducesToBinaryMcc) {
    SplitMix64 rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<int> y_true(60);
        std::vector<int> y_pred(60);
        for (int i = 0; i < 60; ++i) {
            y_true[i] = static_cast<int>(rng.next_below(2));
            y_pred[i] = static_cast<int>(rng.next_below(2));
        }
        const ConfusionMatrix cm = confusion(y_true, y_pred, 2);
        const double tp = cm.counts(1, 1);
        const double tn = cm.counts(0, 0);
        const double fp = cm.counts(0, 1);
        const double fn = cm.counts(1, 0);
        const double denom =
            std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
        const double classical = denom == 0 ? 0.0 : (tp * tn - fp * fn) / denom;
        ASSERT_NEAR(classification_metrics(cm).mcc, classical, 1e-12);
    }
}

TEST(ClassificationMetrics, EmptyMatrixIsRejected) {
    ConfusionMatrix cm;
    cm.counts = Eigen::MatrixXi::Zero(3, 3);
    cm.total = 0;
    try {
        classification_metrics(cm);
        FAIL() << "expected EmptyMatrix";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyMatrix);
    }
}

TEST(RocAuc, PerfectSeparationScoresOne) {
    Eigen::MatrixXd probs(4, 2);
    probs << 0.9, 0.1, 0.8, 0.2, 0.2, 0.8, 0.1, 0.9;
    const std::vector<int> y = {0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(roc_auc_ovr(probs, y).macro, 1.0);
}

TEST(RocAuc, AllTiedScoresGiveHalf) {
    Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(6, 3, 1.0 / 3.0);
    const std::vector<int> y = {0, 1, 2, 0, 1, 2};
    EXPECT_DOUBLE_EQ(roc_auc_ovr(probs, y).macro, 0.5);
}

TEST(RocAuc, MatchesPairwiseOracleWithTies) {
    for (const int quantize : {0, 8}) {
        const Eigen::MatrixXd probs = test::random_prob_rows(50, 3, 60 + quantize, quantize);
        const std::vector<int> y = test::random_labels(50, 3, 61 + quantize);
        const RocAucResult got = roc_auc_ovr(probs, y);
        double want = 0;
        int used = 0;
        for (int c = 0; c < 3; ++c) {
            std::vector<double> score(50);
            std::vector<bool> positive(50);
            long pos = 0;
            for (int i = 0; i < 50; ++i) {
                score[i] = probs(i, c);
                positive[i] = y[i] == c;
                pos += positive[i];
            }
            if (pos == 0 || pos == 50) continue;
            want += test::pairwise_auc(score, positive);
            ++used;
        }
        ASSERT_GT(used, 0);
        EXPECT_NEAR(got.macro, want / used, 1e-9);
    }
}

TEST(RocAuc, InvariantUnderStrictlyIncreasingScoreTransform) {
    const Eigen::MatrixXd probs = test::random_prob_rows(30, 2, 62);
    const std::vector<int> y = test::random_labels(30, 2, 63);
    const double base = roc_auc_ovr(probs, y).macro;

    // per-class AUC depends only on score order, so any monotone map of a
    // class column (with rows re-normalized pairwise) must keep the rank AUC;
    // check through the binary complement construction
    Eigen::MatrixXd warped(30, 2);
    for (int i = 0; i < 30; ++i) {
        const double s = std::tanh(3.0 * probs(i, 0) + 0.5);
        warped(i, 0) = s;
        warped(i, 1) = 1.0 - s;
    }
    EXPECT_NEAR(roc_auc_ovr(warped, y).macro, base, 1e-12);
}

TEST(RocAuc, SkipsClassesWithoutBothLabelKinds) {
    Eigen::MatrixXd probs = test::random_prob_rows(10, 3, 64);
    const std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}; // class 2 absent
    const RocAucResult result = roc_auc_ovr(probs, y);
    EXPECT_EQ(result.skipped_classes, (std::vector<int>{2}));
}

TEST(RocAuc, AllClassesDegenerateIsError) {
    Eigen::MatrixXd probs(3, 2);
    probs << 0.5, 0.5, 0.4, 0.6, 0.9, 0.1;
    try {
        roc_auc_ovr(probs, {0, 0, 0});
        FAIL() << "expected DegenerateLabels";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateLabels);
    }
}

TEST(LogLoss, KnownValues) {
    Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(5, 10, 0.1);
    EXPECT_NEAR(log_loss(uniform, {0, 1, 2, 3, 4}), std::log(10.0), 1e-12);

    Eigen::MatrixXd perfect = Eigen::MatrixXd::Zero(2, 4);
    perfect(0, 1) = 1.0;
    perfect(1, 3) = 1.0;
    EXPECT_DOUBLE_EQ(log_loss(perfect, {1, 3}), 0.0);

    // zero mass on the true class hits the clipping floor
    EXPECT_NEAR(log_loss(perfect, {0, 3}), -0.5 * std::log(1e-15), 1e-9);
}

TEST(Brier, KnownValues) {
    Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(3, 10, 0.1);
    EXPECT_NEAR(brier(uniform, {0, 5, 9}), 0.9 * 0.9 + 9 * 0.01, 1e-12);

    Eigen::MatrixXd perfect = Eigen::MatrixXd::Zero(1, 4);
    perfect(0, 2) = 1.0;
    EXPECT_DOUBLE_EQ(brier(perfect, {2}), 0.0);
    EXPECT_DOUBLE_EQ(brier(perfect, {1}), 2.0); // full mass on a wrong class
}

TEST(Metrics, MatchScalarOraclesOnRandomInstances) {
    SplitMix64 rng(70);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = std::array{2, 3, 10}[trial % 3];
        const std::size_t n = 20 + rng.next_below(180);
        const Eigen::MatrixXd probs =
            test::random_prob_rows(n, k, 71 + trial, trial % 2 ? 6 : 0);
        std::vector<int> y(n);
        bool all_present = false;
        while (!all_present) {
            for (auto& v : y) v = static_cast<int>(rng.next_below(k));
            std::vector<int> counts(k, 0);
            for (const int v : y) ++counts[v];
            all_present = std::all_of(counts.begin(), counts.end(),
                                      [n](int c) { return c > 0 && c < static_cast<int>(n); });
        }

        std::vector<std::vector<double>> prob_rows(n, std::vector<double>(k));
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c) prob_rows[i][c] = probs(static_cast<Eigen::Index>(i), c);
        }
        const std::vector<int> y_pred = argmax_rows(probs);

        const MetricRow row = metric_row(probs, y);
        ASSERT_NEAR(row.mcc, test::scalar_mcc(y, y_pred, k), 1e-9);
        ASSERT_NEAR(row.log_loss, test::scalar_log_loss(prob_rows, y), 1e-9);
        ASSERT_NEAR(row.brier, test::scalar_brier(prob_rows, y), 1e-9);

        double auc_want = 0;
        int used = 0;
        for (int c = 0; c < k; ++c) {
            std::vector<double> score(n);
            std::vector<bool> positive(n);
            for (std::size_t i = 0; i < n; ++i) {
                score[i] = probs(static_cast<Eigen::Index>(i), c);
                positive[i] = y[i] == c;
            }
            auc_want += test::pairwise_auc(score, positive);
            ++used;
        }
        ASSERT_NEAR(row.roc_auc_ovr_macro, auc_want / used, 1e-9);
    }
}

TEST(Metrics, InvariantUnderSamplePermutation) {
    const Eigen::MatrixXd probs = test::random_prob_rows(40, 3, 80);
    std::vector<int> y = test::random_labels(40, 3, 81);
    const MetricRow base = metric_row(probs, y);

    std::vector<int> order(40);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(82);
    rng.shuffle(order);
    Eigen::MatrixXd shuffled(40, 3);
    std::vector<int> y_shuffled(40);
    for (int i = 0; i < 40; ++i) {
        shuffled.row(i) = probs.row(order[i]);
        y_shuffled[i] = y[order[i]];
    }
    const MetricRow permuted = metric_row(shuffled, y_shuffled);
    EXPECT_NEAR(base.accuracy, permuted.accuracy, 1e-12);
    EXPECT_NEAR(base.mcc, permuted.mcc, 1e-12);
    EXPECT_NEAR(base.roc_auc_ovr_macro, permuted.roc_auc_ovr_macro, 1e-12);
    EXPECT_NEAR(base.log_loss, permuted.log_loss, 1e-12);
    EXPECT_NEAR(base.brier, permuted.brier, 1e-12);
}

TEST(Metrics, InvariantUnderClassRelabeling) {
    const int k = 4;
    const Eigen::MatrixXd probs = test::random_prob_rows(50, k, 83);
    std::vector<int> y = test::random_labels(50, k, 84);
    const MetricRow base = metric_row(probs, y);

    const std::array<int, 4> perm = {2, 0, 3, 1};
    Eigen::MatrixXd relabeled(50, k);
    std::vector<int> y_relabeled(50);
    for (int i = 0; i < 50; ++i) {
        for (int c = 0; c < k; ++c) relabeled.col(perm[c])(i) = probs(i, c);
        y_relabeled[i] = perm[y[i]];
    }
    const MetricRow mapped = metric_row(relabeled, y_relabeled);
    EXPECT_NEAR(base.precision_macro, mapped.precision_macro, 1e-12);
    EXPECT_NEAR(base.recall_macro, mapped.recall_macro, 1e-12);
    EXPECT_NEAR(base.f1_macro, mapped.f1_macro, 1e-12);
    EXPECT_NEAR(base.mcc, mapped.mcc, 1e-12);
    EXPECT_NEAR(base.log_loss, mapped.log_loss, 1e-12);
    EXPECT_NEAR(base.brier, mapped.brier, 1e-12);
    EXPECT_NEAR(base.roc_auc_ovr_macro, mapped.roc_auc_ovr_macro, 1e-12);
}

TEST(Metrics, ProbRowsMustSumToOne) {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Constant(2, 3, 0.5);
    EXPECT_THROW(log_loss(bad, {0, 1}), Error);
    EXPECT_THROW(brier(bad, {0, 1}), Error);
    EXPECT_THROW(roc_auc_ovr(bad, {0, 1}), Error);
}
