#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fdnz {

struct ConfusionMatrix {
    Eigen::MatrixXi counts; // (true class, predicted class)
    long total = 0;

    int num_classes() const { return static_cast<int>(counts.rows()); }
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k);

struct ClassificationSummary {
    double accuracy = 0;
    double precision_macro = 0;
    double recall_macro = 0;
    double f1_macro = 0;
    double mcc = 0; // multiclass R_K statistic
    double balanced_accuracy = 0;
};

// Zero-division conventions: per-class precision/recall are 0 when their
// denominator is 0, F1 is 0 when p + r == 0, MCC is 0 when either sqrt
// factor vanishes.
ClassificationSummary classification_metrics(const ConfusionMatrix& cm);

struct RocAucResult {
    double macro = 0;                 // mean over classes with both label kinds
    std::vector<int> skipped_classes; // classes lacking positives or negatives
};

// one-vs-rest AUC via the Mann-Whitney rank statistic with midrank ties
RocAucResult roc_auc_ovr(const Eigen::MatrixXd& probs, const std::vector<int>& y_true);

// mean of -log(clip(p[y], 1e-15, 1))
double log_loss(const Eigen::MatrixXd& probs, const std::vector<int>& y_true);

// mean squared distance between the probability row and the one-hot label
double brier(const Eigen::MatrixXd& probs, const std::vector<int>& y_true);

struct MetricRow {
    double accuracy = 0;
    double precision_macro = 0;
    double recall_macro = 0;
    double f1_macro = 0;
    double mcc = 0;
    double balanced_accuracy = 0;
    double roc_auc_ovr_macro = 0;
    double log_loss = 0;
    double brier = 0;
};

std::vector<int> argmax_rows(const Eigen::MatrixXd& probs);

// all nine metrics from probability rows; predictions are row argmaxes
MetricRow metric_row(const Eigen::MatrixXd& probs, const std::vector<int>& y_true);

} // namespace fdnz
