#include "fdnz/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fdnz/error.hpp"

namespace fdnz {

namespace {

void check_prob_rows(const Eigen::MatrixXd& probs, const std::vector<int>& y_true) {
    if (probs.rows() != static_cast<Eigen::Index>(y_true.size())) {
        raise(ErrorKind::RowMismatch, std::to_string(probs.rows()) + " probability rows vs " +
                                          std::to_string(y_true.size()) + " labels");
    }
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (std::abs(probs.row(i).sum() - 1.0) > 1e-6) {
            raise(ErrorKind::InvalidValue, "probability row " + std::to_string(i) +
                                               " sums to " + std::to_string(probs.row(i).sum()));
        }
    }
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= probs.cols()) {
            raise(ErrorKind::LabelOutOfRange, "label " + std::to_string(y_true[i]) +
                                                  " at index " + std::to_string(i));
        }
    }
}

} // namespace

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
    if (y_true.size() != y_pred.size()) {
        raise(ErrorKind::RowMismatch, std::to_string(y_true.size()) + " true labels vs " +
                                          std::to_string(y_pred.size()) + " predictions");
    }
    ConfusionMatrix cm;
    cm.counts = Eigen::MatrixXi::Zero(k, k);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= k || y_pred[i] < 0 || y_pred[i] >= k) {
            raise(ErrorKind::LabelOutOfRange, "labels (" + std::to_string(y_true[i]) + ", " +
                                                  std::to_string(y_pred[i]) + ") at index " +
                                                  std::to_string(i) + " with K=" +
                                                  std::to_string(k));
        }
        ++cm.counts(y_true[i], y_pred[i]);
    }
    cm.total = static_cast<long>(y_true.size());
    return cm;
}

ClassificationSummary classification_metrics(const ConfusionMatrix& cm) {
    if (cm.total < 1) raise(ErrorKind::EmptyMatrix, "confusion matrix holds no samples");
    const int k = cm.num_classes();
    const double n = static_cast<double>(cm.total);

    ClassificationSummary out;
    double trace = 0;
    double precision_sum = 0;
    double recall_sum = 0;
    double f1_sum = 0;
    double sum_pk_tk = 0;
    double sum_pk2 = 0;
    double sum_tk2 = 0;
    for (int c = 0; c < k; ++c) {
        const double tp = cm.counts(c, c);
        const double colsum = cm.counts.col(c).sum(); // predicted as c
        const double rowsum = cm.counts.row(c).sum(); // truly c
        trace += tp;
        const double precision = colsum > 0 ? tp / colsum : 0.0;
        const double recall = rowsum > 0 ? tp / rowsum : 0.0;
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        sum_pk_tk += colsum * rowsum;
        sum_pk2 += colsum * colsum;
        sum_tk2 += rowsum * rowsum;
    }
    out.accuracy = trace / n;
    out.precision_macro = precision_sum / k;
    out.recall_macro = recall_sum / k;
    out.f1_macro = f1_sum / k;
    out.balanced_accuracy = recall_sum / k;

    const double fac1 = n * n - sum_pk2;
    const double fac2 = n * n - sum_tk2;
    out.mcc = (fac1 > 0 && fac2 > 0) ? (trace * n - sum_pk_tk) / std::sqrt(fac1 * fac2) : 0.0;
    return out;
}

RocAucResult roc_auc_ovr(const Eigen::MatrixXd& probs, const std::vector<int>& y_true) {
    check_prob_rows(probs, y_true);
    const Eigen::Index n = probs.rows();
    const int k = static_cast<int>(probs.cols());

    RocAucResult result;
    double auc_sum = 0;
    int used = 0;
    std::vector<Eigen::Index> order(n);
    std::vector<double> ranks(n);
    for (int c = 0; c < k; ++c) {
        long positives = 0;
        for (const int y : y_true) positives += y == c;
        const long negatives = n - positives;
        if (positives == 0 || negatives == 0) {
            result.skipped_classes.push_back(c);
            continue;
        }

        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return probs(a, c) < probs(b, c);
        });
        // midranks over tied scores
        for (Eigen::Index i = 0; i < n;) {
            Eigen::Index j = i;
            while (j + 1 < n && probs(order[j + 1], c) == probs(order[i], c)) ++j;
            const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
            for (Eigen::Index t = i; t <= j; ++t) ranks[order[t]] = mid;
            i = j + 1;
        }
        double rank_sum = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (y_true[i] == c) rank_sum += ranks[i];
        }
        const double p = static_cast<double>(positives);
        auc_sum += (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
        ++used;
    }
    if (used == 0) {
        raise(ErrorKind::DegenerateLabels, "no class has both positive and negative samples");
    }
    result.macro = auc_sum / used;
    return result;
}

double log_loss(const Eigen::MatrixXd& probs, const std::vector<int>& y_true) {
    check_prob_rows(probs, y_true);
    double sum = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        sum += -std::log(std::clamp(probs(i, y_true[i]), 1e-15, 1.0));
    }
    return sum / static_cast<double>(probs.rows());
}

double brier(const Eigen::MatrixXd& probs, const std::vector<int>& y_true) {
    check_prob_rows(probs, y_true);
    double sum = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            const double r = probs(i, c) - (y_true[i] == c ? 1.0 : 0.0);
            sum += r * r;
        }
    }
    return sum / static_cast<double>(probs.rows());
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& probs) {
    std::vector<int> out(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        probs.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

MetricRow metric_row(const Eigen::MatrixXd& probs, const std::vector<int>& y_true) {
    const ConfusionMatrix cm =
        confusion(y_true, argmax_rows(probs), static_cast<int>(probs.cols()));
    const ClassificationSummary summary = classification_metrics(cm);
    MetricRow row;
    row.accuracy = summary.accuracy;
    row.precision_macro = summary.precision_macro;
    row.recall_macro = summary.recall_macro;
    row.f1_macro = summary.f1_macro;
    row.mcc = summary.mcc;
    row.balanced_accuracy = summary.balanced_accuracy;
    row.roc_auc_ovr_macro = roc_auc_ovr(probs, y_true).macro;
    row.log_loss = log_loss(probs, y_true);
    row.brier = brier(probs, y_true);
    return row;
}

} // namespace fdnz
