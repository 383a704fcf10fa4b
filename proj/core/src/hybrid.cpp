#include "fdnz/hybrid.hpp"

#include <numeric>
#include <string>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

std::uint64_t ScalerStats::checksum_for(int cnn_dim, int nnmf_k) {
    std::uint64_t h = hash_label("layout:CNN|NNMF");
    h ^= 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(cnn_dim) + 1);
    h *= 0x100000001B3ULL;
    h ^= 0xC2B2AE3D27D4EB4FULL * (static_cast<std::uint64_t>(nnmf_k) + 1);
    return h;
}

Eigen::MatrixXd extract_cnn_features(const ModelParams& model, const Tensor& images) {
    if (model.feature_layer_index() < 0) {
        raise(ErrorKind::NoFeatureLayer, "model has no layer tagged feature_layer");
    }
    const std::size_t n = images.dim(0);
    const int f = model.feature_dim();
    Eigen::MatrixXd out(n, f);
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t stop = std::min(n, start + kChunk);
        std::vector<std::size_t> rows(stop - start);
        std::iota(rows.begin(), rows.end(), start);
        const Tensor features = forward(model, gather_rows(images, rows)).features;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int j = 0; j < f; ++j) {
                out(static_cast<Eigen::Index>(start + i), j) = features.data[i * f + j];
            }
        }
    }
    return out;
}

Eigen::MatrixXd extract_cnn_features(const ModelParams& model, const LabeledImageSet& set) {
    return extract_cnn_features(model, set.images);
}

Eigen::MatrixXd concat_features(const Eigen::MatrixXd& cnn_feats,
                                const Eigen::MatrixXd& nnmf_coeffs) {
    if (cnn_feats.rows() != nnmf_coeffs.rows()) {
        raise(ErrorKind::RowMismatch, std::to_string(cnn_feats.rows()) + " CNN rows vs " +
                                          std::to_string(nnmf_coeffs.rows()) + " NNMF rows");
    }
    Eigen::MatrixXd out(cnn_feats.rows(), cnn_feats.cols() + nnmf_coeffs.cols());
    out << cnn_feats, nnmf_coeffs;
    return out;
}

ScalerStats fit_scaler(const Eigen::MatrixXd& train_features, int cnn_dim, int nnmf_k) {
    const Eigen::Index n = train_features.rows();
    const Eigen::Index d = train_features.cols();
    if (n < 2) raise(ErrorKind::TooFewSamples, "scaler needs >= 2 rows, got " + std::to_string(n));
    if (cnn_dim < 0) {
        cnn_dim = static_cast<int>(d);
        nnmf_k = 0;
    }
    if (cnn_dim + nnmf_k != d) {
        raise(ErrorKind::DimMismatch, "cnn_dim + nnmf_k = " + std::to_string(cnn_dim + nnmf_k) +
                                          " but features have " + std::to_string(d) + " columns");
    }

    ScalerStats stats;
    stats.cnn_dim = cnn_dim;
    stats.nnmf_k = nnmf_k;
    stats.layout_checksum = ScalerStats::checksum_for(cnn_dim, nnmf_k);
    stats.mean = train_features.colwise().mean();
    stats.stdev.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double var = (train_features.col(j).array() - stats.mean(j)).square().sum() /
                           static_cast<double>(n);
        stats.stdev(j) = std::max(std::sqrt(var), kScalerStdFloor);
    }
    return stats;
}

Eigen::MatrixXd apply_scaler(const Eigen::MatrixXd& features, const ScalerStats& stats) {
    if (features.cols() != stats.dim()) {
        raise(ErrorKind::DimMismatch, "features have " + std::to_string(features.cols()) +
                                          " columns, scaler expects " +
                                          std::to_string(stats.dim()));
    }
    return (features.rowwise() - stats.mean.transpose()).array().rowwise() /
           stats.stdev.transpose().array();
}

HybridFeatures build_hybrid(const Eigen::MatrixXd& cnn_feats, const Eigen::MatrixXd& nnmf_coeffs,
                            const ScalerStats& stats, std::vector<int> labels) {
    if (cnn_feats.cols() != stats.cnn_dim || nnmf_coeffs.cols() != stats.nnmf_k ||
        stats.layout_checksum != ScalerStats::checksum_for(stats.cnn_dim, stats.nnmf_k)) {
        raise(ErrorKind::DimMismatch, "feature blocks " + std::to_string(cnn_feats.cols()) + "+" +
                                          std::to_string(nnmf_coeffs.cols()) +
                                          " do not match scaler layout " +
                                          std::to_string(stats.cnn_dim) + "+" +
                                          std::to_string(stats.nnmf_k));
    }
    const Eigen::MatrixXd concat = concat_features(cnn_feats, nnmf_coeffs);
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != concat.rows()) {
        raise(ErrorKind::RowMismatch, std::to_string(labels.size()) + " labels vs " +
                                          std::to_string(concat.rows()) + " feature rows");
    }

    HybridFeatures out;
    out.rows = apply_scaler(concat, stats);
    out.labels = std::move(labels);
    out.cnn_dim = stats.cnn_dim;
    out.nnmf_k = stats.nnmf_k;
    return out;
}

} // namespace fdnz
