#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fdnz/data.hpp"
#include "fdnz/nn.hpp"

namespace fdnz {

// Z-score statistics fitted on training rows only. The layout checksum pins
// the [CNN | NNMF] column order so stale stats cannot be applied to a
// reordered feature build.
struct ScalerStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stdev; // population std, floored at 1e-8
    int cnn_dim = 0;
    int nnmf_k = 0;
    std::uint64_t layout_checksum = 0;

    int dim() const { return static_cast<int>(mean.size()); }
    static std::uint64_t checksum_for(int cnn_dim, int nnmf_k);
};

inline constexpr double kScalerStdFloor = 1e-8;

struct HybridFeatures {
    Eigen::MatrixXd rows; // n x (F + k), first F columns CNN, last k columns NNMF, scaled
    std::vector<int> labels;
    int cnn_dim = 0;
    int nnmf_k = 0;
};

// post-ReLU activations of the model's tagged feature layer, one row per image
Eigen::MatrixXd extract_cnn_features(const ModelParams& model, const Tensor& images);
Eigen::MatrixXd extract_cnn_features(const ModelParams& model, const LabeledImageSet& set);

// raw [CNN | NNMF] concatenation, no scaling
Eigen::MatrixXd concat_features(const Eigen::MatrixXd& cnn_feats,
                                const Eigen::MatrixXd& nnmf_coeffs);

// cnn_dim < 0 means "single block": cnn_dim = D, nnmf_k = 0
ScalerStats fit_scaler(const Eigen::MatrixXd& train_features, int cnn_dim = -1, int nnmf_k = 0);

Eigen::MatrixXd apply_scaler(const Eigen::MatrixXd& features, const ScalerStats& stats);

// concatenates, validates the layout against stats, applies the train-fitted
// scaler; never recomputes statistics
HybridFeatures build_hybrid(const Eigen::MatrixXd& cnn_feats, const Eigen::MatrixXd& nnmf_coeffs,
                            const ScalerStats& stats, std::vector<int> labels = {});

} // namespace fdnz
