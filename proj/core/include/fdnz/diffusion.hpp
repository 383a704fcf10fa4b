#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fdnz/nn.hpp"

namespace fdnz {

// Linear variance schedule with precomputed cumulative products.
struct NoiseSchedule {
    int T = 0;
    Eigen::VectorXd betas;      // beta_1 .. beta_T
    Eigen::VectorXd alpha_bars; // abar_t = prod_{s<=t} (1 - beta_s)

    // t in [0, T]; abar_0 == 1 by definition
    double alpha_bar(int t) const;
};

NoiseSchedule build_schedule(int T = 50, double beta_start = 1e-4, double beta_end = 0.02);

// closed-form corruption x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, row-wise
Eigen::MatrixXd forward_diffuse(const Eigen::MatrixXd& x0, int t, const Eigen::MatrixXd& eps,
                                const NoiseSchedule& schedule);

// sinusoidal encoding of t/T: dim/2 (sin, cos) pairs with log-spaced
// frequencies from 1 to 1000
Eigen::RowVectorXd timestep_embedding(int t, int T, int dim);

// MLP that maps [noisy features | timestep embedding] back to clean features.
struct DenoiserModel {
    ModelParams net;
    int feature_dim = 0;
    int t_embed_dim = 16;
};

struct DenoiserConfig {
    int hidden = 256;
    int t_embed_dim = 16;
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct DenoiserTrainResult {
    DenoiserModel model; // best-validation snapshot; final model when no validation set
    std::vector<double> loss_trace; // one MSE value per mini-batch
    double best_val_loss = -1.0;
    int best_epoch = -1;
};

// Each example is corrupted at a uniformly drawn step with fresh Gaussian
// noise every epoch; the network regresses the clean feature vector under
// MSE. Validation corruption is drawn once so epoch losses are comparable.
DenoiserTrainResult train_denoiser(const Eigen::MatrixXd& train_features,
                                   const NoiseSchedule& schedule, const DenoiserConfig& config,
                                   const Eigen::MatrixXd* val_features = nullptr);

DenoiserModel make_denoiser(int feature_dim, const DenoiserConfig& config);

// one denoising pass at step t
Eigen::MatrixXd denoise(const DenoiserModel& model, const Eigen::MatrixXd& noisy, int t,
                        const NoiseSchedule& schedule);

struct PurifyOptions {
    int t_inf = 10;
    int m_passes = 10;
    std::uint64_t seed = 0;
    bool zero_noise = false; // diagnostic: force eps = 0 in every pass
};

// noise -> denoise -> classify, m_passes times; returns the mean softmax row
// per sample (rows sum to 1)
Eigen::MatrixXd purify_classify(const Eigen::MatrixXd& features, const DenoiserModel& denoiser,
                                const ModelParams& classifier, const NoiseSchedule& schedule,
                                const PurifyOptions& options);

} // namespace fdnz
