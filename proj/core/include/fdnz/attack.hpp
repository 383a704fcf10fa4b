#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fdnz/nn.hpp"

namespace fdnz {

enum class AttackLoss { CE, DLR };

const char* to_string(AttackLoss loss);

struct AttackConfig {
    double epsilon = 0.1; // L-inf budget in pixel units
    int n_iters = 100;
    int n_restarts = 1;
    double rho = 0.75;            // fraction of improving steps that keeps the step size
    double alpha_momentum = 0.75; // weight of the gradient step vs the momentum term
    std::vector<AttackLoss> losses = {AttackLoss::CE, AttackLoss::DLR};
};

struct AdversarialBatch {
    Tensor x_adv;                          // same shape as the clean batch
    std::vector<std::uint8_t> success_mask; // 1 when the baseline misclassifies
    std::vector<AttackLoss> source_loss;   // which loss produced the kept sample
};

struct SampleLossGrad {
    Eigen::VectorXd loss; // per-sample objective value
    Tensor input_grad;    // d loss_i / d x_i, batch shaped
};

// per-sample cross-entropy of the true label
SampleLossGrad ce_loss_and_grad(const ModelParams& model, const Tensor& x,
                                const std::vector<int>& y);

// difference-of-logits-ratio: -(z_y - max_{i != y} z_i) / (z_(1) - z_(3) + 1e-12);
// shift invariant, needs K >= 3
SampleLossGrad dlr_loss_and_grad(const ModelParams& model, const Tensor& x,
                                 const std::vector<int>& y);

// clamp to the eps ball around x_clean, then to the [0,1] box
Tensor project_linf(const Tensor& x_adv, const Tensor& x_clean, double epsilon);

struct ApgdResult {
    Tensor x_best;
    Eigen::VectorXd best_loss;
};

// checkpoint iterations w_j = ceil(p_j * n_iters) for the fraction sequence
// p_0 = 0, p_1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06)
std::vector<int> checkpoint_iters(int n_iters);

// Auto-PGD: sign-gradient steps with momentum, per-sample best-point
// tracking, and step-size halving at the checkpoint schedule when fewer than
// rho of the segment's steps improved the loss or when both the step size
// and the best loss stalled.
ApgdResult apgd(const ModelParams& model, const Tensor& x, const std::vector<int>& y,
                AttackLoss loss_kind, const AttackConfig& config, std::uint64_t seed);

// APGD per configured loss; per sample, the first variant that flips the
// prediction wins, otherwise the variant with the higher final loss.
AdversarialBatch worst_case_attack(const ModelParams& model, const Tensor& x,
                                   const std::vector<int>& y, const AttackConfig& config,
                                   std::uint64_t seed);

} // namespace fdnz
