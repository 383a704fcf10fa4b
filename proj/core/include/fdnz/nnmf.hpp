#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fdnz {

// Non-negative factorization V ~ W H for the Frobenius objective, fitted with
// Lee-Seung multiplicative updates.
struct FactorPair {
    Eigen::MatrixXd W; // d x k basis, non-negative
    Eigen::MatrixXd H; // k x n coefficients, non-negative
    int k = 0;
    // objective_trace[0] is the objective at init, then one value per full
    // (H, W) update pair; non-increasing within 1e-10
    std::vector<double> objective_trace;
};

struct NnmfOptions {
    int max_iters = 500;
    double tol = 1e-6; // stop when the relative objective decrease falls below; 0 disables
};

inline constexpr double kNnmfDelta = 1e-12; // denominator floor

// W, H start uniform(0,1) from seed, then
//   H <- H .* (W'V) ./ (W'W H + delta)
//   W <- W .* (V H') ./ (W H H' + delta)
FactorPair nnmf_fit(const Eigen::MatrixXd& V, int k, const NnmfOptions& options,
                    std::uint64_t seed);

// Runs only the H update with W frozen, from a fresh uniform(0,1) init.
Eigen::MatrixXd nnmf_project(const Eigen::MatrixXd& W, const Eigen::MatrixXd& V_new, int iters,
                             std::uint64_t seed);

inline constexpr int kDefaultProjectIters = 200;

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H);

// squared Frobenius residual ||V - W H||_F^2
double objective(const Eigen::MatrixXd& V, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H);

} // namespace fdnz
