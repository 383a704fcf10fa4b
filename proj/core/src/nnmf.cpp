#include "fdnz/nnmf.hpp"

#include <string>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

namespace {

void check_non_negative(const Eigen::MatrixXd& m, const char* what) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (m(i, j) < 0.0) {
                raise(ErrorKind::NegativeInput, std::string(what) + " has negative entry " +
                                                    std::to_string(m(i, j)) + " at (" +
                                                    std::to_string(i) + ", " +
                                                    std::to_string(j) + ")");
            }
        }
    }
}

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform();
    }
    return m;
}

} // namespace

FactorPair nnmf_fit(const Eigen::MatrixXd& V, int k, const NnmfOptions& options,
                    std::uint64_t seed) {
    check_non_negative(V, "V");
    if (k < 1 || k > std::min(V.rows(), V.cols())) {
        raise(ErrorKind::RankTooLarge, "k=" + std::to_string(k) + " for a " +
                                           std::to_string(V.rows()) + "x" +
                                           std::to_string(V.cols()) + " matrix");
    }
    if (options.max_iters < 1) raise(ErrorKind::InvalidValue, "max_iters must be >= 1");

    SplitMix64 rng = substream(seed, "nnmf.init");
    FactorPair fit;
    fit.k = k;
    fit.W = uniform_matrix(V.rows(), k, rng);
    fit.H = uniform_matrix(k, V.cols(), rng);
    fit.objective_trace.push_back(objective(V, fit.W, fit.H));

    for (int iter = 0; iter < options.max_iters; ++iter) {
        fit.H.array() *= (fit.W.transpose() * V).array() /
                         ((fit.W.transpose() * fit.W) * fit.H + kNnmfDelta *
                          Eigen::MatrixXd::Ones(k, V.cols())).array();
        fit.W.array() *= (V * fit.H.transpose()).array() /
                         (fit.W * (fit.H * fit.H.transpose()) + kNnmfDelta *
                          Eigen::MatrixXd::Ones(V.rows(), k)).array();

        const double prev = fit.objective_trace.back();
        const double cur = objective(V, fit.W, fit.H);
        fit.objective_trace.push_back(cur);
        if (options.tol > 0.0 && prev > 0.0 && (prev - cur) / prev < options.tol) break;
    }
    return fit;
}

Eigen::MatrixXd nnmf_project(const Eigen::MatrixXd& W, const Eigen::MatrixXd& V_new, int iters,
                             std::uint64_t seed) {
    check_non_negative(W, "W");
    check_non_negative(V_new, "V_new");
    if (W.rows() != V_new.rows()) {
        raise(ErrorKind::ShapeMismatch, "W has " + std::to_string(W.rows()) + " rows, V_new has " +
                                            std::to_string(V_new.rows()));
    }
    if (iters < 1) raise(ErrorKind::InvalidValue, "iters must be >= 1");

    const Eigen::Index k = W.cols();
    SplitMix64 rng = substream(seed, "nnmf.project");
    Eigen::MatrixXd H = uniform_matrix(k, V_new.cols(), rng);
    const Eigen::MatrixXd WtW = W.transpose() * W;
    const Eigen::MatrixXd WtV = W.transpose() * V_new;
    const Eigen::MatrixXd floor_m = kNnmfDelta * Eigen::MatrixXd::Ones(k, V_new.cols());
    for (int iter = 0; iter < iters; ++iter) {
        H.array() *= WtV.array() / (WtW * H + floor_m).array();
    }
    return H;
}

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H) {
    if (W.cols() != H.rows()) {
        raise(ErrorKind::ShapeMismatch, "W is " + std::to_string(W.rows()) + "x" +
                                            std::to_string(W.cols()) + ", H is " +
                                            std::to_string(H.rows()) + "x" +
                                            std::to_string(H.cols()));
    }
    return W * H;
}

double objective(const Eigen::MatrixXd& V, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H) {
    if (W.cols() != H.rows() || V.rows() != W.rows() || V.cols() != H.cols()) {
        raise(ErrorKind::ShapeMismatch, "objective: V " + std::to_string(V.rows()) + "x" +
                                            std::to_string(V.cols()) + " vs W H " +
                                            std::to_string(W.rows()) + "x" +
                                            std::to_string(H.cols()));
    }
    return (V - W * H).squaredNorm();
}

} // namespace fdnz
