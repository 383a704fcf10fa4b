#include "fdnz/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

namespace {

constexpr std::size_t kEvalChunk = 128;
constexpr double kDlrDelta = 1e-12;

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_pixel_box(const Tensor& x) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (!(x.data[i] >= 0.0 && x.data[i] <= 1.0)) {
            raise(ErrorKind::InvalidValue, "input pixel " + std::to_string(i) + " = " +
                                               std::to_string(x.data[i]) + " outside [0,1]");
        }
    }
}

void check_config(const AttackConfig& config) {
    if (config.epsilon < 0.0 || config.epsilon > 1.0) {
        raise(ErrorKind::InvalidValue, "epsilon must be in [0,1]");
    }
    if (config.n_iters < 2) raise(ErrorKind::InvalidValue, "n_iters must be >= 2");
    if (!(config.rho > 0.0 && config.rho < 1.0)) {
        raise(ErrorKind::InvalidValue, "rho must be in (0,1)");
    }
    if (config.n_restarts < 1) raise(ErrorKind::InvalidValue, "n_restarts must be >= 1");
}

// per-row loss/gradient evaluated through forward/backward in chunks;
// fn(logits_row, label, k) fills dlogits_row and returns the loss
template <typename RowLoss>
SampleLossGrad batched_loss_grad(const ModelParams& model, const Tensor& x,
                                 const std::vector<int>& y, RowLoss fn) {
    const std::size_t n = x.dim(0);
    if (n != y.size()) {
        raise(ErrorKind::ShapeMismatch, "batch of " + std::to_string(n) + " vs " +
                                            std::to_string(y.size()) + " labels");
    }
    const int k = model.output_dim();
    for (const int label : y) {
        if (label < 0 || label >= k) {
            raise(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " with K=" +
                                                  std::to_string(k));
        }
    }

    SampleLossGrad out;
    out.loss.resize(static_cast<Eigen::Index>(n));
    out.input_grad = Tensor(x.shape);
    const std::size_t stride = x.numel() / n;

    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        const std::size_t stop = std::min(n, start + kEvalChunk);
        std::vector<std::size_t> rows(stop - start);
        std::iota(rows.begin(), rows.end(), start);
        ForwardResult fwd = forward(model, gather_rows(x, rows));
        Tensor dlogits(fwd.logits.shape);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.loss(static_cast<Eigen::Index>(start + i)) =
                fn(fwd.logits.data.data() + i * k, y[start + i],
                   dlogits.data.data() + i * k, k);
        }
        const Gradients grads = backward(model, fwd.cache, dlogits);
        std::copy_n(grads.input_grad.data.begin(), rows.size() * stride,
                    out.input_grad.data.begin() + static_cast<std::ptrdiff_t>(start * stride));
    }
    return out;
}

double ce_row(const double* z, int y, double* dz, int k) {
    const double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(z[j] - m);
    for (int j = 0; j < k; ++j) dz[j] = std::exp(z[j] - m) / sum;
    dz[y] -= 1.0;
    return -(z[y] - m - std::log(sum));
}

double dlr_row(const double* z, int y, double* dz, int k) {
    // top-3 logits, ties broken by index
    int top1 = 0;
    for (int j = 1; j < k; ++j) {
        if (z[j] > z[top1]) top1 = j;
    }
    int top2 = -1;
    int top3 = -1;
    for (int j = 0; j < k; ++j) {
        if (j == top1) continue;
        if (top2 < 0 || z[j] > z[top2]) {
            top3 = top2;
            top2 = j;
        } else if (top3 < 0 || z[j] > z[top3]) {
            top3 = j;
        }
    }
    int best_other = top1 != y ? top1 : top2; // argmax over i != y
    const double numer = z[y] - z[best_other];
    const double denom = z[top1] - z[top3] + kDlrDelta;
    std::fill_n(dz, k, 0.0);
    dz[y] += -1.0 / denom;
    dz[best_other] += 1.0 / denom;
    dz[top1] += numer / (denom * denom);
    dz[top3] += -numer / (denom * denom);
    return -numer / denom;
}

} // namespace

const char* to_string(AttackLoss loss) { return loss == AttackLoss::CE ? "CE" : "DLR"; }

SampleLossGrad ce_loss_and_grad(const ModelParams& model, const Tensor& x,
                                const std::vector<int>& y) {
    return batched_loss_grad(model, x, y, ce_row);
}

SampleLossGrad dlr_loss_and_grad(const ModelParams& model, const Tensor& x,
                                 const std::vector<int>& y) {
    if (model.output_dim() < 3) {
        raise(ErrorKind::TooFewClasses, "DLR needs K >= 3, model has K=" +
                                            std::to_string(model.output_dim()));
    }
    return batched_loss_grad(model, x, y, dlr_row);
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x_clean, double epsilon) {
    if (!x_adv.same_shape(x_clean)) {
        raise(ErrorKind::ShapeMismatch, "x_adv " + x_adv.shape_string() + " vs x_clean " +
                                            x_clean.shape_string());
    }
    Tensor out(x_adv.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double lo = x_clean.data[i] - epsilon;
        const double hi = x_clean.data[i] + epsilon;
        out.data[i] = std::clamp(std::clamp(x_adv.data[i], lo, hi), 0.0, 1.0);
    }
    return out;
}

std::vector<int> checkpoint_iters(int n_iters) {
    std::vector<int> ws;
    double p_prev = 0.0;
    double p = 0.22;
    while (p < 1.0) {
        // the 1e-9 guard keeps accumulated float dust from pushing ceil up a step
        const int w = static_cast<int>(std::ceil(p * n_iters - 1e-9));
        if (w >= 1 && w < n_iters && (ws.empty() || w > ws.back())) ws.push_back(w);
        const double next = p + std::max(p - p_prev - 0.03, 0.06);
        p_prev = p;
        p = next;
    }
    return ws;
}

ApgdResult apgd(const ModelParams& model, const Tensor& x, const std::vector<int>& y,
                AttackLoss loss_kind, const AttackConfig& config, std::uint64_t seed) {
    check_config(config);
    check_pixel_box(x);
    auto eval = [&](const Tensor& point) {
        return loss_kind == AttackLoss::CE ? ce_loss_and_grad(model, point, y)
                                           : dlr_loss_and_grad(model, point, y);
    };

    const std::size_t n = x.dim(0);
    const std::size_t stride = x.numel() / n;

    ApgdResult global;
    {
        const SampleLossGrad at_clean = eval(x);
        global.x_best = x;
        global.best_loss = at_clean.loss;
    }
    if (config.epsilon == 0.0) return global;

    const std::vector<int> checkpoints = checkpoint_iters(config.n_iters);
    const double alpha = config.alpha_momentum;

    for (int restart = 0; restart < config.n_restarts; ++restart) {
        Tensor x0 = x;
        if (restart > 0) {
            for (std::size_t i = 0; i < n; ++i) {
                SplitMix64 rng = substream(seed ^ hash_label("apgd.restart"),
                                           to_string(loss_kind),
                                           (static_cast<std::uint64_t>(restart) << 32) | i);
                double* row = x0.data.data() + i * stride;
                for (std::size_t j = 0; j < stride; ++j) {
                    row[j] = std::clamp(row[j] + rng.uniform(-config.epsilon, config.epsilon),
                                        0.0, 1.0);
                }
            }
        }

        SampleLossGrad cur = eval(x0);
        Eigen::VectorXd f_best = cur.loss;
        Tensor x_best = x0;
        Tensor g_best = cur.input_grad;
        Eigen::VectorXd f_prev_step = cur.loss;

        std::vector<double> eta(n, 2.0 * config.epsilon);
        std::vector<double> eta_prev_segment(n, 2.0 * config.epsilon);
        Eigen::VectorXd f_best_prev_ck = f_best;
        std::vector<int> improved(n, 0);

        Tensor x_prev = x0;
        Tensor x_cur(x.shape);
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = x0.data.data() + i * stride;
            const double* gi = cur.input_grad.data.data() + i * stride;
            double* oi = x_cur.data.data() + i * stride;
            for (std::size_t j = 0; j < stride; ++j) oi[j] = xi[j] + eta[i] * sign(gi[j]);
        }
        x_cur = project_linf(x_cur, x, config.epsilon);

        std::size_t ck_pos = 0;
        int last_ck = 0;
        for (int k = 1; k < config.n_iters; ++k) {
            cur = eval(x_cur);
            for (std::size_t i = 0; i < n; ++i) {
                if (cur.loss(i) > f_prev_step(i)) ++improved[i];
                f_prev_step(i) = cur.loss(i);
                if (cur.loss(i) > f_best(i)) {
                    f_best(i) = cur.loss(i);
                    std::copy_n(x_cur.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                                stride,
                                x_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
                    std::copy_n(
                        cur.input_grad.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                        stride,
                        g_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
                }
            }

            if (ck_pos < checkpoints.size() && k == checkpoints[ck_pos]) {
                const int segment = k - last_ck;
                for (std::size_t i = 0; i < n; ++i) {
                    const bool too_few_improvements =
                        improved[i] < config.rho * static_cast<double>(segment);
                    const bool stalled = eta[i] == eta_prev_segment[i] &&
                                         f_best(i) == f_best_prev_ck(i);
                    eta_prev_segment[i] = eta[i];
                    if (too_few_improvements || stalled) {
                        eta[i] *= 0.5;
                        std::copy_n(
                            x_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                            x_cur.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
                        std::copy_n(
                            x_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                            x_prev.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
                        std::copy_n(
                            g_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                            cur.input_grad.data.begin() +
                                static_cast<std::ptrdiff_t>(i * stride));
                        f_prev_step(i) = f_best(i);
                    }
                    f_best_prev_ck(i) = f_best(i);
                    improved[i] = 0;
                }
                last_ck = k;
                ++ck_pos;
            }

            if (k + 1 < config.n_iters) {
                Tensor x_next(x.shape);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* xc = x_cur.data.data() + i * stride;
                    const double* xp = x_prev.data.data() + i * stride;
                    const double* gi = cur.input_grad.data.data() + i * stride;
                    const double* xcl = x.data.data() + i * stride;
                    double* xn = x_next.data.data() + i * stride;
                    for (std::size_t j = 0; j < stride; ++j) {
                        const double lo = std::max(xcl[j] - config.epsilon, 0.0);
                        const double hi = std::min(xcl[j] + config.epsilon, 1.0);
                        const double z = std::clamp(xc[j] + eta[i] * sign(gi[j]), lo, hi);
                        const double step = xc[j] + alpha * (z - xc[j]) +
                                            (1.0 - alpha) * (xc[j] - xp[j]);
                        xn[j] = std::clamp(step, lo, hi);
                    }
                }
                x_prev = std::move(x_cur);
                x_cur = std::move(x_next);
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (f_best(i) > global.best_loss(i)) {
                global.best_loss(i) = f_best(i);
                std::copy_n(x_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                            global.x_best.data.begin() +
                                static_cast<std::ptrdiff_t>(i * stride));
            }
        }
    }
    return global;
}

AdversarialBatch worst_case_attack(const ModelParams& model, const Tensor& x,
                                   const std::vector<int>& y, const AttackConfig& config,
                                   std::uint64_t seed) {
    if (config.losses.empty()) raise(ErrorKind::InvalidValue, "config.losses is empty");

    struct Candidate {
        AttackLoss loss_kind;
        ApgdResult result;
        std::vector<int> predictions;
    };
    std::vector<Candidate> candidates;
    for (const AttackLoss loss_kind : config.losses) {
        Candidate c;
        c.loss_kind = loss_kind;
        c.result = apgd(model, x, y, loss_kind, config, seed);
        c.predictions = predict(model, c.result.x_best);
        candidates.push_back(std::move(c));
    }

    const std::size_t n = x.dim(0);
    const std::size_t stride = x.numel() / n;
    AdversarialBatch batch;
    batch.x_adv = Tensor(x.shape);
    batch.success_mask.resize(n);
    batch.source_loss.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t chosen = 0;
        bool flipped = false;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (candidates[c].predictions[i] != y[i]) {
                chosen = c;
                flipped = true;
                break;
            }
        }
        if (!flipped) {
            for (std::size_t c = 1; c < candidates.size(); ++c) {
                if (candidates[c].result.best_loss(i) >
                    candidates[chosen].result.best_loss(i)) {
                    chosen = c;
                }
            }
        }
        const Candidate& pick = candidates[chosen];
        std::copy_n(pick.result.x_best.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                    stride,
                    batch.x_adv.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        batch.success_mask[i] = pick.predictions[i] != y[i] ? 1 : 0;
        batch.source_loss[i] = pick.loss_kind;
    }
    return batch;
}

} // namespace fdnz
