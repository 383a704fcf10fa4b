#pragma once

// Shared fixtures and independent oracles. Everything here recomputes
// expected values with plain scalar loops so the tests stay decoupled from
// the library's Eigen/im2col execution paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "fdnz/nn.hpp"
#include "fdnz/rng.hpp"
#include "fdnz/tensor.hpp"

namespace fdnz::test {

class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("fdnz_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string str() const { return path_.string(); }

  private:
    std::filesystem::path path_;
};

inline void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void put_be32(std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
        out.push_back(static_cast<char>((v >> shift) & 0xFF));
    }
}

// hand-assembled IDX pair, 28x28 images
inline std::string idx_image_bytes(const std::vector<std::vector<std::uint8_t>>& images,
                                   std::uint32_t magic = 0x00000803u, int side = 28) {
    std::string out;
    put_be32(out, magic);
    put_be32(out, static_cast<std::uint32_t>(images.size()));
    put_be32(out, static_cast<std::uint32_t>(side));
    put_be32(out, static_cast<std::uint32_t>(side));
    for (const auto& img : images) out.append(img.begin(), img.end());
    return out;
}

inline std::string idx_label_bytes(const std::vector<std::uint8_t>& labels,
                                   std::uint32_t magic = 0x00000801u) {
    std::string out;
    put_be32(out, magic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.append(labels.begin(), labels.end());
    return out;
}

// ---------------------------------------------------------------------------
// scalar-loop network oracle
// ---------------------------------------------------------------------------

// straight-line re-implementation of the forward pass; quadruple loops, no
// shared code with the library beyond the parameter layout
inline Tensor naive_forward(const ModelParams& model, const Tensor& batch) {
    const std::vector<std::string> names = layer_param_names(model.layers);
    const std::size_t n = batch.dim(0);

    // current activation as [n][C][H][W] or [n][D]
    std::vector<std::vector<double>> act(n);
    bool spatial = model.layers.front().kind == LayerKind::Conv2d;
    int C = 0;
    int H = 0;
    int W = 0;
    int D = 0;
    const std::size_t stride = batch.numel() / n;
    for (std::size_t s = 0; s < n; ++s) {
        act[s].assign(batch.data.begin() + static_cast<std::ptrdiff_t>(s * stride),
                      batch.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * stride));
    }
    if (spatial) {
        C = model.layers.front().in_ch;
        H = W = 28;
    } else {
        D = model.layers.front().in_dim;
    }

    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const LayerSpec& layer = model.layers[li];
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<double>& x = act[s];
            switch (layer.kind) {
                case LayerKind::Conv2d: {
                    const Tensor& w = model.tensor(names[li] + ".w");
                    const Tensor& b = model.tensor(names[li] + ".b");
                    std::vector<double> y(static_cast<std::size_t>(layer.out_ch) * H * W, 0.0);
                    for (int o = 0; o < layer.out_ch; ++o) {
                        for (int r = 0; r < H; ++r) {
                            for (int c = 0; c < W; ++c) {
                                double acc = b.data[o];
                                for (int ic = 0; ic < layer.in_ch; ++ic) {
                                    for (int ky = 0; ky < 3; ++ky) {
                                        for (int kx = 0; kx < 3; ++kx) {
                                            const int iy = r + ky - 1;
                                            const int ix = c + kx - 1;
                                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                            acc += w.data[((o * layer.in_ch + ic) * 3 + ky) * 3 +
                                                          kx] *
                                                   x[(ic * H + iy) * W + ix];
                                        }
                                    }
                                }
                                y[(o * H + r) * W + c] = acc;
                            }
                        }
                    }
                    x = std::move(y);
                    break;
                }
                case LayerKind::MaxPool2: {
                    const int Ho = H / 2;
                    const int Wo = W / 2;
                    std::vector<double> y(static_cast<std::size_t>(C) * Ho * Wo);
                    for (int c = 0; c < C; ++c) {
                        for (int r = 0; r < Ho; ++r) {
                            for (int cc = 0; cc < Wo; ++cc) {
                                double best = x[(c * H + 2 * r) * W + 2 * cc];
                                best = std::max(best, x[(c * H + 2 * r) * W + 2 * cc + 1]);
                                best = std::max(best, x[(c * H + 2 * r + 1) * W + 2 * cc]);
                                best = std::max(best, x[(c * H + 2 * r + 1) * W + 2 * cc + 1]);
                                y[(c * Ho + r) * Wo + cc] = best;
                            }
                        }
                    }
                    x = std::move(y);
                    break;
                }
                case LayerKind::Relu:
                    for (double& v : x) v = std::max(0.0, v);
                    break;
                case LayerKind::Flatten:
                    break; // row-major layout already flat
                case LayerKind::Dense: {
                    const Tensor& w = model.tensor(names[li] + ".w");
                    const Tensor& b = model.tensor(names[li] + ".b");
                    std::vector<double> y(layer.out_dim);
                    for (int o = 0; o < layer.out_dim; ++o) {
                        double acc = b.data[o];
                        for (int i = 0; i < layer.in_dim; ++i) {
                            acc += w.data[o * layer.in_dim + i] * x[i];
                        }
                        y[o] = acc;
                    }
                    x = std::move(y);
                    break;
                }
            }
        }
        // track sample shape
        switch (layer.kind) {
            case LayerKind::Conv2d: C = layer.out_ch; break;
            case LayerKind::MaxPool2: H /= 2; W /= 2; break;
            case LayerKind::Relu: break;
            case LayerKind::Flatten: D = C * H * W; spatial = false; break;
            case LayerKind::Dense: D = layer.out_dim; break;
        }
    }

    Tensor out({n, static_cast<std::size_t>(act[0].size())});
    for (std::size_t s = 0; s < n; ++s) {
        std::copy(act[s].begin(), act[s].end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(s * act[0].size()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

inline double ce_loss_of(const ModelParams& model, const Tensor& x, const std::vector<int>& y) {
    return softmax_cross_entropy(forward(model, x).logits, y).first;
}

inline double rel_err(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-4});
}

// max relative error between analytic and central-difference gradients over
// every parameter and every input coordinate
inline double max_grad_rel_err(ModelParams model, Tensor x, const std::vector<int>& y,
                               double h = 1e-5) {
    ForwardResult fwd = forward(model, x);
    auto [loss, dlogits] = softmax_cross_entropy(fwd.logits, y);
    (void)loss;
    const Gradients grads = backward(model, fwd.cache, dlogits);

    double worst = 0.0;
    for (std::size_t p = 0; p < model.tensors.size(); ++p) {
        Tensor& w = model.tensors[p].second;
        for (std::size_t i = 0; i < w.numel(); ++i) {
            const double keep = w.data[i];
            w.data[i] = keep + h;
            const double up = ce_loss_of(model, x, y);
            w.data[i] = keep - h;
            const double down = ce_loss_of(model, x, y);
            w.data[i] = keep;
            worst = std::max(worst,
                             rel_err(grads.tensors[p].second.data[i], (up - down) / (2 * h)));
        }
    }
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = ce_loss_of(model, x, y);
        x.data[i] = keep - h;
        const double down = ce_loss_of(model, x, y);
        x.data[i] = keep;
        worst = std::max(worst, rel_err(grads.input_grad.data[i], (up - down) / (2 * h)));
    }
    return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    SplitMix64 rng(seed);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline std::vector<int> random_labels(std::size_t n, int k, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.next_below(k));
    return y;
}

// ---------------------------------------------------------------------------
// metric oracles
// ---------------------------------------------------------------------------

inline double pairwise_auc(const std::vector<double>& score, const std::vector<bool>& positive) {
    double wins = 0.0;
    long p = 0;
    long q = 0;
    for (std::size_t i = 0; i < score.size(); ++i) {
        if (!positive[i]) continue;
        ++p;
        for (std::size_t j = 0; j < score.size(); ++j) {
            if (positive[j]) continue;
            if (score[i] > score[j]) wins += 1.0;
            else if (score[i] == score[j]) wins += 0.5;
        }
    }
    for (const bool b : positive) q += !b;
    return wins / (static_cast<double>(p) * static_cast<double>(q));
}

inline double scalar_mcc(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
    std::vector<std::vector<long>> cm(k, std::vector<long>(k, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) ++cm[y_true[i]][y_pred[i]];
    double c = 0;
    const double s = static_cast<double>(y_true.size());
    double sum_pt = 0;
    double sum_p2 = 0;
    double sum_t2 = 0;
    for (int a = 0; a < k; ++a) {
        c += cm[a][a];
        double col = 0;
        double row = 0;
        for (int b = 0; b < k; ++b) {
            col += cm[b][a];
            row += cm[a][b];
        }
        sum_pt += col * row;
        sum_p2 += col * col;
        sum_t2 += row * row;
    }
    const double f1 = s * s - sum_p2;
    const double f2 = s * s - sum_t2;
    if (f1 <= 0 || f2 <= 0) return 0.0;
    return (c * s - sum_pt) / std::sqrt(f1 * f2);
}

inline double scalar_log_loss(const std::vector<std::vector<double>>& probs,
                              const std::vector<int>& y) {
    double sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sum += -std::log(std::clamp(probs[i][y[i]], 1e-15, 1.0));
    }
    return sum / static_cast<double>(y.size());
}

inline double scalar_brier(const std::vector<std::vector<double>>& probs,
                           const std::vector<int>& y) {
    double sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t c = 0; c < probs[i].size(); ++c) {
            const double r = probs[i][c] - (static_cast<int>(c) == y[i] ? 1.0 : 0.0);
            sum += r * r;
        }
    }
    return sum / static_cast<double>(y.size());
}

// random probability rows via softmax of uniform logits; ties injected when
// quantize > 0 by rounding scores to that many buckets
inline Eigen::MatrixXd random_prob_rows(std::size_t n, int k, std::uint64_t seed,
                                        int quantize = 0) {
    SplitMix64 rng(seed);
    Eigen::MatrixXd probs(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (int c = 0; c < k; ++c) {
            double z = std::exp(rng.uniform(-2.0, 2.0));
            if (quantize > 0) z = std::floor(z * quantize) / quantize + 1e-3;
            probs(static_cast<Eigen::Index>(i), c) = z;
            sum += z;
        }
        probs.row(static_cast<Eigen::Index>(i)) /= sum;
    }
    return probs;
}

} // namespace fdnz::test
