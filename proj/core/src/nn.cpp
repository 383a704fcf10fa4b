#include "fdnz/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

namespace {

constexpr int kInputSide = 28; // conv-first models are fixed to 28x28 inputs

using SampleShape = std::vector<std::size_t>;

std::string shape_text(const SampleShape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// per-layer output shapes for one sample; index 0 is the input shape
std::vector<SampleShape> infer_shapes(const std::vector<LayerSpec>& layers) {
    if (layers.empty()) raise(ErrorKind::ShapeMismatch, "model has no layers");
    std::vector<SampleShape> shapes;
    switch (layers.front().kind) {
        case LayerKind::Conv2d:
            shapes.push_back({static_cast<std::size_t>(layers.front().in_ch), kInputSide,
                              kInputSide});
            break;
        case LayerKind::Dense:
            shapes.push_back({static_cast<std::size_t>(layers.front().in_dim)});
            break;
        default:
            raise(ErrorKind::ShapeMismatch, "first layer must be conv2d or dense, got " +
                                                std::string(to_string(layers.front().kind)));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& layer = layers[i];
        const SampleShape& in = shapes.back();
        auto incompatible = [&](const std::string& why) {
            raise(ErrorKind::ShapeMismatch, "layer " + std::to_string(i) + " (" +
                                                to_string(layer.kind) + "): " + why +
                                                "; incoming shape " + shape_text(in));
        };
        SampleShape out;
        switch (layer.kind) {
            case LayerKind::Conv2d:
                if (in.size() != 3) incompatible("needs a [C, H, W] input");
                if (in[0] != static_cast<std::size_t>(layer.in_ch)) {
                    incompatible("expects " + std::to_string(layer.in_ch) + " channels");
                }
                if (layer.in_ch < 1 || layer.out_ch < 1) incompatible("channel counts must be >= 1");
                out = {static_cast<std::size_t>(layer.out_ch), in[1], in[2]};
                break;
            case LayerKind::MaxPool2:
                if (in.size() != 3) incompatible("needs a [C, H, W] input");
                if (in[1] < 2 || in[2] < 2) incompatible("spatial size too small to pool");
                out = {in[0], in[1] / 2, in[2] / 2};
                break;
            case LayerKind::Relu:
                out = in;
                break;
            case LayerKind::Flatten:
                if (in.size() != 3) incompatible("needs a [C, H, W] input");
                out = {in[0] * in[1] * in[2]};
                break;
            case LayerKind::Dense:
                if (in.size() != 1) incompatible("needs a flat input; insert flatten");
                if (in[0] != static_cast<std::size_t>(layer.in_dim)) {
                    incompatible("expects input dim " + std::to_string(layer.in_dim));
                }
                if (layer.out_dim < 1) incompatible("output dim must be >= 1");
                out = {static_cast<std::size_t>(layer.out_dim)};
                break;
        }
        shapes.push_back(std::move(out));
    }
    return shapes;
}

Tensor batch_tensor(const SampleShape& sample, std::size_t n) {
    std::vector<std::size_t> dims;
    dims.push_back(n);
    dims.insert(dims.end(), sample.begin(), sample.end());
    return Tensor(std::move(dims));
}

// im2col for one [C, H, W] sample: row (c*3+ky)*3+kx, column y*W+x
void fill_col(const double* x, int C, int H, int W, RowMatrix& col) {
    for (int c = 0; c < C; ++c) {
        const double* plane = x + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* row = col.row((c * 3 + ky) * 3 + kx).data();
                for (int y = 0; y < H; ++y) {
                    const int iy = y + ky - 1;
                    double* dst = row + static_cast<std::ptrdiff_t>(y) * W;
                    if (iy < 0 || iy >= H) {
                        std::fill_n(dst, W, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::ptrdiff_t>(iy) * W;
                    for (int x_i = 0; x_i < W; ++x_i) {
                        const int ix = x_i + kx - 1;
                        dst[x_i] = (ix < 0 || ix >= W) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y, int C, int H,
                  int W, int O) {
    const std::size_t n = x.dim(0);
    const int K = C * 9;
    RowMatrix col(K, H * W);
    ConstRowMatrixMap wmat(w.data.data(), O, K);
    Eigen::Map<const Eigen::VectorXd> bias(b.data.data(), O);
    for (std::size_t s = 0; s < n; ++s) {
        fill_col(x.data.data() + s * std::size_t(C) * H * W, C, H, W, col);
        RowMatrixMap out(y.data.data() + s * std::size_t(O) * H * W, O, H * W);
        out.noalias() = wmat * col;
        out.colwise() += bias;
    }
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                   Tensor& db, int C, int H, int W, int O) {
    const std::size_t n = x.dim(0);
    const int K = C * 9;
    RowMatrix col(K, H * W);
    RowMatrix dcol(K, H * W);
    ConstRowMatrixMap wmat(w.data.data(), O, K);
    RowMatrixMap dwmat(dw.data.data(), O, K);
    for (std::size_t s = 0; s < n; ++s) {
        fill_col(x.data.data() + s * std::size_t(C) * H * W, C, H, W, col);
        ConstRowMatrixMap dout(dy.data.data() + s * std::size_t(O) * H * W, O, H * W);
        dwmat.noalias() += dout * col.transpose();
        // fixed-order bias reduction; Map reductions would round differently
        // depending on allocation alignment
        for (int o = 0; o < O; ++o) {
            double acc = 0.0;
            const double* row = dy.data.data() + (s * std::size_t(O) + o) * H * W;
            for (int p = 0; p < H * W; ++p) acc += row[p];
            db.data[o] += acc;
        }
        dcol.noalias() = wmat.transpose() * dout;
        double* dxs = dx.data.data() + s * std::size_t(C) * H * W;
        for (int c = 0; c < C; ++c) {
            double* plane = dxs + static_cast<std::ptrdiff_t>(c) * H * W;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double* row = dcol.row((c * 3 + ky) * 3 + kx).data();
                    for (int y_i = 0; y_i < H; ++y_i) {
                        const int iy = y_i + ky - 1;
                        if (iy < 0 || iy >= H) continue;
                        double* dst = plane + static_cast<std::ptrdiff_t>(iy) * W;
                        const double* src = row + static_cast<std::ptrdiff_t>(y_i) * W;
                        for (int x_i = 0; x_i < W; ++x_i) {
                            const int ix = x_i + kx - 1;
                            if (ix >= 0 && ix < W) dst[ix] += src[x_i];
                        }
                    }
                }
            }
        }
    }
}

void maxpool_forward(const Tensor& x, Tensor& y, std::vector<std::uint32_t>& argmax, int C,
                     int H, int W) {
    const std::size_t n = x.dim(0);
    const int Ho = H / 2;
    const int Wo = W / 2;
    argmax.resize(n * std::size_t(C) * Ho * Wo);
    std::size_t out_i = 0;
    for (std::size_t s = 0; s < n; ++s) {
        const double* xs = x.data.data() + s * std::size_t(C) * H * W;
        for (int c = 0; c < C; ++c) {
            for (int y_i = 0; y_i < Ho; ++y_i) {
                for (int x_i = 0; x_i < Wo; ++x_i) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::uint32_t best_idx = 0;
                    for (int ky = 0; ky < 2; ++ky) {
                        for (int kx = 0; kx < 2; ++kx) {
                            const std::uint32_t idx =
                                static_cast<std::uint32_t>(c * H * W + (2 * y_i + ky) * W +
                                                           (2 * x_i + kx));
                            const double v = xs[idx];
                            if (v > best) { // strict: first maximum wins on ties
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    y.data[out_i] = best;
                    argmax[out_i] = best_idx;
                    ++out_i;
                }
            }
        }
    }
}

void maxpool_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax, Tensor& dx,
                      int C, int H, int W) {
    const std::size_t n = dx.dim(0);
    const std::size_t per_sample_out = dy.numel() / n;
    for (std::size_t s = 0; s < n; ++s) {
        double* dxs = dx.data.data() + s * std::size_t(C) * H * W;
        const double* dys = dy.data.data() + s * per_sample_out;
        const std::uint32_t* idx = argmax.data() + s * per_sample_out;
        for (std::size_t i = 0; i < per_sample_out; ++i) dxs[idx[i]] += dys[i];
    }
}

} // namespace

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2: return "maxpool2";
        case LayerKind::Relu: return "relu";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

Tensor& ModelParams::tensor(std::string_view name) {
    for (auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    raise(ErrorKind::ShapeMismatch, "model has no tensor named " + std::string(name));
}

const Tensor& ModelParams::tensor(std::string_view name) const {
    return const_cast<ModelParams*>(this)->tensor(name);
}

std::vector<std::size_t> ModelParams::input_shape() const { return infer_shapes(layers)[0]; }

int ModelParams::output_dim() const {
    const SampleShape out = infer_shapes(layers).back();
    return out.size() == 1 ? static_cast<int>(out[0]) : -1;
}

int ModelParams::feature_layer_index() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Dense && layers[i].feature_layer) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

int ModelParams::feature_dim() const {
    const int i = feature_layer_index();
    return i < 0 ? -1 : layers[i].out_dim;
}

std::vector<std::string> layer_param_names(const std::vector<LayerSpec>& layers) {
    std::vector<std::string> names(layers.size());
    int conv_count = 0;
    int dense_count = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Conv2d) {
            names[i] = "conv" + std::to_string(++conv_count);
        } else if (layers[i].kind == LayerKind::Dense) {
            names[i] = "dense" + std::to_string(++dense_count);
        }
    }
    return names;
}

ModelParams init_model(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
    infer_shapes(layers); // validates composition
    int tagged = 0;
    for (const LayerSpec& layer : layers) {
        if (layer.feature_layer) {
            if (layer.kind != LayerKind::Dense) {
                raise(ErrorKind::InvalidValue, "only dense layers may be tagged feature_layer");
            }
            ++tagged;
        }
    }
    if (tagged > 1) raise(ErrorKind::InvalidValue, "more than one feature_layer tag");

    ModelParams model;
    model.layers = layers;
    model.rng_seed = seed;
    const std::vector<std::string> names = layer_param_names(layers);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& layer = layers[i];
        if (layer.kind != LayerKind::Conv2d && layer.kind != LayerKind::Dense) continue;
        SplitMix64 rng = substream(seed, "init", i);
        Tensor w;
        Tensor b;
        double fan_in;
        double fan_out;
        if (layer.kind == LayerKind::Conv2d) {
            w = Tensor({static_cast<std::size_t>(layer.out_ch),
                        static_cast<std::size_t>(layer.in_ch), 3, 3});
            b = Tensor({static_cast<std::size_t>(layer.out_ch)});
            fan_in = layer.in_ch * 9.0;
            fan_out = layer.out_ch * 9.0;
        } else {
            w = Tensor({static_cast<std::size_t>(layer.out_dim),
                        static_cast<std::size_t>(layer.in_dim)});
            b = Tensor({static_cast<std::size_t>(layer.out_dim)});
            fan_in = layer.in_dim;
            fan_out = layer.out_dim;
        }
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : w.data) v = rng.uniform(-a, a);
        model.tensors.emplace_back(names[i] + ".w", std::move(w));
        model.tensors.emplace_back(names[i] + ".b", std::move(b));
    }
    return model;
}

ForwardResult forward(const ModelParams& model, const Tensor& batch) {
    const std::vector<SampleShape> shapes = infer_shapes(model.layers);
    const SampleShape& in_shape = shapes[0];
    if (batch.ndim() == 0 || batch.dim(0) == 0) {
        raise(ErrorKind::ShapeMismatch, "empty batch");
    }
    const std::size_t n = batch.dim(0);

    ForwardCache cache;
    // conv-first single-channel models accept [n, H, W]
    if (in_shape.size() == 3 && in_shape[0] == 1 && batch.ndim() == 3 &&
        batch.dim(1) == in_shape[1] && batch.dim(2) == in_shape[2]) {
        Tensor expanded = batch;
        expanded.shape = {n, 1, in_shape[1], in_shape[2]};
        cache.acts.push_back(std::move(expanded));
        cache.squeezed_channel = true;
    } else {
        SampleShape got(batch.shape.begin() + 1, batch.shape.end());
        if (got != in_shape) {
            raise(ErrorKind::ShapeMismatch, "batch sample shape " + shape_text(got) +
                                                " does not match model input " +
                                                shape_text(in_shape));
        }
        cache.acts.push_back(batch);
    }
    cache.pool_argmax.resize(model.layers.size());

    const std::vector<std::string> names = layer_param_names(model.layers);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& layer = model.layers[i];
        const Tensor& x = cache.acts.back();
        const SampleShape& xs = shapes[i];
        Tensor y = batch_tensor(shapes[i + 1], n);
        switch (layer.kind) {
            case LayerKind::Conv2d: {
                conv_forward(x, model.tensor(names[i] + ".w"), model.tensor(names[i] + ".b"), y,
                             static_cast<int>(xs[0]), static_cast<int>(xs[1]),
                             static_cast<int>(xs[2]), layer.out_ch);
                break;
            }
            case LayerKind::MaxPool2:
                maxpool_forward(x, y, cache.pool_argmax[i], static_cast<int>(xs[0]),
                                static_cast<int>(xs[1]), static_cast<int>(xs[2]));
                break;
            case LayerKind::Relu:
                for (std::size_t j = 0; j < x.numel(); ++j) y.data[j] = std::max(0.0, x.data[j]);
                break;
            case LayerKind::Flatten:
                y.data = x.data; // row-major layout is unchanged
                break;
            case LayerKind::Dense: {
                ConstRowMatrixMap xm(x.data.data(), static_cast<Eigen::Index>(n), layer.in_dim);
                ConstRowMatrixMap wm(model.tensor(names[i] + ".w").data.data(), layer.out_dim,
                                     layer.in_dim);
                Eigen::Map<const Eigen::VectorXd> bm(model.tensor(names[i] + ".b").data.data(),
                                                     layer.out_dim);
                RowMatrixMap ym(y.data.data(), static_cast<Eigen::Index>(n), layer.out_dim);
                ym.noalias() = xm * wm.transpose();
                ym.rowwise() += bm.transpose();
                break;
            }
        }
        cache.acts.push_back(std::move(y));
    }

    ForwardResult result;
    result.logits = cache.acts.back();
    const int fi = model.feature_layer_index();
    if (fi >= 0) {
        // post-ReLU view of the tagged layer's activation
        result.features = cache.acts[fi + 1];
        for (double& v : result.features.data) v = std::max(0.0, v);
    }
    result.cache = std::move(cache);
    return result;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.dim(1);
    Tensor probs(logits.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data.data() + i * k;
        double* p = probs.data.data() + i * k;
        const double m = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            p[j] = std::exp(z[j] - m);
            sum += p[j];
        }
        for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
    }
    return probs;
}

std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels) {
    if (logits.ndim() != 2 || logits.dim(0) != labels.size()) {
        raise(ErrorKind::ShapeMismatch, "logits " + logits.shape_string() + " vs " +
                                            std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.dim(1);
    for (const int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            raise(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " with K=" +
                                                  std::to_string(k));
        }
    }
    Tensor dlogits = softmax(logits);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data.data() + i * k;
        const double m = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - m);
        loss += -(z[labels[i]] - m - std::log(sum));
        double* d = dlogits.data.data() + i * k;
        d[labels[i]] -= 1.0;
        for (std::size_t j = 0; j < k; ++j) d[j] /= static_cast<double>(n);
    }
    return {loss / static_cast<double>(n), std::move(dlogits)};
}

std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        raise(ErrorKind::ShapeMismatch, "mse: " + pred.shape_string() + " vs " +
                                            target.shape_string());
    }
    const double n = static_cast<double>(pred.dim(0));
    Tensor dpred(pred.shape);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double r = pred.data[i] - target.data[i];
        loss += r * r;
        dpred.data[i] = 2.0 * r / n;
    }
    return {loss / n, std::move(dpred)};
}

Gradients backward(const ModelParams& model, const ForwardCache& cache, const Tensor& dlogits) {
    if (cache.acts.size() != model.layers.size() + 1 ||
        !dlogits.same_shape(cache.acts.back())) {
        raise(ErrorKind::StaleCache, "cache does not match model/dlogits shapes");
    }
    const std::vector<SampleShape> shapes = infer_shapes(model.layers);
    const std::size_t n = cache.acts[0].dim(0);
    const std::vector<std::string> names = layer_param_names(model.layers);

    Gradients grads;
    grads.tensors.reserve(model.tensors.size());
    for (const auto& [name, t] : model.tensors) grads.tensors.emplace_back(name, Tensor(t.shape));
    auto grad_of = [&](const std::string& name) -> Tensor& {
        for (auto& [gname, g] : grads.tensors) {
            if (gname == name) return g;
        }
        raise(ErrorKind::ShapeMismatch, "no gradient slot for " + name);
    };

    Tensor delta = dlogits;
    for (std::size_t ri = model.layers.size(); ri-- > 0;) {
        const LayerSpec& layer = model.layers[ri];
        const Tensor& x = cache.acts[ri];
        const SampleShape& xs = shapes[ri];
        Tensor dx = batch_tensor(xs, n);
        switch (layer.kind) {
            case LayerKind::Conv2d:
                conv_backward(x, model.tensor(names[ri] + ".w"), delta, dx,
                              grad_of(names[ri] + ".w"), grad_of(names[ri] + ".b"),
                              static_cast<int>(xs[0]), static_cast<int>(xs[1]),
                              static_cast<int>(xs[2]), layer.out_ch);
                break;
            case LayerKind::MaxPool2:
                maxpool_backward(delta, cache.pool_argmax[ri], dx, static_cast<int>(xs[0]),
                                 static_cast<int>(xs[1]), static_cast<int>(xs[2]));
                break;
            case LayerKind::Relu:
                for (std::size_t j = 0; j < dx.numel(); ++j) {
                    dx.data[j] = x.data[j] > 0.0 ? delta.data[j] : 0.0;
                }
                break;
            case LayerKind::Flatten:
                dx.data = delta.data;
                break;
            case LayerKind::Dense: {
                ConstRowMatrixMap xm(x.data.data(), static_cast<Eigen::Index>(n), layer.in_dim);
                ConstRowMatrixMap dym(delta.data.data(), static_cast<Eigen::Index>(n),
                                      layer.out_dim);
                ConstRowMatrixMap wm(model.tensor(names[ri] + ".w").data.data(), layer.out_dim,
                                     layer.in_dim);
                RowMatrixMap dwm(grad_of(names[ri] + ".w").data.data(), layer.out_dim,
                                 layer.in_dim);
                Tensor& dbt = grad_of(names[ri] + ".b");
                dwm.noalias() = dym.transpose() * xm;
                // fixed-order bias reduction, see conv_backward
                for (int o = 0; o < layer.out_dim; ++o) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        acc += delta.data[i * layer.out_dim + o];
                    }
                    dbt.data[o] = acc;
                }
                RowMatrixMap dxm(dx.data.data(), static_cast<Eigen::Index>(n), layer.in_dim);
                dxm.noalias() = dym * wm;
                break;
            }
        }
        delta = std::move(dx);
    }

    if (cache.squeezed_channel) {
        delta.shape = {n, delta.dim(2), delta.dim(3)};
    }
    grads.input_grad = std::move(delta);
    return grads;
}

void optimizer_step(ModelParams& model, const Gradients& grads, OptimState& state) {
    if (grads.tensors.size() != model.tensors.size()) {
        raise(ErrorKind::ShapeMismatch, "gradient count " + std::to_string(grads.tensors.size()) +
                                            " vs " + std::to_string(model.tensors.size()) +
                                            " parameters");
    }
    if (state.first_moment.empty()) {
        for (const auto& [name, t] : model.tensors) {
            state.first_moment.emplace_back(name, Tensor(t.shape));
            state.second_moment.emplace_back(name, Tensor(t.shape));
        }
    }
    ++state.step;
    for (std::size_t p = 0; p < model.tensors.size(); ++p) {
        auto& [name, w] = model.tensors[p];
        const auto& [gname, g] = grads.tensors[p];
        if (gname != name || !g.same_shape(w)) {
            raise(ErrorKind::ShapeMismatch, "gradient " + gname + " does not match parameter " +
                                                name);
        }
        Tensor& m = state.first_moment[p].second;
        if (state.algorithm == OptimAlgo::SgdMomentum) {
            for (std::size_t i = 0; i < w.numel(); ++i) {
                m.data[i] = state.momentum * m.data[i] - state.learning_rate * g.data[i];
                w.data[i] += m.data[i];
            }
        } else {
            Tensor& v = state.second_moment[p].second;
            const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
            const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
            for (std::size_t i = 0; i < w.numel(); ++i) {
                m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
                v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
                const double mhat = m.data[i] / bc1;
                const double vhat = v.data[i] / bc2;
                w.data[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
            }
        }
    }
}

Tensor gather_rows(const Tensor& inputs, const std::vector<std::size_t>& rows) {
    const std::size_t n = inputs.dim(0);
    const std::size_t stride = inputs.numel() / n;
    std::vector<std::size_t> shape = inputs.shape;
    shape[0] = rows.size();
    Tensor out(std::move(shape));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * stride), stride,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * stride));
    }
    return out;
}

TrainResult train(const ModelParams& init, const Tensor& inputs, const std::vector<int>& labels,
                  const TrainConfig& config, const Tensor* val_inputs,
                  const std::vector<int>* val_labels) {
    if (labels.empty() || inputs.ndim() == 0 || inputs.dim(0) == 0) {
        raise(ErrorKind::EmptyDataset, "training set is empty");
    }
    if (inputs.dim(0) != labels.size()) {
        raise(ErrorKind::ShapeMismatch, "inputs " + inputs.shape_string() + " vs " +
                                            std::to_string(labels.size()) + " labels");
    }
    if (config.batch_size < 1) raise(ErrorKind::InvalidValue, "batch_size must be >= 1");

    TrainResult result;
    ModelParams model = init;
    OptimState state = config.algorithm == OptimAlgo::Adam
                           ? OptimState::adam(config.learning_rate)
                           : OptimState::sgd_momentum(config.learning_rate, config.momentum);

    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 rng = substream(config.seed, "train.epoch", static_cast<std::uint64_t>(epoch));
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const std::vector<std::size_t> rows(order.begin() + start, order.begin() + stop);
            std::vector<int> yb(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) yb[i] = labels[rows[i]];
            const Tensor xb = gather_rows(inputs, rows);
            ForwardResult fwd = forward(model, xb);
            auto [loss, dlogits] = softmax_cross_entropy(fwd.logits, yb);
            result.loss_trace.push_back(loss);
            const Gradients grads = backward(model, fwd.cache, dlogits);
            optimizer_step(model, grads, state);
        }
        if (val_inputs && val_labels && !val_labels->empty()) {
            const std::vector<int> pred = predict(model, *val_inputs);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == (*val_labels)[i];
            const double acc = static_cast<double>(hits) / static_cast<double>(pred.size());
            if (acc > result.best_val_accuracy) {
                result.best_val_accuracy = acc;
                result.best_epoch = epoch;
                result.model = model;
            }
        }
    }

    result.final_model = model;
    if (result.best_epoch < 0) result.model = std::move(model);
    return result;
}

Eigen::MatrixXd predict_probs(const ModelParams& model, const Tensor& inputs) {
    const std::size_t n = inputs.dim(0);
    const int k = model.output_dim();
    Eigen::MatrixXd probs(n, k);
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t stop = std::min(n, start + kChunk);
        std::vector<std::size_t> rows(stop - start);
        std::iota(rows.begin(), rows.end(), start);
        const Tensor logits = forward(model, gather_rows(inputs, rows)).logits;
        const Tensor p = softmax(logits);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int j = 0; j < k; ++j) {
                probs(static_cast<Eigen::Index>(start + i), j) = p.data[i * k + j];
            }
        }
    }
    return probs;
}

std::vector<int> predict(const ModelParams& model, const Tensor& inputs) {
    const Eigen::MatrixXd probs = predict_probs(model, inputs);
    std::vector<int> out(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        probs.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

} // namespace fdnz
