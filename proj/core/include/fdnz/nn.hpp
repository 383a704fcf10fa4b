#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fdnz/tensor.hpp"

namespace fdnz {

// Fixed layer vocabulary. Conv is always 3x3, stride 1, zero padding 1;
// maxpool is always 2x2, stride 2.
enum class LayerKind { Conv2d, MaxPool2, Relu, Flatten, Dense };

inline constexpr int kConvKernel = 3;

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int in_ch = 0;
    int out_ch = 0;
    int in_dim = 0;
    int out_dim = 0;
    bool feature_layer = false; // dense only; at most one per model

    static LayerSpec conv2d(int in_ch, int out_ch) {
        return {LayerKind::Conv2d, in_ch, out_ch, 0, 0, false};
    }
    static LayerSpec maxpool2() { return {LayerKind::MaxPool2, 0, 0, 0, 0, false}; }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0, 0, false}; }
    static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 0, 0, false}; }
    static LayerSpec dense(int in_dim, int out_dim, bool feature_layer = false) {
        return {LayerKind::Dense, 0, 0, in_dim, out_dim, feature_layer};
    }

    bool operator==(const LayerSpec&) const = default;
};

const char* to_string(LayerKind kind);

struct ModelParams {
    std::vector<LayerSpec> layers;
    std::vector<std::pair<std::string, Tensor>> tensors; // insertion order is the file order
    std::uint64_t rng_seed = 0;

    Tensor& tensor(std::string_view name);
    const Tensor& tensor(std::string_view name) const;

    // shape of one sample: [C, 28, 28] for conv-first models, [D] for dense-first
    std::vector<std::size_t> input_shape() const;
    int output_dim() const;
    int feature_layer_index() const; // -1 when untagged
    int feature_dim() const;

    bool operator==(const ModelParams&) const = default;
};

// parameter tensor names per layer ("conv1", "dense2", ...); empty string for
// parameterless layers
std::vector<std::string> layer_param_names(const std::vector<LayerSpec>& layers);

// Glorot-uniform weights, zero biases, deterministic in seed. Validates that
// consecutive layer shapes compose and names the first incompatible pair.
ModelParams init_model(const std::vector<LayerSpec>& layers, std::uint64_t seed);

struct ForwardCache {
    std::vector<Tensor> acts;                             // acts[0] input, acts[i+1] layer i out
    std::vector<std::vector<std::uint32_t>> pool_argmax;  // per layer; empty unless maxpool
    bool squeezed_channel = false;                        // batch came in as [n,H,W]
};

struct ForwardResult {
    Tensor logits;   // [n, K]
    Tensor features; // [n, F] post-ReLU activation of the tagged layer; empty if untagged
    ForwardCache cache;
};

// A conv-first model with in_ch == 1 also accepts [n, H, W] batches.
ForwardResult forward(const ModelParams& model, const Tensor& batch);

Tensor softmax(const Tensor& logits);

// mean of -log softmax(logits)[label], max-subtracted; dlogits = (softmax - onehot)/n
std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels);

// mean over samples of the squared L2 residual; dpred = 2 (pred - target) / n
std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

struct Gradients {
    std::vector<std::pair<std::string, Tensor>> tensors; // aligned with ModelParams::tensors
    Tensor input_grad;                                   // shape of the forwarded batch
};

Gradients backward(const ModelParams& model, const ForwardCache& cache, const Tensor& dlogits);

enum class OptimAlgo { SgdMomentum, Adam };

struct OptimState {
    OptimAlgo algorithm = OptimAlgo::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.9; // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<std::pair<std::string, Tensor>> first_moment;  // sgd velocity / adam m
    std::vector<std::pair<std::string, Tensor>> second_moment; // adam v

    static OptimState sgd_momentum(double learning_rate, double momentum = 0.9) {
        OptimState s;
        s.algorithm = OptimAlgo::SgdMomentum;
        s.learning_rate = learning_rate;
        s.momentum = momentum;
        return s;
    }
    static OptimState adam(double learning_rate = 1e-3) {
        OptimState s;
        s.learning_rate = learning_rate;
        return s;
    }
};

void optimizer_step(ModelParams& model, const Gradients& grads, OptimState& state);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 64;
    OptimAlgo algorithm = OptimAlgo::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ModelParams model;              // best-validation snapshot; final model when no validation
    ModelParams final_model;
    std::vector<double> loss_trace; // one cross-entropy value per mini-batch
    double best_val_accuracy = -1.0;
    int best_epoch = -1;
};

// Mini-batches are drawn by seeded shuffling each epoch. When a validation
// set is given, the snapshot with the highest validation accuracy is kept
// (earliest epoch on ties).
TrainResult train(const ModelParams& init, const Tensor& inputs, const std::vector<int>& labels,
                  const TrainConfig& config, const Tensor* val_inputs = nullptr,
                  const std::vector<int>* val_labels = nullptr);

// rows of `inputs` (first axis) gathered into a new batch
Tensor gather_rows(const Tensor& inputs, const std::vector<std::size_t>& rows);

// softmax probabilities, evaluated in fixed-size chunks
Eigen::MatrixXd predict_probs(const ModelParams& model, const Tensor& inputs);
std::vector<int> predict(const ModelParams& model, const Tensor& inputs);

} // namespace fdnz
