#include "fdnz/diffusion.hpp"

#include <cmath>
#include <string>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

// [noisy | embed(t)] rows as a forward-ready batch; t may vary per row
Tensor denoiser_input(const Eigen::MatrixXd& noisy, const std::vector<int>& steps, int T,
                      int embed_dim) {
    const Eigen::Index n = noisy.rows();
    const Eigen::Index d = noisy.cols();
    Tensor batch({static_cast<std::size_t>(n), static_cast<std::size_t>(d + embed_dim)});
    for (Eigen::Index i = 0; i < n; ++i) {
        double* row = batch.data.data() + i * (d + embed_dim);
        for (Eigen::Index j = 0; j < d; ++j) row[j] = noisy(i, j);
        const Eigen::RowVectorXd emb = timestep_embedding(steps[i], T, embed_dim);
        for (int j = 0; j < embed_dim; ++j) row[d + j] = emb(j);
    }
    return batch;
}

Eigen::MatrixXd forward_matrix(const ModelParams& model, const Tensor& batch) {
    const std::size_t n = batch.dim(0);
    const int out_dim = model.output_dim();
    Eigen::MatrixXd out(n, out_dim);
    constexpr std::size_t kChunk = 512;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t stop = std::min(n, start + kChunk);
        std::vector<std::size_t> rows(stop - start);
        std::iota(rows.begin(), rows.end(), start);
        const Tensor logits = forward(model, gather_rows(batch, rows)).logits;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int j = 0; j < out_dim; ++j) {
                out(static_cast<Eigen::Index>(start + i), j) = logits.data[i * out_dim + j];
            }
        }
    }
    return out;
}

} // namespace

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T) {
        raise(ErrorKind::StepOutOfRange, "t=" + std::to_string(t) + " with T=" +
                                             std::to_string(T));
    }
    return t == 0 ? 1.0 : alpha_bars(t - 1);
}

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) raise(ErrorKind::BadRange, "T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        raise(ErrorKind::BadRange, "need 0 < beta_start <= beta_end < 1, got [" +
                                       std::to_string(beta_start) + ", " +
                                       std::to_string(beta_end) + "]");
    }
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alpha_bars.resize(T);
    double abar = 1.0;
    for (int i = 0; i < T; ++i) {
        s.betas(i) = T == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * i / (T - 1.0);
        abar *= 1.0 - s.betas(i);
        s.alpha_bars(i) = abar;
    }
    return s;
}

Eigen::MatrixXd forward_diffuse(const Eigen::MatrixXd& x0, int t, const Eigen::MatrixXd& eps,
                                const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.T) {
        raise(ErrorKind::StepOutOfRange, "t=" + std::to_string(t) + " with T=" +
                                             std::to_string(schedule.T));
    }
    if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) {
        raise(ErrorKind::ShapeMismatch, "eps " + std::to_string(eps.rows()) + "x" +
                                            std::to_string(eps.cols()) + " vs x0 " +
                                            std::to_string(x0.rows()) + "x" +
                                            std::to_string(x0.cols()));
    }
    const double abar = schedule.alpha_bar(t);
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

Eigen::RowVectorXd timestep_embedding(int t, int T, int dim) {
    if (dim < 2 || dim % 2 != 0) {
        raise(ErrorKind::InvalidValue, "embedding dim must be even and >= 2");
    }
    const int half = dim / 2;
    const double tau = static_cast<double>(t) / static_cast<double>(T);
    Eigen::RowVectorXd emb(dim);
    for (int i = 0; i < half; ++i) {
        const double freq =
            half == 1 ? 1.0 : std::exp(std::log(1000.0) * i / static_cast<double>(half - 1));
        emb(2 * i) = std::sin(freq * tau);
        emb(2 * i + 1) = std::cos(freq * tau);
    }
    return emb;
}

DenoiserModel make_denoiser(int feature_dim, const DenoiserConfig& config) {
    const std::vector<LayerSpec> layers = {
        LayerSpec::dense(feature_dim + config.t_embed_dim, config.hidden),
        LayerSpec::relu(),
        LayerSpec::dense(config.hidden, config.hidden),
        LayerSpec::relu(),
        LayerSpec::dense(config.hidden, feature_dim),
    };
    DenoiserModel model;
    model.net = init_model(layers, config.seed ^ hash_label("denoiser.init"));
    model.feature_dim = feature_dim;
    model.t_embed_dim = config.t_embed_dim;
    return model;
}

DenoiserTrainResult train_denoiser(const Eigen::MatrixXd& train_features,
                                   const NoiseSchedule& schedule, const DenoiserConfig& config,
                                   const Eigen::MatrixXd* val_features) {
    if (train_features.rows() == 0) raise(ErrorKind::EmptyDataset, "no training features");
    if (!train_features.allFinite()) {
        raise(ErrorKind::InvalidValue, "training features contain non-finite values");
    }
    if (config.batch_size < 1) raise(ErrorKind::InvalidValue, "batch_size must be >= 1");
    const Eigen::Index n = train_features.rows();
    const Eigen::Index d = train_features.cols();

    DenoiserTrainResult result;
    result.model = make_denoiser(static_cast<int>(d), config);
    OptimState state = OptimState::adam(config.learning_rate);

    // fixed validation corruption, drawn once
    Tensor val_input;
    Tensor val_target;
    if (val_features && val_features->rows() > 0) {
        SplitMix64 rng = substream(config.seed, "denoiser.val");
        std::vector<int> steps(val_features->rows());
        for (auto& t : steps) t = 1 + static_cast<int>(rng.next_below(schedule.T));
        const Eigen::MatrixXd eps = normal_matrix(val_features->rows(), d, rng);
        Eigen::MatrixXd noisy(val_features->rows(), d);
        for (Eigen::Index i = 0; i < val_features->rows(); ++i) {
            const double abar = schedule.alpha_bar(steps[i]);
            noisy.row(i) = std::sqrt(abar) * val_features->row(i) +
                           std::sqrt(1.0 - abar) * eps.row(i);
        }
        val_input = denoiser_input(noisy, steps, schedule.T, config.t_embed_dim);
        val_target = tensor_from_matrix(*val_features);
    }

    ModelParams net = result.model.net;
    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 shuffle_rng =
            substream(config.seed, "denoiser.epoch", static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        SplitMix64 noise_rng =
            substream(config.seed, "denoiser.noise", static_cast<std::uint64_t>(epoch));

        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index stop = std::min<Eigen::Index>(n, start + config.batch_size);
            const Eigen::Index bs = stop - start;
            Eigen::MatrixXd x0(bs, d);
            std::vector<int> steps(bs);
            for (Eigen::Index i = 0; i < bs; ++i) {
                x0.row(i) = train_features.row(static_cast<Eigen::Index>(order[start + i]));
                steps[i] = 1 + static_cast<int>(noise_rng.next_below(schedule.T));
            }
            Eigen::MatrixXd noisy(bs, d);
            for (Eigen::Index i = 0; i < bs; ++i) {
                const double abar = schedule.alpha_bar(steps[i]);
                Eigen::RowVectorXd eps(d);
                for (Eigen::Index j = 0; j < d; ++j) eps(j) = noise_rng.normal();
                noisy.row(i) = std::sqrt(abar) * x0.row(i) + std::sqrt(1.0 - abar) * eps;
            }
            const Tensor input = denoiser_input(noisy, steps, schedule.T, config.t_embed_dim);
            const Tensor target = tensor_from_matrix(x0);

            ForwardResult fwd = forward(net, input);
            auto [loss, dpred] = mse_loss(fwd.logits, target);
            result.loss_trace.push_back(loss);
            const Gradients grads = backward(net, fwd.cache, dpred);
            optimizer_step(net, grads, state);
        }

        if (val_input.numel() > 0) {
            const Eigen::MatrixXd pred = forward_matrix(net, val_input);
            double mse = 0.0;
            for (Eigen::Index i = 0; i < pred.rows(); ++i) {
                for (Eigen::Index j = 0; j < d; ++j) {
                    const double r = pred(i, j) - val_target.data[i * d + j];
                    mse += r * r;
                }
            }
            mse /= static_cast<double>(pred.rows());
            if (result.best_epoch < 0 || mse < result.best_val_loss) {
                result.best_val_loss = mse;
                result.best_epoch = epoch;
                result.model.net = net;
            }
        }
    }

    if (result.best_epoch < 0) result.model.net = std::move(net);
    return result;
}

Eigen::MatrixXd denoise(const DenoiserModel& model, const Eigen::MatrixXd& noisy, int t,
                        const NoiseSchedule& schedule) {
    if (noisy.cols() != model.feature_dim) {
        raise(ErrorKind::DimMismatch, "noisy features have " + std::to_string(noisy.cols()) +
                                          " columns, denoiser expects " +
                                          std::to_string(model.feature_dim));
    }
    if (t < 1 || t > schedule.T) {
        raise(ErrorKind::StepOutOfRange, "t=" + std::to_string(t) + " with T=" +
                                             std::to_string(schedule.T));
    }
    const std::vector<int> steps(noisy.rows(), t);
    return forward_matrix(model.net,
                          denoiser_input(noisy, steps, schedule.T, model.t_embed_dim));
}

Eigen::MatrixXd purify_classify(const Eigen::MatrixXd& features, const DenoiserModel& denoiser,
                                const ModelParams& classifier, const NoiseSchedule& schedule,
                                const PurifyOptions& options) {
    if (options.t_inf < 1 || options.t_inf > schedule.T) {
        raise(ErrorKind::StepOutOfRange, "t_inf=" + std::to_string(options.t_inf) + " with T=" +
                                             std::to_string(schedule.T));
    }
    if (options.m_passes < 1) raise(ErrorKind::InvalidValue, "m_passes must be >= 1");
    if (features.cols() != denoiser.feature_dim) {
        raise(ErrorKind::DimMismatch, "features have " + std::to_string(features.cols()) +
                                          " columns, denoiser expects " +
                                          std::to_string(denoiser.feature_dim));
    }

    const Eigen::Index n = features.rows();
    const int k = classifier.output_dim();
    Eigen::MatrixXd mean_probs = Eigen::MatrixXd::Zero(n, k);
    for (int pass = 0; pass < options.m_passes; ++pass) {
        Eigen::MatrixXd eps;
        if (options.zero_noise) {
            eps = Eigen::MatrixXd::Zero(n, features.cols());
        } else {
            SplitMix64 rng =
                substream(options.seed, "purify", static_cast<std::uint64_t>(pass));
            eps = normal_matrix(n, features.cols(), rng);
        }
        const Eigen::MatrixXd noisy = forward_diffuse(features, options.t_inf, eps, schedule);
        const Eigen::MatrixXd clean = denoise(denoiser, noisy, options.t_inf, schedule);
        mean_probs += predict_probs(classifier, tensor_from_matrix(clean));
    }
    mean_probs /= static_cast<double>(options.m_passes);
    return mean_probs;
}

} // namespace fdnz
