#include "fdnz/pipeline.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fdnz/attack.hpp"
#include "fdnz/checkpoint.hpp"
#include "fdnz/diffusion.hpp"
#include "fdnz/error.hpp"
#include "fdnz/hybrid.hpp"
#include "fdnz/nnmf.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void bad_value(const std::string& path, const std::string& why) {
    raise(ErrorKind::InvalidValue, path + ": " + why);
}

void check_keys(const json& obj, const std::string& prefix,
                const std::set<std::string>& allowed) {
    if (!obj.is_object()) bad_value(prefix.empty() ? "config" : prefix, "must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            raise(ErrorKind::UnknownKey, prefix.empty() ? key : prefix + "." + key);
        }
    }
}

long get_int(const json& obj, const char* key, long fallback, long min_v, long max_v,
             const std::string& prefix) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj[key];
    const std::string path = prefix + key;
    if (!v.is_number_integer()) bad_value(path, "must be an integer");
    const long value = v.get<long>();
    if (value < min_v || value > max_v) {
        bad_value(path, "value " + std::to_string(value) + " outside [" + std::to_string(min_v) +
                            ", " + std::to_string(max_v) + "]");
    }
    return value;
}

double get_real(const json& obj, const char* key, double fallback, double min_v, double max_v,
                const std::string& prefix, bool min_exclusive = false) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj[key];
    const std::string path = prefix + key;
    if (!v.is_number()) bad_value(path, "must be a number");
    const double value = v.get<double>();
    if (!std::isfinite(value) || value < min_v || value > max_v ||
        (min_exclusive && value == min_v)) {
        bad_value(path, "value " + std::to_string(value) + " outside " +
                            (min_exclusive ? "(" : "[") + std::to_string(min_v) + ", " +
                            std::to_string(max_v) + "]");
    }
    return value;
}

std::string get_string(const json& obj, const char* key, std::string fallback,
                       const std::string& prefix) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) bad_value(prefix + key, "must be a string");
    return obj[key].get<std::string>();
}

FitSection parse_fit(const json& obj, const FitSection& defaults, const std::string& prefix) {
    check_keys(obj, prefix, {"epochs", "batch_size", "learning_rate", "optimizer"});
    FitSection out = defaults;
    const std::string p = prefix + ".";
    out.epochs = static_cast<int>(get_int(obj, "epochs", defaults.epochs, 0, 1000000, p));
    out.batch_size =
        static_cast<int>(get_int(obj, "batch_size", defaults.batch_size, 1, 1000000, p));
    out.learning_rate =
        get_real(obj, "learning_rate", defaults.learning_rate, 0.0, 1e6, p, true);
    out.optimizer = get_string(obj, "optimizer", defaults.optimizer, p);
    if (out.optimizer != "adam" && out.optimizer != "sgd_momentum") {
        bad_value(p + "optimizer", "must be \"adam\" or \"sgd_momentum\"");
    }
    return out;
}

} // namespace

PipelineConfig config_from_json(const json& root) {
    check_keys(root, "", {"dataset", "split", "seed", "cnn", "classifier", "nnmf", "denoiser",
                          "schedule", "attack", "out_dir"});
    PipelineConfig cfg;

    if (root.contains("seed")) {
        const json& s = root["seed"];
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                       s.get<long long>() < 0)) {
            bad_value("seed", "must be a non-negative integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }
    cfg.out_dir = get_string(root, "out_dir", cfg.out_dir, "");
    if (cfg.out_dir.empty()) bad_value("out_dir", "must not be empty");

    if (root.contains("dataset")) {
        const json& d = root["dataset"];
        check_keys(d, "dataset", {"source", "images", "labels", "synthetic"});
        cfg.dataset.source = get_string(d, "source", cfg.dataset.source, "dataset.");
        if (cfg.dataset.source != "synthetic" && cfg.dataset.source != "idx") {
            bad_value("dataset.source", "must be \"synthetic\" or \"idx\"");
        }
        cfg.dataset.images_path = get_string(d, "images", "", "dataset.");
        cfg.dataset.labels_path = get_string(d, "labels", "", "dataset.");
        if (cfg.dataset.source == "idx" &&
            (cfg.dataset.images_path.empty() || cfg.dataset.labels_path.empty())) {
            bad_value("dataset.images", "idx source needs dataset.images and dataset.labels");
        }
        if (d.contains("synthetic")) {
            const json& s = d["synthetic"];
            check_keys(s, "dataset.synthetic",
                       {"samples_per_class", "jitter_translate", "jitter_rotate_deg",
                        "pixel_noise_sigma"});
            SyntheticSection& syn = cfg.dataset.synthetic;
            const std::string p = "dataset.synthetic.";
            syn.samples_per_class = static_cast<int>(
                get_int(s, "samples_per_class", syn.samples_per_class, 1, 1000000, p));
            syn.jitter_translate_px =
                get_real(s, "jitter_translate", syn.jitter_translate_px, 0.0, 14.0, p);
            syn.jitter_rotate_deg =
                get_real(s, "jitter_rotate_deg", syn.jitter_rotate_deg, 0.0, 180.0, p);
            syn.pixel_noise_sigma =
                get_real(s, "pixel_noise_sigma", syn.pixel_noise_sigma, 0.0, 10.0, p);
        }
    }

    if (root.contains("split")) {
        const json& s = root["split"];
        check_keys(s, "split", {"train", "val", "test"});
        cfg.split_ratios[0] = get_real(s, "train", cfg.split_ratios[0], 0.0, 1.0, "split.", true);
        cfg.split_ratios[1] = get_real(s, "val", cfg.split_ratios[1], 0.0, 1.0, "split.", true);
        cfg.split_ratios[2] = get_real(s, "test", cfg.split_ratios[2], 0.0, 1.0, "split.", true);
        const double sum = cfg.split_ratios[0] + cfg.split_ratios[1] + cfg.split_ratios[2];
        if (std::abs(sum - 1.0) > 1e-9) {
            bad_value("split", "ratios sum to " + std::to_string(sum) + ", expected 1");
        }
    }

    if (root.contains("cnn")) cfg.cnn = parse_fit(root["cnn"], cfg.cnn, "cnn");
    if (root.contains("classifier")) {
        cfg.classifier = parse_fit(root["classifier"], cfg.classifier, "classifier");
    }

    if (root.contains("nnmf")) {
        const json& m = root["nnmf"];
        check_keys(m, "nnmf", {"k", "max_iters", "tol", "project_iters"});
        cfg.nnmf.k = static_cast<int>(get_int(m, "k", cfg.nnmf.k, 1, 100000, "nnmf."));
        cfg.nnmf.max_iters =
            static_cast<int>(get_int(m, "max_iters", cfg.nnmf.max_iters, 1, 10000000, "nnmf."));
        cfg.nnmf.tol = get_real(m, "tol", cfg.nnmf.tol, 0.0, 1.0, "nnmf.");
        cfg.nnmf.project_iters = static_cast<int>(
            get_int(m, "project_iters", cfg.nnmf.project_iters, 1, 10000000, "nnmf."));
    }

    if (root.contains("denoiser")) {
        const json& d = root["denoiser"];
        check_keys(d, "denoiser",
                   {"epochs", "batch_size", "learning_rate", "hidden", "t_embed_dim"});
        const std::string p = "denoiser.";
        cfg.denoiser.epochs =
            static_cast<int>(get_int(d, "epochs", cfg.denoiser.epochs, 0, 1000000, p));
        cfg.denoiser.batch_size =
            static_cast<int>(get_int(d, "batch_size", cfg.denoiser.batch_size, 1, 1000000, p));
        cfg.denoiser.learning_rate =
            get_real(d, "learning_rate", cfg.denoiser.learning_rate, 0.0, 1e6, p, true);
        cfg.denoiser.hidden =
            static_cast<int>(get_int(d, "hidden", cfg.denoiser.hidden, 1, 1000000, p));
        cfg.denoiser.t_embed_dim =
            static_cast<int>(get_int(d, "t_embed_dim", cfg.denoiser.t_embed_dim, 2, 1024, p));
        if (cfg.denoiser.t_embed_dim % 2 != 0) bad_value(p + "t_embed_dim", "must be even");
    }

    if (root.contains("schedule")) {
        const json& s = root["schedule"];
        check_keys(s, "schedule", {"T", "beta_start", "beta_end", "t_inf", "m_passes"});
        const std::string p = "schedule.";
        cfg.schedule.T = static_cast<int>(get_int(s, "T", cfg.schedule.T, 1, 100000, p));
        cfg.schedule.beta_start =
            get_real(s, "beta_start", cfg.schedule.beta_start, 0.0, 1.0, p, true);
        cfg.schedule.beta_end = get_real(s, "beta_end", cfg.schedule.beta_end, 0.0, 1.0, p, true);
        if (cfg.schedule.beta_start > cfg.schedule.beta_end || cfg.schedule.beta_end >= 1.0) {
            bad_value(p + "beta_start", "need 0 < beta_start <= beta_end < 1");
        }
        cfg.schedule.t_inf =
            static_cast<int>(get_int(s, "t_inf", cfg.schedule.t_inf, 1, 100000, p));
        if (cfg.schedule.t_inf > cfg.schedule.T) bad_value(p + "t_inf", "must be <= schedule.T");
        cfg.schedule.m_passes =
            static_cast<int>(get_int(s, "m_passes", cfg.schedule.m_passes, 1, 100000, p));
    }

    if (root.contains("attack")) {
        const json& a = root["attack"];
        check_keys(a, "attack",
                   {"epsilon", "n_iters", "n_restarts", "rho", "alpha_momentum", "losses"});
        const std::string p = "attack.";
        cfg.attack.epsilon = get_real(a, "epsilon", cfg.attack.epsilon, 0.0, 1.0, p);
        cfg.attack.n_iters =
            static_cast<int>(get_int(a, "n_iters", cfg.attack.n_iters, 2, 1000000, p));
        cfg.attack.n_restarts =
            static_cast<int>(get_int(a, "n_restarts", cfg.attack.n_restarts, 1, 1000, p));
        cfg.attack.rho = get_real(a, "rho", cfg.attack.rho, 0.0, 1.0, p, true);
        if (cfg.attack.rho >= 1.0) bad_value(p + "rho", "must be in (0,1)");
        cfg.attack.alpha_momentum =
            get_real(a, "alpha_momentum", cfg.attack.alpha_momentum, 0.0, 1.0, p);
        if (a.contains("losses")) {
            if (!a["losses"].is_array() || a["losses"].empty()) {
                bad_value(p + "losses", "must be a non-empty array");
            }
            cfg.attack.losses.clear();
            for (const auto& l : a["losses"]) {
                if (!l.is_string() ||
                    (l.get<std::string>() != "CE" && l.get<std::string>() != "DLR")) {
                    bad_value(p + "losses", "entries must be \"CE\" or \"DLR\"");
                }
                const std::string name = l.get<std::string>();
                for (const std::string& seen : cfg.attack.losses) {
                    if (seen == name) bad_value(p + "losses", "duplicate entry " + name);
                }
                cfg.attack.losses.push_back(name);
            }
        }
    }

    return cfg;
}

PipelineConfig parse_config(const std::string& path) {
    std::ifstream file(path);
    if (!file) raise(ErrorKind::IoError, "cannot open config " + path);
    const std::string text((std::istreambuf_iterator<char>(file)),
                           std::istreambuf_iterator<char>());
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        raise(ErrorKind::ParseError, path + ":" + std::to_string(line) + ":" +
                                         std::to_string(column) + ": " + e.what());
    }
    return config_from_json(root);
}

json to_json(const PipelineConfig& c) {
    json root;
    root["dataset"] = {{"source", c.dataset.source},
                       {"images", c.dataset.images_path},
                       {"labels", c.dataset.labels_path},
                       {"synthetic",
                        {{"samples_per_class", c.dataset.synthetic.samples_per_class},
                         {"jitter_translate", c.dataset.synthetic.jitter_translate_px},
                         {"jitter_rotate_deg", c.dataset.synthetic.jitter_rotate_deg},
                         {"pixel_noise_sigma", c.dataset.synthetic.pixel_noise_sigma}}}};
    root["split"] = {{"train", c.split_ratios[0]},
                     {"val", c.split_ratios[1]},
                     {"test", c.split_ratios[2]}};
    root["seed"] = c.seed;
    auto fit_json = [](const FitSection& f) {
        return json{{"epochs", f.epochs},
                    {"batch_size", f.batch_size},
                    {"learning_rate", f.learning_rate},
                    {"optimizer", f.optimizer}};
    };
    root["cnn"] = fit_json(c.cnn);
    root["classifier"] = fit_json(c.classifier);
    root["nnmf"] = {{"k", c.nnmf.k},
                    {"max_iters", c.nnmf.max_iters},
                    {"tol", c.nnmf.tol},
                    {"project_iters", c.nnmf.project_iters}};
    root["denoiser"] = {{"epochs", c.denoiser.epochs},
                        {"batch_size", c.denoiser.batch_size},
                        {"learning_rate", c.denoiser.learning_rate},
                        {"hidden", c.denoiser.hidden},
                        {"t_embed_dim", c.denoiser.t_embed_dim}};
    root["schedule"] = {{"T", c.schedule.T},
                        {"beta_start", c.schedule.beta_start},
                        {"beta_end", c.schedule.beta_end},
                        {"t_inf", c.schedule.t_inf},
                        {"m_passes", c.schedule.m_passes}};
    root["attack"] = {{"epsilon", c.attack.epsilon},
                      {"n_iters", c.attack.n_iters},
                      {"n_restarts", c.attack.n_restarts},
                      {"rho", c.attack.rho},
                      {"alpha_momentum", c.attack.alpha_momentum},
                      {"losses", c.attack.losses}};
    root["out_dir"] = c.out_dir;
    return root;
}

std::string canonical_json(const PipelineConfig& config) {
    // out_dir has no effect on any computed byte, so it stays out of the
    // fingerprint: runs into different directories stay comparable
    json j = to_json(config);
    j.erase("out_dir");
    return j.dump();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        raise(ErrorKind::IoError, "SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string config_fingerprint(const PipelineConfig& config) {
    return sha256_hex(canonical_json(config));
}

// ---------------------------------------------------------------------------
// stage plumbing
// ---------------------------------------------------------------------------

namespace {

std::string artifact_path(const PipelineConfig& cfg, const char* name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void require_artifact(const PipelineConfig& cfg, const char* name) {
    const std::string path = artifact_path(cfg, name);
    if (!fs::exists(path)) raise(ErrorKind::MissingArtifact, path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) raise(ErrorKind::IoError, "cannot open " + path + " for writing");
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) raise(ErrorKind::IoError, "short write to " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) raise(ErrorKind::IoError, "cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(file)),
                       std::istreambuf_iterator<char>());
}

void write_manifest(const PipelineConfig& cfg) {
    json manifest;
    manifest["fingerprint"] = config_fingerprint(cfg);
    manifest["config"] = to_json(cfg);
    write_text(artifact_path(cfg, artifact::kManifest), manifest.dump(2) + "\n");
}

void check_manifest(const PipelineConfig& cfg) {
    require_artifact(cfg, artifact::kManifest);
    json manifest;
    try {
        manifest = json::parse(read_text(artifact_path(cfg, artifact::kManifest)));
    } catch (const json::parse_error& e) {
        raise(ErrorKind::ParseError, std::string(artifact::kManifest) + ": " + e.what());
    }
    const std::string recorded = manifest.value("fingerprint", "");
    const std::string current = config_fingerprint(cfg);
    if (recorded != current) {
        raise(ErrorKind::StaleArtifacts, "manifest fingerprint " + recorded +
                                             " does not match config " + current);
    }
}

Tensor labels_to_tensor(const std::vector<int>& labels) {
    Tensor t({labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) t.data[i] = labels[i];
    return t;
}

std::vector<int> labels_from_tensor(const Tensor& t) {
    std::vector<int> out(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<int>(t.data[i]);
    return out;
}

LabeledImageSet build_dataset(const PipelineConfig& cfg) {
    if (cfg.dataset.source == "idx") {
        return load_idx(cfg.dataset.images_path, cfg.dataset.labels_path);
    }
    SynthSpec spec;
    spec.samples_per_class = cfg.dataset.synthetic.samples_per_class;
    spec.jitter_translate_px = cfg.dataset.synthetic.jitter_translate_px;
    spec.jitter_rotate_deg = cfg.dataset.synthetic.jitter_rotate_deg;
    spec.pixel_noise_sigma = cfg.dataset.synthetic.pixel_noise_sigma;
    spec.seed = cfg.seed ^ hash_label("dataset.synthetic");
    return generate_synthetic(spec);
}

DataSplit load_split(const PipelineConfig& cfg) {
    require_artifact(cfg, artifact::kData);
    const Checkpoint ckpt = load_ntf(artifact_path(cfg, artifact::kData));
    const int num_classes = ckpt.meta("num_classes").get<int>();
    auto read_set = [&](const std::string& prefix) {
        LabeledImageSet set;
        set.images = ckpt.tensor(prefix + ".images");
        set.labels = labels_from_tensor(ckpt.tensor(prefix + ".labels"));
        set.num_classes = num_classes;
        return set;
    };
    DataSplit split;
    split.train = read_set("train");
    split.validation = read_set("val");
    split.test = read_set("test");
    split.seed = cfg.seed;
    return split;
}

ScalerStats load_scaler(const PipelineConfig& cfg) {
    require_artifact(cfg, artifact::kScaler);
    const Checkpoint ckpt = load_ntf(artifact_path(cfg, artifact::kScaler));
    ScalerStats stats;
    const Tensor& mean = ckpt.tensor("scaler.mean");
    const Tensor& stdev = ckpt.tensor("scaler.std");
    stats.mean = Eigen::Map<const Eigen::VectorXd>(mean.data.data(),
                                                   static_cast<Eigen::Index>(mean.numel()));
    stats.stdev = Eigen::Map<const Eigen::VectorXd>(stdev.data.data(),
                                                    static_cast<Eigen::Index>(stdev.numel()));
    stats.cnn_dim = ckpt.meta("scaler.cnn_dim").get<int>();
    stats.nnmf_k = ckpt.meta("scaler.nnmf_k").get<int>();
    stats.layout_checksum = ckpt.meta("scaler.layout_checksum").get<std::uint64_t>();
    return stats;
}

struct NnmfArtifact {
    Eigen::MatrixXd W;
    Eigen::MatrixXd H;
    int k = 0;
};

NnmfArtifact load_nnmf(const PipelineConfig& cfg) {
    require_artifact(cfg, artifact::kNnmf);
    const Checkpoint ckpt = load_ntf(artifact_path(cfg, artifact::kNnmf));
    NnmfArtifact out;
    out.k = ckpt.meta("nnmf.k").get<int>();
    const Tensor& w = ckpt.tensor("nnmf.W");
    const Tensor& h = ckpt.tensor("nnmf.H");
    out.W = w.as_matrix(static_cast<Eigen::Index>(w.dim(0)),
                        static_cast<Eigen::Index>(w.dim(1)));
    out.H = h.as_matrix(static_cast<Eigen::Index>(h.dim(0)),
                        static_cast<Eigen::Index>(h.dim(1)));
    return out;
}

DenoiserModel load_denoiser(const PipelineConfig& cfg) {
    require_artifact(cfg, artifact::kDenoiser);
    const Checkpoint ckpt = load_ntf(artifact_path(cfg, artifact::kDenoiser));
    DenoiserModel model;
    model.net = model_from_checkpoint(ckpt);
    model.feature_dim = ckpt.meta("denoiser.feature_dim").get<int>();
    model.t_embed_dim = ckpt.meta("denoiser.t_embed_dim").get<int>();
    return model;
}

NoiseSchedule load_schedule(const PipelineConfig& cfg) {
    require_artifact(cfg, artifact::kSchedule);
    const Checkpoint ckpt = load_ntf(artifact_path(cfg, artifact::kSchedule));
    return build_schedule(ckpt.meta("schedule.T").get<int>(),
                          ckpt.meta("schedule.beta_start").get<double>(),
                          ckpt.meta("schedule.beta_end").get<double>());
}

ModelParams load_model_artifact(const PipelineConfig& cfg, const char* name) {
    require_artifact(cfg, name);
    return load_model(artifact_path(cfg, name));
}

TrainConfig fit_to_train_config(const FitSection& fit, std::uint64_t seed) {
    TrainConfig out;
    out.epochs = fit.epochs;
    out.batch_size = fit.batch_size;
    out.learning_rate = fit.learning_rate;
    out.algorithm = fit.optimizer == "adam" ? OptimAlgo::Adam : OptimAlgo::SgdMomentum;
    out.seed = seed;
    return out;
}

// NNMF coefficients as sample rows; the training set reuses the fitted H,
// other sets are projected onto the frozen basis
Eigen::MatrixXd coeff_rows_from_fit(const NnmfArtifact& fit) { return fit.H.transpose(); }

Eigen::MatrixXd project_coeff_rows(const PipelineConfig& cfg, const NnmfArtifact& fit,
                                   const LabeledImageSet& set, const char* stream) {
    const Eigen::MatrixXd projected =
        nnmf_project(fit.W, vectorize(set), cfg.nnmf.project_iters,
                     cfg.seed ^ hash_label(stream));
    return projected.transpose();
}

AttackConfig attack_config(const PipelineConfig& cfg) {
    AttackConfig out;
    out.epsilon = cfg.attack.epsilon;
    out.n_iters = cfg.attack.n_iters;
    out.n_restarts = cfg.attack.n_restarts;
    out.rho = cfg.attack.rho;
    out.alpha_momentum = cfg.attack.alpha_momentum;
    out.losses.clear();
    for (const std::string& name : cfg.attack.losses) {
        out.losses.push_back(name == "CE" ? AttackLoss::CE : AttackLoss::DLR);
    }
    return out;
}

} // namespace

std::vector<LayerSpec> baseline_cnn_layers() {
    return {
        LayerSpec::conv2d(1, 16),  LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv2d(16, 32), LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::flatten(),
        LayerSpec::dense(32 * 7 * 7, 128, /*feature_layer=*/true),
        LayerSpec::relu(),
        LayerSpec::dense(128, 10),
    };
}

std::vector<LayerSpec> hybrid_classifier_layers(int feature_dim) {
    return {
        LayerSpec::dense(feature_dim, 128),
        LayerSpec::relu(),
        LayerSpec::dense(128, 10),
    };
}

void stage_prepare(const PipelineConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const LabeledImageSet set = build_dataset(cfg);
    const DataSplit split =
        stratified_split(set, cfg.split_ratios, cfg.seed ^ hash_label("split"));

    Checkpoint ckpt;
    ckpt.header["meta"] = {{"num_classes", set.num_classes},
                           {"fingerprint", config_fingerprint(cfg)}};
    ckpt.tensors.emplace_back("train.images", split.train.images);
    ckpt.tensors.emplace_back("train.labels", labels_to_tensor(split.train.labels));
    ckpt.tensors.emplace_back("val.images", split.validation.images);
    ckpt.tensors.emplace_back("val.labels", labels_to_tensor(split.validation.labels));
    ckpt.tensors.emplace_back("test.images", split.test.images);
    ckpt.tensors.emplace_back("test.labels", labels_to_tensor(split.test.labels));
    save_ntf(ckpt, artifact_path(cfg, artifact::kData));
    write_manifest(cfg);
}

void stage_train_cnn(const PipelineConfig& cfg) {
    check_manifest(cfg);
    const DataSplit split = load_split(cfg);
    const ModelParams init =
        init_model(baseline_cnn_layers(), cfg.seed ^ hash_label("cnn.init"));
    const TrainResult result =
        train(init, split.train.images, split.train.labels,
              fit_to_train_config(cfg.cnn, cfg.seed ^ hash_label("cnn.train")),
              &split.validation.images, &split.validation.labels);
    save_model(result.model, artifact_path(cfg, artifact::kCnn));
}

void stage_fit_nnmf(const PipelineConfig& cfg) {
    check_manifest(cfg);
    const DataSplit split = load_split(cfg);
    NnmfOptions options;
    options.max_iters = cfg.nnmf.max_iters;
    options.tol = cfg.nnmf.tol;
    const FactorPair fit =
        nnmf_fit(vectorize(split.train), cfg.nnmf.k, options, cfg.seed ^ hash_label("nnmf.fit"));

    Checkpoint ckpt;
    ckpt.header["meta"] = {{"nnmf.k", fit.k}};
    ckpt.tensors.emplace_back("nnmf.W", tensor_from_matrix(fit.W));
    ckpt.tensors.emplace_back("nnmf.H", tensor_from_matrix(fit.H));
    save_ntf(ckpt, artifact_path(cfg, artifact::kNnmf));
}

void stage_train_classifier(const PipelineConfig& cfg) {
    check_manifest(cfg);
    const DataSplit split = load_split(cfg);
    const ModelParams cnn = load_model_artifact(cfg, artifact::kCnn);
    const NnmfArtifact nnmf = load_nnmf(cfg);

    const Eigen::MatrixXd train_cnn = extract_cnn_features(cnn, split.train);
    const Eigen::MatrixXd train_coeffs = coeff_rows_from_fit(nnmf);
    const ScalerStats stats = fit_scaler(concat_features(train_cnn, train_coeffs),
                                         static_cast<int>(train_cnn.cols()), nnmf.k);
    const HybridFeatures train_features =
        build_hybrid(train_cnn, train_coeffs, stats, split.train.labels);

    const Eigen::MatrixXd val_cnn = extract_cnn_features(cnn, split.validation);
    const Eigen::MatrixXd val_coeffs =
        project_coeff_rows(cfg, nnmf, split.validation, "nnmf.project.val");
    const HybridFeatures val_features =
        build_hybrid(val_cnn, val_coeffs, stats, split.validation.labels);

    const ModelParams init = init_model(hybrid_classifier_layers(stats.dim()),
                                        cfg.seed ^ hash_label("classifier.init"));
    const Tensor train_x = tensor_from_matrix(train_features.rows);
    const Tensor val_x = tensor_from_matrix(val_features.rows);
    const TrainResult result =
        train(init, train_x, train_features.labels,
              fit_to_train_config(cfg.classifier, cfg.seed ^ hash_label("classifier.train")),
              &val_x, &val_features.labels);
    save_model(result.model, artifact_path(cfg, artifact::kClassifier));

    Checkpoint scaler_ckpt;
    scaler_ckpt.header["meta"] = {{"scaler.cnn_dim", stats.cnn_dim},
                                  {"scaler.nnmf_k", stats.nnmf_k},
                                  {"scaler.layout_checksum", stats.layout_checksum}};
    Tensor mean({static_cast<std::size_t>(stats.dim())});
    Tensor stdev({static_cast<std::size_t>(stats.dim())});
    Eigen::Map<Eigen::VectorXd>(mean.data.data(), stats.dim()) = stats.mean;
    Eigen::Map<Eigen::VectorXd>(stdev.data.data(), stats.dim()) = stats.stdev;
    scaler_ckpt.tensors.emplace_back("scaler.mean", std::move(mean));
    scaler_ckpt.tensors.emplace_back("scaler.std", std::move(stdev));
    save_ntf(scaler_ckpt, artifact_path(cfg, artifact::kScaler));
}

void stage_train_denoiser(const PipelineConfig& cfg) {
    check_manifest(cfg);
    const DataSplit split = load_split(cfg);
    const ModelParams cnn = load_model_artifact(cfg, artifact::kCnn);
    const NnmfArtifact nnmf = load_nnmf(cfg);
    const ScalerStats stats = load_scaler(cfg);

    const HybridFeatures train_features =
        build_hybrid(extract_cnn_features(cnn, split.train), coeff_rows_from_fit(nnmf), stats);
    const HybridFeatures val_features =
        build_hybrid(extract_cnn_features(cnn, split.validation),
                     project_coeff_rows(cfg, nnmf, split.validation, "nnmf.project.val"), stats);

    const NoiseSchedule schedule =
        build_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
    DenoiserConfig dconf;
    dconf.hidden = cfg.denoiser.hidden;
    dconf.t_embed_dim = cfg.denoiser.t_embed_dim;
    dconf.epochs = cfg.denoiser.epochs;
    dconf.batch_size = cfg.denoiser.batch_size;
    dconf.learning_rate = cfg.denoiser.learning_rate;
    dconf.seed = cfg.seed ^ hash_label("denoiser");
    const DenoiserTrainResult result =
        train_denoiser(train_features.rows, schedule, dconf, &val_features.rows);

    Checkpoint denoiser_ckpt = checkpoint_from_model(result.model.net);
    denoiser_ckpt.header["meta"]["denoiser.feature_dim"] = result.model.feature_dim;
    denoiser_ckpt.header["meta"]["denoiser.t_embed_dim"] = result.model.t_embed_dim;
    save_ntf(denoiser_ckpt, artifact_path(cfg, artifact::kDenoiser));

    Checkpoint schedule_ckpt;
    schedule_ckpt.header["meta"] = {{"schedule.T", cfg.schedule.T},
                                    {"schedule.beta_start", cfg.schedule.beta_start},
                                    {"schedule.beta_end", cfg.schedule.beta_end}};
    Tensor betas({static_cast<std::size_t>(schedule.T)});
    Eigen::Map<Eigen::VectorXd>(betas.data.data(), schedule.T) = schedule.betas;
    schedule_ckpt.tensors.emplace_back("schedule.betas", std::move(betas));
    save_ntf(schedule_ckpt, artifact_path(cfg, artifact::kSchedule));
}

void run_pipeline(const PipelineConfig& cfg) {
    stage_prepare(cfg);
    stage_train_cnn(cfg);
    stage_fit_nnmf(cfg);
    stage_train_classifier(cfg);
    stage_train_denoiser(cfg);
}

void stage_attack(const PipelineConfig& cfg) {
    check_manifest(cfg);
    const DataSplit split = load_split(cfg);
    const ModelParams cnn = load_model_artifact(cfg, artifact::kCnn);
    const AdversarialBatch batch =
        worst_case_attack(cnn, split.test.images, split.test.labels, attack_config(cfg),
                          cfg.seed ^ hash_label("attack"));

    Checkpoint ckpt;
    ckpt.header["meta"] = {{"epsilon", cfg.attack.epsilon},
                           {"fingerprint", config_fingerprint(cfg)}};
    ckpt.tensors.emplace_back("adv.x", batch.x_adv);
    Tensor mask({batch.success_mask.size()});
    for (std::size_t i = 0; i < batch.success_mask.size(); ++i) {
        mask.data[i] = batch.success_mask[i];
    }
    ckpt.tensors.emplace_back("adv.mask", std::move(mask));
    Tensor source({batch.source_loss.size()});
    for (std::size_t i = 0; i < batch.source_loss.size(); ++i) {
        source.data[i] = batch.source_loss[i] == AttackLoss::CE ? 0.0 : 1.0;
    }
    ckpt.tensors.emplace_back("adv.source_loss", std::move(source));
    save_ntf(ckpt, artifact_path(cfg, artifact::kAdversarial));
}

const std::array<const char*, 4>& ScenarioReport::keys() {
    static const std::array<const char*, 4> k = {"Clean_Base", "Clean_Def", "Robust_Base",
                                                 "Robust_Def"};
    return k;
}

ScenarioReport evaluate_scenarios(const PipelineConfig& cfg) {
    check_manifest(cfg);
    const DataSplit split = load_split(cfg);
    const ModelParams cnn = load_model_artifact(cfg, artifact::kCnn);
    const NnmfArtifact nnmf = load_nnmf(cfg);
    const ScalerStats stats = load_scaler(cfg);
    const ModelParams classifier = load_model_artifact(cfg, artifact::kClassifier);
    const DenoiserModel denoiser = load_denoiser(cfg);
    const NoiseSchedule schedule = load_schedule(cfg);

    require_artifact(cfg, artifact::kAdversarial);
    const Checkpoint adv = load_ntf(artifact_path(cfg, artifact::kAdversarial));
    if (adv.meta("fingerprint").get<std::string>() != config_fingerprint(cfg)) {
        raise(ErrorKind::StaleArtifacts, "adversarial cache fingerprint mismatch");
    }
    LabeledImageSet adv_set = split.test;
    adv_set.images = adv.tensor("adv.x");

    // both defended scenarios share the projection and purification streams
    // so that an epsilon=0 attack reproduces the clean rows exactly
    auto defended_probs = [&](const LabeledImageSet& set) {
        const HybridFeatures features =
            build_hybrid(extract_cnn_features(cnn, set),
                         project_coeff_rows(cfg, nnmf, set, "nnmf.project.test"), stats);
        PurifyOptions options;
        options.t_inf = cfg.schedule.t_inf;
        options.m_passes = cfg.schedule.m_passes;
        options.seed = cfg.seed ^ hash_label("purify.test");
        return purify_classify(features.rows, denoiser, classifier, schedule, options);
    };

    ScenarioReport report;
    report.fingerprint = config_fingerprint(cfg);
    report.seed = cfg.seed;
    report.rows[0] = metric_row(predict_probs(cnn, split.test.images), split.test.labels);
    report.rows[1] = metric_row(defended_probs(split.test), split.test.labels);
    report.rows[2] = metric_row(predict_probs(cnn, adv_set.images), split.test.labels);
    report.rows[3] = metric_row(defended_probs(adv_set), split.test.labels);
    return report;
}

namespace {

json row_to_json(const MetricRow& row) {
    return {{"accuracy", row.accuracy},
            {"precision", row.precision_macro},
            {"recall", row.recall_macro},
            {"f1", row.f1_macro},
            {"mcc", row.mcc},
            {"balanced_acc", row.balanced_accuracy},
            {"roc_auc", row.roc_auc_ovr_macro},
            {"log_loss", row.log_loss},
            {"brier", row.brier}};
}

MetricRow row_from_json(const json& j) {
    MetricRow row;
    row.accuracy = j.at("accuracy").get<double>();
    row.precision_macro = j.at("precision").get<double>();
    row.recall_macro = j.at("recall").get<double>();
    row.f1_macro = j.at("f1").get<double>();
    row.mcc = j.at("mcc").get<double>();
    row.balanced_accuracy = j.at("balanced_acc").get<double>();
    row.roc_auc_ovr_macro = j.at("roc_auc").get<double>();
    row.log_loss = j.at("log_loss").get<double>();
    row.brier = j.at("brier").get<double>();
    return row;
}

} // namespace

void save_report(const ScenarioReport& report, const std::string& path) {
    json out;
    out["fingerprint"] = report.fingerprint;
    out["seed"] = report.seed;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        out["rows"][ScenarioReport::keys()[i]] = row_to_json(report.rows[i]);
    }
    write_text(path, out.dump(2) + "\n");
}

ScenarioReport load_report(const std::string& path) {
    if (!fs::exists(path)) raise(ErrorKind::MissingArtifact, path);
    json in;
    try {
        in = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        raise(ErrorKind::ParseError, path + ": " + e.what());
    }
    ScenarioReport report;
    report.fingerprint = in.at("fingerprint").get<std::string>();
    report.seed = in.at("seed").get<std::uint64_t>();
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        report.rows[i] = row_from_json(in.at("rows").at(ScenarioReport::keys()[i]));
    }
    return report;
}

std::string results_csv(const ScenarioReport& report) {
    std::string out = "case,accuracy,precision,recall,f1,mcc,balanced_acc,roc_auc,log_loss,brier\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const MetricRow& r = report.rows[i];
        char line[256];
        std::snprintf(line, sizeof(line),
                      "%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      ScenarioReport::keys()[i], r.accuracy, r.precision_macro, r.recall_macro,
                      r.f1_macro, r.mcc, r.balanced_accuracy, r.roc_auc_ovr_macro, r.log_loss,
                      r.brier);
        out += line;
    }
    return out;
}

void write_results(const ScenarioReport& report, const std::string& path) {
    write_text(path, results_csv(report));
}

} // namespace fdnz
