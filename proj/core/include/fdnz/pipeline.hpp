#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fdnz/data.hpp"
#include "fdnz/metrics.hpp"
#include "fdnz/nn.hpp"

namespace fdnz {

struct SyntheticSection {
    int samples_per_class = 500;
    double jitter_translate_px = 2.0;
    double jitter_rotate_deg = 15.0;
    double pixel_noise_sigma = 0.3;
};

struct DatasetSection {
    std::string source = "synthetic"; // "synthetic" | "idx"
    std::string images_path;
    std::string labels_path;
    SyntheticSection synthetic;
};

struct FitSection {
    int epochs = 10;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::string optimizer = "adam"; // "adam" | "sgd_momentum"
};

struct NnmfSection {
    int k = 30;
    int max_iters = 500;
    double tol = 1e-6;
    int project_iters = 200;
};

struct DenoiserSection {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int hidden = 256;
    int t_embed_dim = 16;
};

struct ScheduleSection {
    int T = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int t_inf = 10;
    int m_passes = 10;
};

struct AttackSection {
    double epsilon = 0.1;
    int n_iters = 100;
    int n_restarts = 1;
    double rho = 0.75;
    double alpha_momentum = 0.75;
    std::vector<std::string> losses = {"CE", "DLR"};
};

struct PipelineConfig {
    DatasetSection dataset;
    std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
    std::uint64_t seed = 1;
    FitSection cnn;
    FitSection classifier;
    NnmfSection nnmf;
    DenoiserSection denoiser;
    ScheduleSection schedule;
    AttackSection attack;
    std::string out_dir = "out";
};

namespace artifact {
inline constexpr const char* kData = "data.ntf";
inline constexpr const char* kCnn = "cnn.ntf";
inline constexpr const char* kNnmf = "nnmf.ntf";
inline constexpr const char* kScaler = "scaler.ntf";
inline constexpr const char* kClassifier = "classifier.ntf";
inline constexpr const char* kDenoiser = "denoiser.ntf";
inline constexpr const char* kSchedule = "schedule.ntf";
inline constexpr const char* kAdversarial = "adv.ntf";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kResults = "results.csv";
} // namespace artifact

// Unknown keys are rejected, missing keys take the documented defaults, every
// value is range-checked with its dotted path in the error message.
PipelineConfig parse_config(const std::string& path);
PipelineConfig config_from_json(const nlohmann::json& json);
nlohmann::json to_json(const PipelineConfig& config);

// byte-stable serialization of the fully populated config; the SHA-256 of
// these bytes is the artifact fingerprint
std::string canonical_json(const PipelineConfig& config);
std::string config_fingerprint(const PipelineConfig& config);

std::string sha256_hex(const std::string& bytes);

// stages; each verifies the manifest fingerprint before touching artifacts
void stage_prepare(const PipelineConfig& config);
void stage_train_cnn(const PipelineConfig& config);
void stage_fit_nnmf(const PipelineConfig& config);
void stage_train_classifier(const PipelineConfig& config);
void stage_train_denoiser(const PipelineConfig& config);
void stage_attack(const PipelineConfig& config);

// prepare -> CNN -> NNMF -> hybrid + classifier -> denoiser; reruns with the
// same config overwrite every artifact with identical bytes
void run_pipeline(const PipelineConfig& config);

struct ScenarioReport {
    static const std::array<const char*, 4>& keys();
    std::array<MetricRow, 4> rows; // Clean_Base, Clean_Def, Robust_Base, Robust_Def
    std::string fingerprint;
    std::uint64_t seed = 0;
};

ScenarioReport evaluate_scenarios(const PipelineConfig& config);

void save_report(const ScenarioReport& report, const std::string& path);
ScenarioReport load_report(const std::string& path);

// header `case,accuracy,precision,recall,f1,mcc,balanced_acc,roc_auc,log_loss,brier`,
// four fixed-order rows, 4 decimal places
std::string results_csv(const ScenarioReport& report);
void write_results(const ScenarioReport& report, const std::string& path);

// the fixed baseline CNN architecture and the hybrid classifier head
std::vector<LayerSpec> baseline_cnn_layers();
std::vector<LayerSpec> hybrid_classifier_layers(int feature_dim);

} // namespace fdnz
