// Command-line front end for the digit classification pipeline: dataset
// preparation, CNN / NNMF / classifier / denoiser training, APGD attack
// generation, four-scenario evaluation, and CSV reporting.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "fdnz/error.hpp"
#include "fdnz/pipeline.hpp"

namespace {

void print_report(const fdnz::ScenarioReport& report) {
    std::printf("%-12s %9s %9s %9s %9s %9s %9s %9s %9s %9s\n", "case", "accuracy", "precision",
                "recall", "f1", "mcc", "bal_acc", "roc_auc", "log_loss", "brier");
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const fdnz::MetricRow& r = report.rows[i];
        std::printf("%-12s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                    fdnz::ScenarioReport::keys()[i], r.accuracy, r.precision_macro,
                    r.recall_macro, r.f1_macro, r.mcc, r.balanced_accuracy,
                    r.roc_auc_ovr_macro, r.log_loss, r.brier);
    }
}

std::string report_path(const fdnz::PipelineConfig& cfg) {
    return (std::filesystem::path(cfg.out_dir) / fdnz::artifact::kReport).string();
}

std::string results_path(const fdnz::PipelineConfig& cfg) {
    return (std::filesystem::path(cfg.out_dir) / fdnz::artifact::kResults).string();
}

void run_evaluate(const fdnz::PipelineConfig& cfg) {
    const fdnz::ScenarioReport report = fdnz::evaluate_scenarios(cfg);
    fdnz::save_report(report, report_path(cfg));
    print_report(report);
    std::printf("report written to %s\n", report_path(cfg).c_str());
}

void run_report(const fdnz::PipelineConfig& cfg) {
    const fdnz::ScenarioReport report = fdnz::load_report(report_path(cfg));
    if (report.fingerprint != fdnz::config_fingerprint(cfg)) {
        fdnz::raise(fdnz::ErrorKind::StaleArtifacts,
                    "report fingerprint does not match the current config");
    }
    fdnz::write_results(report, results_path(cfg));
    std::printf("results written to %s\n", results_path(cfg).c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"NNMF+CNN hybrid digit classifier with diffusion feature denoising and APGD "
                 "robustness evaluation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "pipeline config JSON (defaults when omitted)");
    app.add_option("--out", out_dir, "output directory override");
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });

    const std::vector<std::pair<std::string, std::string>> stages = {
        {"prepare", "generate or load the dataset and write the stratified split"},
        {"train-cnn", "train the baseline CNN"},
        {"fit-nnmf", "fit the NNMF basis on training images"},
        {"train-classifier", "build hybrid features and train the classifier"},
        {"train-denoiser", "train the diffusion feature denoiser"},
        {"attack", "generate worst-case APGD adversarial images against the baseline"},
        {"evaluate", "compute the four-scenario metric report"},
        {"report", "write the results CSV from the saved report"},
        {"all", "run the full pipeline, attack, evaluation, and report"},
    };
    for (const auto& [name, help] : stages) app.add_subcommand(name, help);

    CLI11_PARSE(app, argc, argv);

    try {
        fdnz::PipelineConfig cfg = config_path.empty()
                                       ? fdnz::PipelineConfig{}
                                       : fdnz::parse_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed_set) cfg.seed = seed;

        const std::string stage = app.get_subcommands().front()->get_name();
        if (stage == "prepare") {
            fdnz::stage_prepare(cfg);
        } else if (stage == "train-cnn") {
            fdnz::stage_train_cnn(cfg);
        } else if (stage == "fit-nnmf") {
            fdnz::stage_fit_nnmf(cfg);
        } else if (stage == "train-classifier") {
            fdnz::stage_train_classifier(cfg);
        } else if (stage == "train-denoiser") {
            fdnz::stage_train_denoiser(cfg);
        } else if (stage == "attack") {
            fdnz::stage_attack(cfg);
        } else if (stage == "evaluate") {
            run_evaluate(cfg);
        } else if (stage == "report") {
            run_report(cfg);
        } else if (stage == "all") {
            fdnz::run_pipeline(cfg);
            fdnz::stage_attack(cfg);
            run_evaluate(cfg);
            run_report(cfg);
        }
    } catch (const fdnz::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_validation() ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
