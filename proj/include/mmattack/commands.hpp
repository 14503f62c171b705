#pragma once

// File-based subcommands over a run directory:
//   <out>/config.txt, <out>/dataset.bin, <out>/models/model_<m>.bin,
//   <out>/attack_<mode>/{delta.bin, eta.bin, metrics.csv, archive.csv, summary.json},
//   <out>/ablation.csv, <out>/report.json

#include <filesystem>
#include <ostream>
#include <vector>

#include "mmattack/config.hpp"
#include "mmattack/experiment.hpp"

namespace mmattack {

struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path config() const { return root / "config.txt"; }
    std::filesystem::path dataset() const { return root / "dataset.bin"; }
    std::filesystem::path model(std::uint16_t modality) const {
        return root / "models" / ("model_" + std::to_string(modality) + ".bin");
    }
    std::filesystem::path attack_dir(AttackMode mode) const { return root / ("attack_" + std::string(to_string(mode))); }
    std::filesystem::path ablation() const { return root / "ablation.csv"; }
    std::filesystem::path report() const { return root / "report.json"; }
};

void write_text(const std::filesystem::path& path, const std::string& text);

/// Writes the dataset and the config echo.
ReidDataset cmd_gen_data(const ExperimentConfig& config, const RunPaths& paths, std::ostream& log);

/// Trains one checkpoint per modality and prints clean rank-1. Returns clean metrics per modality.
std::vector<RetrievalMetrics> cmd_train(const ExperimentConfig& config, const RunPaths& paths, std::ostream& log);

/// Runs one attack from existing artifacts. Models are loaded lazily, so the
/// held-out checkpoint is first read in the evaluation phase.
AttackReport cmd_attack(const ExperimentConfig& config, const RunPaths& paths, AttackMode mode, std::ostream& log);

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config, const RunPaths& paths, std::ostream& log);

/// Collects every attack summary found under the run directory into report.json.
void cmd_report(const RunPaths& paths, std::ostream& log);

/// JSON run summary: config echo, metric rows, archive trace, per-phase wall-clock.
std::string summary_json(const ExperimentConfig& config, const AttackReport& report);

}  // namespace mmattack
