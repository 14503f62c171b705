#pragma once

// Experiment configuration: a plain-text key=value file, one key per line,
// '#' starting a comment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmattack/dataset.hpp"

namespace mmattack {

struct AblationGrid {
    std::vector<std::size_t> k;
    std::vector<std::size_t> n_models;
    std::vector<double> p_c;
    std::vector<double> p_m;
    std::vector<std::size_t> pop_size;
    std::vector<std::size_t> generations;
    std::vector<std::uint64_t> seeds;  // attack-phase seeds
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    /// Seed for the attack phases (UAP and evolution); defaults to `seed`.
    std::optional<std::uint64_t> attack_seed;

    // dataset
    std::uint32_t n_identities = 16;
    std::uint32_t images_per_identity = 10;
    Shape shape{16, 8, 3};
    double noise_sigma = 3.0;
    double identity_amplitude = 12.0;
    double background_amplitude = 40.0;
    std::vector<ModalityKind> modalities{ModalityKind::identity_pass, ModalityKind::channel_mix,
                                         ModalityKind::grayscale_collapse, ModalityKind::intensity_invert};
    std::vector<std::uint16_t> source{0};
    std::vector<std::uint16_t> auxiliaries{1, 2};
    std::uint16_t held_out = 3;

    // embedders
    std::uint32_t d_hidden = 64;
    std::uint32_t d_feat = 16;
    std::uint32_t train_epochs = 60;
    double train_lr = 0.05;
    std::uint32_t train_batch = 16;

    // centroid banks; n_clusters = 0 means "number of training identities"
    double lambda_reg = 1e-3;
    std::size_t n_clusters = 0;
    std::size_t kmeans_iters = 100;

    // gradient layer; alpha = 0 means epsilon / 10
    std::uint32_t uap_epochs = 40;
    std::uint32_t uap_batch = 16;
    double epsilon = 8.0;
    double rho = 0.5;
    double beta = 0.9;
    double alpha = 0.0;

    // evolutionary layer; evo_models = 0 means every auxiliary, evo_batch = 0 means the whole train split
    std::size_t pop_size = 2;
    std::size_t generations = 150;
    std::size_t k = 64;
    double p_c = 0.8;
    double p_m = 0.1;
    double step_scale = 1.0;
    std::size_t evo_models = 0;
    std::size_t evo_batch = 0;

    double fitness_lambda = 0.0;

    AblationGrid ablate;

    std::uint64_t effective_attack_seed() const noexcept { return attack_seed.value_or(seed); }

    /// Rejects inconsistent settings (overlapping roles, bad ranges). Throws ConfigError.
    void validate() const;
};

/// Parses key=value text; unknown keys and malformed values raise ConfigError.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Full key=value echo; parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);

}  // namespace mmattack
