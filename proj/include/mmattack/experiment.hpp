#pragma once

// End-to-end experiment pipeline: benchmark generation, per-modality training,
// both attack layers, transfer evaluation, ablation grids, and result tables.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmattack/config.hpp"
#include "mmattack/dataset.hpp"
#include "mmattack/embedder.hpp"
#include "mmattack/evo.hpp"
#include "mmattack/uap.hpp"

namespace mmattack {

enum class AttackMode { grad_only, dual_layer };

std::string_view to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view name);

/// Base identities plus one copy per configured modality.
ReidDataset make_dataset(const ExperimentConfig& config);

ModalityModel train_modality(const ExperimentConfig& config, const ReidDataset& ds, std::uint16_t modality);

/// Retrieval metrics of one modality's queries (with `perturbation` added, may be
/// empty for clean) against its clean gallery.
struct RetrievalMetrics {
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    double map = 0.0;
    double success_rate = 0.0;
};

RetrievalMetrics evaluate_retrieval(const ModalityModel& model, const ReidDataset& ds, std::uint16_t modality,
                                    std::span<const double> perturbation);

/// Supplies the model of a modality on demand. Attack phases only ask for the
/// models they optimize against; the held-out model is requested at evaluation.
using ModelProvider = std::function<const ModalityModel&(std::uint16_t)>;

struct MetricsRow {
    std::string run_id;
    std::string phase;  // clean | uap | uap+eta
    std::uint16_t modality = 0;
    std::string modality_name;
    std::string role;  // source | auxiliary | held-out | unused
    RetrievalMetrics metrics;
    std::optional<double> alpha;
    std::optional<double> fitness;
};

struct PhaseTimings {
    double uap_seconds = 0.0;
    double evo_seconds = 0.0;
    double eval_seconds = 0.0;
};

struct AttackReport {
    std::string run_id;
    AttackMode mode = AttackMode::grad_only;
    UniversalPerturbation delta;
    std::optional<EvoResult> evo;
    std::vector<std::uint16_t> evo_modalities;
    std::vector<MetricsRow> metrics;
    PhaseTimings timings;

    const MetricsRow& row(std::string_view phase, std::uint16_t modality) const;
};

/// Models used by the evolutionary layer: auxiliaries first, then source
/// modalities, truncated to config.evo_models (0 = auxiliaries only).
std::vector<std::uint16_t> evo_modalities(const ExperimentConfig& config);

struct AttackHooks {
    /// Called with "uap", "evolve", "evaluate" as each phase starts.
    std::function<void(std::string_view)> on_phase;
};

AttackReport run_attack(const ExperimentConfig& config, const ReidDataset& ds, const ModelProvider& models,
                        AttackMode mode, const AttackHooks& hooks = {});

struct AblationRow {
    std::size_t k = 0;
    std::size_t n_models = 0;
    double p_c = 0.0;
    double p_m = 0.0;
    std::size_t pop_size = 0;
    std::size_t generations = 0;
    std::uint64_t attack_seed = 0;
    RetrievalMetrics held_out_uap;
    RetrievalMetrics held_out;      // uap + eta
    double aux_success = 0.0;       // mean per-model success rate of the returned eta on the search batch
    double evo_seconds = 0.0;
};

/// Cartesian grid over the configured ablation axes (unset axes use the base value) and seeds.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const ReidDataset& ds, const ModelProvider& models);

std::string metrics_csv(std::span<const MetricsRow> rows);
std::string archive_csv(const EvoResult& evo, std::span<const std::uint16_t> modalities);
std::string ablation_csv(std::span<const AblationRow> rows);

/// RFC-4180 field quoting.
std::string csv_field(std::string_view value);

}  // namespace mmattack
