#pragma once

// Retrieval metrics (CMC / Rank-k, mAP), attack success, and the complementarity
// and fitness diagnostics reported alongside the evolutionary layer.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mmattack/embedder.hpp"
#include "mmattack/numerics.hpp"

namespace mmattack {

struct DistanceMatrix {
    Matrix distances;  // queries x gallery
    std::vector<std::uint32_t> query_labels;
    std::vector<std::uint32_t> gallery_labels;
};

/// Euclidean feature distances.
DistanceMatrix euclidean_distances(std::span<const Feature> queries, std::span<const std::uint32_t> query_labels,
                                   std::span<const Feature> gallery, std::span<const std::uint32_t> gallery_labels);

/// Rank-k accuracy for each requested k. Gallery order per query is ascending
/// distance with ties broken by gallery index.
std::map<std::size_t, double> cmc_rank(const DistanceMatrix& dm, std::span<const std::size_t> ks);

double mean_ap(const DistanceMatrix& dm);

enum class SuccessMode { rank1_mismatch };

struct SuccessResult {
    std::vector<bool> per_query;
    double rate = 0.0;
};

/// A query succeeds when its nearest gallery entry (Euclidean) has a different identity.
SuccessResult attack_success(const DistanceMatrix& dm, SuccessMode mode = SuccessMode::rank1_mismatch);

/// Convenience: embeds the (already perturbed) queries with `model` and scores them against gallery features.
SuccessResult attack_success(const ModalityModel& model, std::span<const ImageTensor> queries,
                             std::span<const std::uint32_t> query_labels, std::span<const Feature> gallery,
                             std::span<const std::uint32_t> gallery_labels,
                             SuccessMode mode = SuccessMode::rank1_mismatch);

/// (r_combined - r_base) / r_base; nullopt when r_base is zero (baseline-zero outcome).
std::optional<double> complementarity(double r_base, double r_combined);

struct FitnessParams {
    std::vector<double> weights;
    double lambda_sparsity = 0.0;
};

/// sum_i w_i r_i - lambda * l0. Diagnostic only.
double fitness(std::span<const double> rates, const FitnessParams& params, std::size_t eta_l0);

/// Running maximum of the per-model complementarity observed during evolution.
struct AlphaArchive {
    std::vector<double> baselines;                 // r_i(delta), one per model
    std::vector<std::optional<double>> best;       // nullopt until observed or when baseline is zero
    std::size_t generation = 0;

    static AlphaArchive with_baselines(std::vector<double> baselines);
};

AlphaArchive update_archive(AlphaArchive archive, std::span<const std::optional<double>> observed);

}  // namespace mmattack
