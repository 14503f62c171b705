#pragma once

// Per-modality cluster structure: k-means centroids and a regularized inverse
// covariance that backs every Mahalanobis computation in the attack layers.

#include <cstdint>
#include <span>
#include <vector>

#include "mmattack/dataset.hpp"
#include "mmattack/embedder.hpp"
#include "mmattack/numerics.hpp"

namespace mmattack {

struct KMeansResult {
    std::vector<Vector> centroids;
    std::vector<std::size_t> assignment;
    /// Sum of squared Euclidean distances to the assigned centroid, one entry per assignment step.
    std::vector<double> objective_trace;
    std::size_t iterations = 0;
};

/// Lloyd iterations from k-means++ seeding. Empty clusters are re-seeded at the
/// point farthest from its own centroid. Deterministic per seed.
KMeansResult kmeans(std::span<const Vector> features, std::size_t n_clusters, std::size_t max_iters, std::uint64_t seed);

struct CentroidBank {
    /// Modality of the images the bank was built from.
    std::uint16_t modality = 0;
    std::vector<Vector> centroids;
    Matrix s_inv;

    std::size_t n_clusters() const noexcept { return centroids.size(); }
    std::size_t dim() const noexcept { return s_inv.rows(); }
};

struct BankParams {
    std::size_t n_clusters = 16;
    double lambda_reg = 1e-3;
    std::size_t kmeans_iters = 100;
    std::uint64_t seed = 0;
};

/// Clusters the model's features over `gallery` and inverts their regularized covariance.
CentroidBank build_bank(const ModalityModel& model, std::span<const Sample* const> gallery, const BankParams& params);

/// Same, from precomputed features.
CentroidBank build_bank_from_features(std::span<const Vector> features, std::uint16_t modality, const BankParams& params);

struct CentroidPair {
    std::size_t nearest = 0;
    std::size_t farthest = 0;
};

/// Nearest and farthest centroid of `f` under the bank's Mahalanobis metric; ties go to the lower index.
CentroidPair nearest_farthest(std::span<const double> f, const CentroidBank& bank);

}  // namespace mmattack
