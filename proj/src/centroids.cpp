#include "mmattack/centroids.hpp"

#include <algorithm>
#include <limits>

#include "mmattack/errors.hpp"
#include "mmattack/rng.hpp"

namespace mmattack {

namespace {

std::size_t closest(std::span<const double> x, const std::vector<Vector>& centroids, double& best) {
    std::size_t idx = 0;
    best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_euclidean(x, centroids[c]);
        if (d < best) {
            best = d;
            idx = c;
        }
    }
    return idx;
}

std::vector<Vector> plus_plus_seeding(std::span<const Vector> features, std::size_t k, Rng& rng) {
    std::vector<Vector> centroids;
    centroids.push_back(features[uniform_index(rng, features.size())]);
    std::vector<double> weight(features.size());
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            double d;
            closest(features[i], centroids, d);
            weight[i] = d;
            total += d;
        }
        std::size_t pick = features.size() - 1;
        if (total <= 0.0) {
            pick = uniform_index(rng, features.size());
        } else {
            double target = uniform01(rng) * total;
            for (std::size_t i = 0; i < features.size(); ++i) {
                if (weight[i] <= 0.0) continue;
                target -= weight[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(features[pick]);
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(std::span<const Vector> features, std::size_t n_clusters, std::size_t max_iters, std::uint64_t seed) {
    if (n_clusters < 2) throw InvalidArgument("kmeans: need at least 2 clusters");
    if (features.size() < n_clusters) throw InvalidArgument("kmeans: fewer features than clusters");
    const std::size_t d = features.front().size();
    for (const auto& f : features)
        if (f.size() != d) throw InvalidArgument("kmeans: features differ in length");

    Rng rng(seed);
    KMeansResult result;
    result.centroids = plus_plus_seeding(features, n_clusters, rng);
    result.assignment.assign(features.size(), 0);

    std::vector<double> dist(features.size());
    for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
        bool changed = iter == 0;
        double objective = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const std::size_t c = closest(features[i], result.centroids, dist[i]);
            if (c != result.assignment[i]) changed = true;
            result.assignment[i] = c;
            objective += dist[i];
        }
        result.objective_trace.push_back(objective);
        result.iterations = iter + 1;
        if (!changed) break;

        std::vector<Vector> sums(n_clusters, Vector(d, 0.0));
        std::vector<std::size_t> counts(n_clusters, 0);
        for (std::size_t i = 0; i < features.size(); ++i) {
            auto& s = sums[result.assignment[i]];
            for (std::size_t j = 0; j < d; ++j) s[j] += features[i][j];
            ++counts[result.assignment[i]];
        }
        std::vector<bool> used(features.size(), false);
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (counts[c] > 0) {
                for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
                result.centroids[c] = std::move(sums[c]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < features.size(); ++i) {
                if (!used[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            used[far] = true;
            result.centroids[c] = features[far];
        }
    }
    return result;
}

CentroidBank build_bank_from_features(std::span<const Vector> features, std::uint16_t modality, const BankParams& params) {
    if (features.empty()) throw InvalidArgument("build_bank: empty gallery");
    CentroidBank bank;
    bank.modality = modality;
    bank.centroids = kmeans(features, params.n_clusters, params.kmeans_iters, params.seed).centroids;
    bank.s_inv = regularized_inverse(covariance(features), params.lambda_reg);
    return bank;
}

CentroidBank build_bank(const ModalityModel& model, std::span<const Sample* const> gallery, const BankParams& params) {
    if (gallery.empty()) throw InvalidArgument("build_bank: empty gallery");
    std::vector<Vector> features;
    features.reserve(gallery.size());
    for (const Sample* s : gallery) features.push_back(forward(model, s->image));
    return build_bank_from_features(features, gallery.front()->modality, params);
}

CentroidPair nearest_farthest(std::span<const double> f, const CentroidBank& bank) {
    if (bank.centroids.empty()) throw InvalidArgument("nearest_farthest: empty bank");
    CentroidPair out;
    double best = std::numeric_limits<double>::infinity();
    double worst = -1.0;
    for (std::size_t c = 0; c < bank.centroids.size(); ++c) {
        const double d = mahalanobis_sq(bank.centroids[c], f, bank.s_inv);
        if (d < best) {
            best = d;
            out.nearest = c;
        }
        if (d > worst) {
            worst = d;
            out.farthest = c;
        }
    }
    return out;
}

}  // namespace mmattack
