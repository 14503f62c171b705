#include "mmattack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmattack/errors.hpp"

namespace mmattack {

namespace {

void check_labels(const DistanceMatrix& dm) {
    if (dm.distances.rows() != dm.query_labels.size() || dm.distances.cols() != dm.gallery_labels.size()) {
        throw InvalidArgument("distance matrix: label arrays do not match dimensions");
    }
    if (dm.gallery_labels.empty()) throw InvalidArgument("distance matrix: empty gallery");
}

void require_matches(const DistanceMatrix& dm) {
    for (auto q : dm.query_labels) {
        if (std::find(dm.gallery_labels.begin(), dm.gallery_labels.end(), q) == dm.gallery_labels.end()) {
            throw InvalidArgument("query label " + std::to_string(q) + " missing from gallery");
        }
    }
}

std::vector<std::size_t> ranked_gallery(const DistanceMatrix& dm, std::size_t q) {
    std::vector<std::size_t> order(dm.distances.cols());
    std::iota(order.begin(), order.end(), 0);
    const auto row = dm.distances.row(q);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    return order;
}

}  // namespace

DistanceMatrix euclidean_distances(std::span<const Feature> queries, std::span<const std::uint32_t> query_labels,
                                   std::span<const Feature> gallery, std::span<const std::uint32_t> gallery_labels) {
    if (queries.size() != query_labels.size() || gallery.size() != gallery_labels.size()) {
        throw InvalidArgument("euclidean_distances: label count mismatch");
    }
    DistanceMatrix dm;
    dm.distances = Matrix(queries.size(), gallery.size());
    for (std::size_t q = 0; q < queries.size(); ++q)
        for (std::size_t g = 0; g < gallery.size(); ++g)
            dm.distances(q, g) = std::sqrt(squared_euclidean(queries[q], gallery[g]));
    dm.query_labels.assign(query_labels.begin(), query_labels.end());
    dm.gallery_labels.assign(gallery_labels.begin(), gallery_labels.end());
    return dm;
}

std::map<std::size_t, double> cmc_rank(const DistanceMatrix& dm, std::span<const std::size_t> ks) {
    check_labels(dm);
    require_matches(dm);
    std::map<std::size_t, double> out;
    for (auto k : ks) out[k] = 0.0;
    if (dm.query_labels.empty()) return out;

    for (std::size_t q = 0; q < dm.query_labels.size(); ++q) {
        const auto order = ranked_gallery(dm, q);
        std::size_t first_hit = order.size();
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            if (dm.gallery_labels[order[pos]] == dm.query_labels[q]) {
                first_hit = pos;
                break;
            }
        }
        for (auto& [k, acc] : out)
            if (first_hit < k) acc += 1.0;
    }
    for (auto& [k, acc] : out) acc /= static_cast<double>(dm.query_labels.size());
    return out;
}

double mean_ap(const DistanceMatrix& dm) {
    check_labels(dm);
    require_matches(dm);
    if (dm.query_labels.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t q = 0; q < dm.query_labels.size(); ++q) {
        const auto order = ranked_gallery(dm, q);
        double hits = 0.0;
        double precision_sum = 0.0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            if (dm.gallery_labels[order[pos]] != dm.query_labels[q]) continue;
            hits += 1.0;
            precision_sum += hits / static_cast<double>(pos + 1);
        }
        total += precision_sum / hits;
    }
    return total / static_cast<double>(dm.query_labels.size());
}

SuccessResult attack_success(const DistanceMatrix& dm, SuccessMode mode) {
    check_labels(dm);
    if (mode != SuccessMode::rank1_mismatch) throw InvalidArgument("attack_success: unsupported mode");
    SuccessResult out;
    out.per_query.resize(dm.query_labels.size());
    std::size_t successes = 0;
    for (std::size_t q = 0; q < dm.query_labels.size(); ++q) {
        const auto row = dm.distances.row(q);
        std::size_t best = 0;
        for (std::size_t g = 1; g < row.size(); ++g)
            if (row[g] < row[best]) best = g;
        out.per_query[q] = dm.gallery_labels[best] != dm.query_labels[q];
        successes += out.per_query[q] ? 1 : 0;
    }
    // Written as 1 - hits/n so the rate is the exact complement of rank-1 accuracy.
    const auto n = static_cast<double>(dm.query_labels.size());
    out.rate = dm.query_labels.empty() ? 0.0 : 1.0 - static_cast<double>(dm.query_labels.size() - successes) / n;
    return out;
}

SuccessResult attack_success(const ModalityModel& model, std::span<const ImageTensor> queries,
                             std::span<const std::uint32_t> query_labels, std::span<const Feature> gallery,
                             std::span<const std::uint32_t> gallery_labels, SuccessMode mode) {
    if (gallery.empty()) throw InvalidArgument("attack_success: empty gallery");
    std::vector<Feature> feats;
    feats.reserve(queries.size());
    for (const auto& img : queries) feats.push_back(forward(model, img));
    return attack_success(euclidean_distances(feats, query_labels, gallery, gallery_labels), mode);
}

std::optional<double> complementarity(double r_base, double r_combined) {
    if (r_base == 0.0) return std::nullopt;
    return (r_combined - r_base) / r_base;
}

double fitness(std::span<const double> rates, const FitnessParams& params, std::size_t eta_l0) {
    if (rates.size() != params.weights.size()) throw InvalidArgument("fitness: weight count does not match model count");
    if (std::any_of(params.weights.begin(), params.weights.end(), [](double w) { return w < 0.0; }) ||
        std::none_of(params.weights.begin(), params.weights.end(), [](double w) { return w > 0.0; })) {
        throw InvalidArgument("fitness: weights must be non-negative with at least one positive");
    }
    if (!(params.lambda_sparsity >= 0.0)) throw InvalidArgument("fitness: lambda_sparsity must be >= 0");
    double total = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) total += params.weights[i] * rates[i];
    return total - params.lambda_sparsity * static_cast<double>(eta_l0);
}

AlphaArchive AlphaArchive::with_baselines(std::vector<double> baselines) {
    AlphaArchive a;
    a.best.assign(baselines.size(), std::nullopt);
    a.baselines = std::move(baselines);
    return a;
}

AlphaArchive update_archive(AlphaArchive archive, std::span<const std::optional<double>> observed) {
    if (observed.size() != archive.best.size()) throw InvalidArgument("update_archive: model count mismatch");
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!observed[i]) continue;
        if (!archive.best[i] || *observed[i] > *archive.best[i]) archive.best[i] = observed[i];
    }
    ++archive.generation;
    return archive;
}

}  // namespace mmattack
