#pragma once

// Second optimization layer: multi-objective evolutionary search for a sparse
// ternary perturbation eta that, superimposed on the universal perturbation,
// transfers across auxiliary modality models.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mmattack/centroids.hpp"
#include "mmattack/dataset.hpp"
#include "mmattack/embedder.hpp"
#include "mmattack/metrics.hpp"
#include "mmattack/rng.hpp"
#include "mmattack/uap.hpp"

namespace mmattack {

struct Gene {
    std::uint16_t h = 0;
    std::uint16_t w = 0;
    std::uint8_t c = 0;
    std::int8_t value = 0;  // -1, 0 or +1

    bool operator==(const Gene&) const = default;
};

/// Sparse ternary genotype. Genes hold unique pixel positions; zero-valued genes
/// stay in the genome and may be re-activated by mutation.
struct SparseIndividual {
    std::vector<Gene> genes;
    double step_scale = 1.0;

    std::size_t l0() const noexcept;
    /// Image-shaped step_scale * eta.
    std::vector<double> dense(const Shape& shape) const;

    bool operator==(const SparseIndividual&) const = default;
};

struct SearchSpace {
    Shape shape;
    std::size_t k = 64;  // L0 budget, counted per element
};

/// Objective vector (d_tilde, s_tilde, ||eta||_2). total_loss keeps the raw
/// summed distance D = -log(d_tilde) so comparisons survive exp underflow.
struct ObjectiveVector {
    double d_tilde = 1.0;
    double s_tilde = 1.0;
    double eta_l2 = 0.0;
    double total_loss = 0.0;

    static ObjectiveVector from_loss(double total_loss, double s_tilde, double eta_l2);
    static ObjectiveVector from_d_tilde(double d_tilde, double s_tilde, double eta_l2);

    double success() const noexcept { return 1.0 - s_tilde; }
};

struct Evaluation {
    ObjectiveVector objectives;
    std::vector<double> model_losses;   // D_i
    std::vector<double> model_rates;    // fraction of successful samples per model
    std::vector<int> model_success;     // majority-thresholded indicator per model
};

/// One auxiliary model with its evaluation batch and clean gallery.
struct EvoTarget {
    std::uint16_t modality = 0;
    const ModalityModel* model = nullptr;
    const CentroidBank* bank = nullptr;
    std::vector<const ImageTensor*> images;
    std::vector<std::uint32_t> labels;
    std::vector<std::size_t> home_centroid;  // nearest centroid of each clean feature
    std::vector<Feature> gallery_features;
    std::vector<std::uint32_t> gallery_labels;
};

EvoTarget make_target(const ModalityModel& model, const CentroidBank& bank, std::span<const Sample* const> eval_batch,
                      std::span<const Sample* const> gallery);

/// clip(delta + step_scale * eta, -epsilon, epsilon)
std::vector<double> combined_perturbation(const ImageTensor& delta, const SparseIndividual& eta, double epsilon);

/// clamp(img + combined_perturbation(delta, eta, epsilon), 0, 255)
ImageTensor apply_eta(const ImageTensor& img, const ImageTensor& delta, const SparseIndividual& eta, double epsilon);

Evaluation evaluate(const SparseIndividual& eta, const UniversalPerturbation& delta, std::span<const EvoTarget> targets);

/// Domination order: higher success wins; equal positive success prefers the
/// smaller ||eta||_2; zero success on both sides prefers the larger total loss.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);

/// Front peeling under `dominates`. Indices within a front are ascending.
std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const ObjectiveVector> objectives);

SparseIndividual random_individual(const SearchSpace& space, double step_scale, Rng& rng);

/// Zeroes randomly chosen nonzero genes until l0 <= k.
void repair(SparseIndividual& ind, std::size_t k, Rng& rng);

std::pair<SparseIndividual, SparseIndividual> crossover(const SparseIndividual& p1, const SparseIndividual& p2,
                                                        double p_c, const SearchSpace& space, Rng& rng);

SparseIndividual mutate(const SparseIndividual& ind, double p_m, const SearchSpace& space, Rng& rng);

bool is_feasible(const SparseIndividual& ind, const SearchSpace& space);

struct EvoConfig {
    std::size_t pop_size = 2;
    std::size_t generations = 150;
    std::size_t k = 64;
    double p_c = 0.8;
    double p_m = 0.1;
    double step_scale = 1.0;
    std::uint64_t seed = 0;
};

struct EvoTraceRow {
    std::size_t generation = 0;
    double best_success = 0.0;
    double best_d_tilde = 1.0;
    double best_eta_l2 = 0.0;
    std::vector<std::optional<double>> alpha;  // archived per-model best complementarity
};

struct GenerationView {
    std::size_t generation = 0;
    std::span<const SparseIndividual> population;
    std::span<const Evaluation> evaluations;
};

struct EvoResult {
    SparseIndividual best;
    Evaluation best_evaluation;
    Evaluation baseline;  // eta = 0
    AlphaArchive archive;
    std::vector<EvoTraceRow> trace;
};

/// Generational (mu + lambda) search with binary tournaments on front rank.
EvoResult evolve(const UniversalPerturbation& delta, std::span<const EvoTarget> targets, const EvoConfig& config,
                 const std::function<void(const GenerationView&)>& observer = {});

/// Index of the front-0 member with the highest success, ties to the smaller l2 then lower index.
std::size_t select_best(std::span<const Evaluation> evaluations);

struct EtaFile {
    SparseIndividual eta;
    std::size_t k = 0;
};

void save_eta(const SparseIndividual& eta, std::size_t k, const std::filesystem::path& path);
EtaFile load_eta(const std::filesystem::path& path);

}  // namespace mmattack
