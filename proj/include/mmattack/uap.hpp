#pragma once

// First optimization layer: a dense universal perturbation learned by momentum
// sign-gradient descent on a Mahalanobis triplet loss over cluster centroids.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mmattack/centroids.hpp"
#include "mmattack/dataset.hpp"
#include "mmattack/embedder.hpp"
#include "mmattack/image.hpp"

namespace mmattack {

struct UniversalPerturbation {
    ImageTensor delta;
    double epsilon = 8.0;

    static UniversalPerturbation zeros(Shape shape, double epsilon) { return {ImageTensor(shape), epsilon}; }
    bool operator==(const UniversalPerturbation&) const = default;
};

struct MomentumState {
    ImageTensor v;
    double beta = 0.9;

    static MomentumState zeros(Shape shape, double beta) { return {ImageTensor(shape), beta}; }
};

/// One hinge term of the triplet loss: a bank and the centroids picked from the clean feature.
struct TripletTerm {
    const CentroidBank* bank = nullptr;
    CentroidPair pair;
};

struct TripletResult {
    double loss = 0.0;
    Vector grad;  // d loss / d f_adv
};

/// sum over terms of [D_M(C_n, f) - D_M(C_p, f) + rho]_+ with its exact gradient.
TripletResult triplet_loss(std::span<const double> f_adv, std::span<const TripletTerm> terms, double rho);

/// Two-modality form.
TripletResult triplet_loss(std::span<const double> f_adv, const CentroidBank& bank_m1, const CentroidBank& bank_m2,
                           CentroidPair pair_m1, CentroidPair pair_m2, double rho);

/// Everything needed to attack images of one modality: the modality's model and
/// the banks, expressed in that model's feature space, of each modality in the
/// loss (one bank for a single-modality run, two for an m1/m2 pair).
struct UapModality {
    std::uint16_t modality = 0;
    const ModalityModel* model = nullptr;
    std::vector<const CentroidBank*> banks;
};

struct UapSample {
    const ImageTensor* image = nullptr;
    std::size_t context = 0;          // index into the UapModality list
    std::vector<CentroidPair> pairs;  // one per bank of that context, from the clean feature
};

/// Routes each sample through its modality context and precomputes its centroid pairs.
std::vector<UapSample> prepare_uap_samples(std::span<const Sample* const> samples, std::span<const UapModality> contexts);

struct MetaLossResult {
    double loss = 0.0;
    ImageTensor grad;  // d loss / d delta
};

/// Mean triplet loss over the batch and its gradient with respect to delta.
/// Pixels x + delta are clamped to [0, 255]; saturated pixels pass no gradient.
MetaLossResult meta_loss_and_grad(const ImageTensor& delta, std::span<const UapSample> batch,
                                  std::span<const UapModality> contexts, double rho);

/// v <- beta v + (1 - beta) grad / ||grad||_1 (normalized term is 0 for a zero gradient).
MomentumState momentum_step(const MomentumState& state, std::span<const double> grad);

/// delta <- clip(delta + alpha sign(v), -eps, eps)
UniversalPerturbation update_delta(const UniversalPerturbation& up, const MomentumState& state, double alpha);

struct UapConfig {
    std::uint32_t epochs = 40;
    std::uint32_t batch_size = 16;
    double epsilon = 8.0;
    double rho = 0.5;
    double beta = 0.9;
    /// Step size; 0 means epsilon / 10.
    double alpha = 0.0;
    std::uint64_t seed = 0;

    double step_size() const noexcept { return alpha > 0.0 ? alpha : epsilon / 10.0; }
};

struct UapStep {
    std::size_t step = 0;
    double loss = 0.0;
    const UniversalPerturbation* perturbation = nullptr;
};

struct UapResult {
    UniversalPerturbation perturbation;
    std::vector<double> step_losses;  // meta-loss of each batch before its update
};

/// Shuffled mini-batch loop of meta_loss_and_grad -> momentum_step -> update_delta.
/// The momentum accumulates the negative loss gradient, so the "+alpha sign(v)"
/// update descends the triplet loss.
UapResult learn_uap(std::span<const UapModality> contexts, std::span<const Sample* const> samples,
                    const UapConfig& config, const std::function<void(const UapStep&)>& observer = {});

void save_perturbation(const UniversalPerturbation& up, const std::filesystem::path& path);
UniversalPerturbation load_perturbation(const std::filesystem::path& path);

}  // namespace mmattack
