#pragma once

// Per-modality embedding model: flatten -> affine(d_hidden) -> tanh -> affine(d_feat).
// Pixels are divided by 255 inside the model so perturbations stay in pixel units.
// A classifier head (affine d_feat -> n_identities) exists only for training.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mmattack/dataset.hpp"
#include "mmattack/image.hpp"
#include "mmattack/numerics.hpp"

namespace mmattack {

using Feature = Vector;

enum class Activation : std::uint32_t { tanh = 0, identity = 1 };

struct ModalityModel {
    Shape input_shape;
    std::uint32_t d_hidden = 0;
    std::uint32_t d_feat = 0;
    std::uint32_t n_identities = 0;
    std::uint16_t modality = 0;
    Activation activation = Activation::tanh;

    Matrix w1;  // d_hidden x input
    Vector b1;
    Matrix w2;  // d_feat x d_hidden
    Vector b2;
    Matrix wc;  // n_identities x d_feat, training only
    Vector bc;

    std::size_t input_size() const noexcept { return input_shape.size(); }

    bool operator==(const ModalityModel&) const = default;
};

struct ModelDims {
    Shape shape;
    std::uint32_t d_hidden = 64;
    std::uint32_t d_feat = 16;
    std::uint32_t n_identities = 2;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ModalityModel init_model(const ModelDims& dims, std::uint64_t seed, std::uint16_t modality = 0);

Feature forward(const ModalityModel& model, const ImageTensor& img);

/// d(grad_wrt_feature . F(img)) / d(img), in pixel units.
ImageTensor input_gradient(const ModalityModel& model, const ImageTensor& img, std::span<const double> grad_wrt_feature);

/// Upper bound on ||F(x + d*e_j) - F(x)||_2 / |d| for any single pixel j:
/// ||W1||_F * ||W2||_F / 255 (tanh is 1-Lipschitz).
double single_pixel_lipschitz_bound(const ModalityModel& model);

struct TrainParams {
    std::uint32_t epochs = 60;
    double learning_rate = 0.05;
    std::uint32_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct TrainingResult {
    ModalityModel model;
    /// Mean cross-entropy over the training set, measured after each epoch.
    std::vector<double> epoch_losses;
};

/// Mini-batch gradient descent on identity cross-entropy through the classifier head.
TrainingResult train(ModalityModel model, std::span<const Sample* const> train_samples, const TrainParams& params);

/// Mean identity cross-entropy of the classifier head over `samples`.
double classification_loss(const ModalityModel& model, std::span<const Sample* const> samples);

void save_model(const ModalityModel& model, const std::filesystem::path& path);
ModalityModel load_model(const std::filesystem::path& path);

}  // namespace mmattack
