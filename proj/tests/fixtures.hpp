#pragma once

// Small deterministic worlds shared by the unit tests.

#include <memory>
#include <random>
#include <vector>

#include "mmattack/centroids.hpp"
#include "mmattack/dataset.hpp"
#include "mmattack/embedder.hpp"
#include "mmattack/rng.hpp"

namespace fixture {

using namespace mmattack;

inline ImageTensor random_image(Shape shape, Rng& rng, double lo = 0.0, double hi = 255.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ImageTensor img(shape);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
    return img;
}

inline Vector random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Random symmetric positive definite matrix A A^T + shift I.
inline Matrix random_spd(std::size_t n, Rng& rng, double shift = 0.5) {
    Matrix a(n, n);
    for (auto& x : a.data()) x = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * a(j, k);
            s(i, j) = acc + (i == j ? shift : 0.0);
        }
    return s;
}

// Random model with nonzero biases so every parameter block matters.
inline ModalityModel random_model(Shape shape, std::uint32_t d_hidden, std::uint32_t d_feat, std::uint64_t seed,
                                  std::uint16_t modality = 0) {
    ModalityModel m = init_model({shape, d_hidden, d_feat, 4}, seed, modality);
    Rng rng(seed ^ 0x5bd1e995u);
    for (auto& b : m.b1) b = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    for (auto& b : m.b2) b = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    return m;
}

inline GeneratorParams small_params(std::uint64_t seed = 7) {
    GeneratorParams p;
    p.n_identities = 6;
    p.images_per_identity = 6;
    p.shape = {6, 4, 3};
    p.seed = seed;
    return p;
}

// Two-modality toy world with trained models and banks.
struct World {
    ReidDataset ds;
    std::vector<ModalityModel> models;
    std::vector<std::unique_ptr<CentroidBank>> banks;  // bank(m) in model m's space over gallery m
};

inline World small_world(std::uint64_t seed = 11) {
    World w;
    const ReidDataset base = generate_identities(small_params(seed));
    w.ds = build_multimodal(base, {make_modality(ModalityKind::identity_pass, 1),
                                   make_modality(ModalityKind::channel_mix, 2)});
    for (std::uint16_t m = 0; m < 2; ++m) {
        ModalityModel model = init_model({w.ds.shape, 24, 6, w.ds.identity_count()}, seed + m, m);
        TrainParams tp;
        tp.epochs = 30;
        tp.seed = seed + 100 + m;
        w.models.push_back(train(std::move(model), w.ds.select(m, Split::train), tp).model);
    }
    for (std::uint16_t m = 0; m < 2; ++m) {
        BankParams bp;
        bp.n_clusters = 4;
        bp.seed = seed + 200 + m;
        w.banks.push_back(std::make_unique<CentroidBank>(build_bank(w.models[m], w.ds.select(m, Split::gallery), bp)));
    }
    return w;
}

}  // namespace fixture
