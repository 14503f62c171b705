#pragma once

// Synthetic multi-identity, multi-modality retrieval benchmark.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmattack/image.hpp"

namespace mmattack {

enum class ModalityKind : std::uint8_t {
    identity_pass = 0,
    channel_mix = 1,
    grayscale_collapse = 2,
    intensity_invert = 3,
};

std::string_view to_string(ModalityKind kind);
ModalityKind parse_modality_kind(std::string_view name);

struct ModalitySpec {
    ModalityKind kind = ModalityKind::identity_pass;
    /// Row-stochastic 3x3 matrix, row-major. Only meaningful for channel_mix.
    std::array<double, 9> mix{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::uint64_t seed = 0;

    bool operator==(const ModalitySpec&) const = default;
};

/// Builds a spec of the given kind; channel_mix draws its mixing matrix from `seed`.
ModalitySpec make_modality(ModalityKind kind, std::uint64_t seed);

enum class Split : std::uint8_t { train = 0, query = 1, gallery = 2 };

struct Sample {
    ImageTensor image;
    std::uint32_t identity = 0;
    std::uint16_t modality = 0;
    Split split = Split::train;

    bool operator==(const Sample&) const = default;
};

struct ReidDataset {
    Shape shape;
    std::vector<ModalitySpec> modalities;
    std::vector<Sample> samples;

    std::size_t modality_count() const noexcept { return modalities.size(); }
    std::uint32_t identity_count() const;

    /// Samples of one modality and split, in storage order.
    std::vector<const Sample*> select(std::uint16_t modality, Split split) const;

    bool operator==(const ReidDataset&) const = default;
};

struct GeneratorParams {
    std::uint32_t n_identities = 16;
    std::uint32_t images_per_identity = 10;
    Shape shape{16, 8, 3};
    double noise_sigma = 3.0;
    std::uint64_t seed = 0;
    /// Peak amplitude of the identity-specific component (pixel units).
    double identity_amplitude = 12.0;
    /// Peak amplitude of the background shared by every identity.
    double background_amplitude = 40.0;
    std::uint32_t bumps_per_identity = 4;
    double query_fraction = 0.2;
    double gallery_fraction = 0.2;
};

/// Single-modality base dataset (modality 0, identity-pass). Each image is
/// clamp(prototype + N(0, noise_sigma^2), 0, 255).
ReidDataset generate_identities(const GeneratorParams& params);

ImageTensor apply_modality(const ImageTensor& img, const ModalitySpec& spec);

/// One transformed copy of every base image per spec, modality ids in spec order.
ReidDataset build_multimodal(const ReidDataset& base, const std::vector<ModalitySpec>& specs);

void save_dataset(const ReidDataset& ds, const std::filesystem::path& path);
ReidDataset load_dataset(const std::filesystem::path& path);

}  // namespace mmattack
