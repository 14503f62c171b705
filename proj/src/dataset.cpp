#include "mmattack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mmattack/binary_io.hpp"
#include "mmattack/errors.hpp"
#include "mmattack/rng.hpp"

namespace mmattack {

namespace {

constexpr std::string_view kDatasetMagic = "MMREID01";

struct CosineBump {
    double amplitude;
    double freq_h;
    double freq_w;
    double phase;
};

std::vector<CosineBump> draw_bumps(Rng& rng, std::uint32_t count, double amplitude) {
    std::uniform_real_distribution<double> amp(0.5 * amplitude, amplitude);
    std::uniform_real_distribution<double> freq(0.0, 2.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<CosineBump> bumps;
    bumps.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) bumps.push_back({amp(rng), freq(rng), freq(rng), phase(rng)});
    return bumps;
}

// Low-frequency random field: one set of cosine bumps per channel.
void add_field(ImageTensor& img, Rng& rng, std::uint32_t bumps_per_channel, double amplitude) {
    const Shape& s = img.shape();
    for (std::uint32_t c = 0; c < s.channels; ++c) {
        const auto bumps = draw_bumps(rng, bumps_per_channel, amplitude / std::sqrt(static_cast<double>(bumps_per_channel)));
        for (std::uint32_t h = 0; h < s.height; ++h) {
            for (std::uint32_t w = 0; w < s.width; ++w) {
                double v = 0.0;
                for (const auto& b : bumps) {
                    v += b.amplitude * std::cos(2.0 * std::numbers::pi *
                                                    (b.freq_h * h / s.height + b.freq_w * w / s.width) +
                                                b.phase);
                }
                img.at(h, w, c) += v;
            }
        }
    }
}

std::uint32_t split_count(std::uint32_t n, double fraction) {
    const auto raw = static_cast<std::uint32_t>(std::lround(fraction * n));
    return std::max<std::uint32_t>(1, raw);
}

}  // namespace

std::string_view to_string(ModalityKind kind) {
    switch (kind) {
        case ModalityKind::identity_pass: return "identity-pass";
        case ModalityKind::channel_mix: return "channel-mix";
        case ModalityKind::grayscale_collapse: return "grayscale-collapse";
        case ModalityKind::intensity_invert: return "intensity-invert";
    }
    return "unknown";
}

ModalityKind parse_modality_kind(std::string_view name) {
    for (auto k : {ModalityKind::identity_pass, ModalityKind::channel_mix, ModalityKind::grayscale_collapse,
                   ModalityKind::intensity_invert}) {
        if (to_string(k) == name) return k;
    }
    throw InvalidArgument("unknown modality kind: " + std::string(name));
}

ModalitySpec make_modality(ModalityKind kind, std::uint64_t seed) {
    ModalitySpec spec;
    spec.kind = kind;
    spec.seed = seed;
    if (kind == ModalityKind::channel_mix) {
        Rng rng(seed);
        std::uniform_real_distribution<double> weight(0.05, 1.0);
        for (int r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 3; ++c) sum += spec.mix[r * 3 + c] = weight(rng);
            for (int c = 0; c < 3; ++c) spec.mix[r * 3 + c] /= sum;
        }
    }
    return spec;
}

std::uint32_t ReidDataset::identity_count() const {
    std::uint32_t max_id = 0;
    for (const auto& s : samples) max_id = std::max(max_id, s.identity + 1);
    return max_id;
}

std::vector<const Sample*> ReidDataset::select(std::uint16_t modality, Split split) const {
    std::vector<const Sample*> out;
    for (const auto& s : samples)
        if (s.modality == modality && s.split == split) out.push_back(&s);
    return out;
}

ReidDataset generate_identities(const GeneratorParams& params) {
    if (params.shape.degenerate()) throw InvalidArgument("generate_identities: degenerate image shape");
    if (params.n_identities < 2) throw InvalidArgument("generate_identities: need at least 2 identities");
    if (params.images_per_identity < 2) throw InvalidArgument("generate_identities: need at least 2 images per identity");
    if (!(params.noise_sigma >= 0.0)) throw InvalidArgument("generate_identities: noise_sigma must be >= 0");

    Rng rng(params.seed);
    ImageTensor background(params.shape, 128.0);
    add_field(background, rng, 3, params.background_amplitude);

    const std::uint32_t m = params.images_per_identity;
    const std::uint32_t n_query = split_count(m, params.query_fraction);
    const std::uint32_t n_gallery = split_count(m, params.gallery_fraction);
    if (n_query + n_gallery > m) throw InvalidArgument("generate_identities: split fractions exceed images per identity");
    const std::uint32_t n_train = m - n_query - n_gallery;

    ReidDataset ds;
    ds.shape = params.shape;
    ds.modalities = {make_modality(ModalityKind::identity_pass, 0)};
    ds.samples.reserve(static_cast<std::size_t>(params.n_identities) * m);

    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::uint32_t id = 0; id < params.n_identities; ++id) {
        ImageTensor prototype = background;
        add_field(prototype, rng, params.bumps_per_identity, params.identity_amplitude);
        clamp_pixels(prototype);
        for (std::uint32_t j = 0; j < m; ++j) {
            ImageTensor img = prototype;
            if (params.noise_sigma > 0.0) {
                for (auto& v : img.values()) v += params.noise_sigma * noise(rng);
                clamp_pixels(img);
            }
            const Split split = j < n_train ? Split::train : (j < n_train + n_query ? Split::query : Split::gallery);
            ds.samples.push_back({std::move(img), id, 0, split});
        }
    }
    return ds;
}

ImageTensor apply_modality(const ImageTensor& img, const ModalitySpec& spec) {
    const Shape& s = img.shape();
    switch (spec.kind) {
        case ModalityKind::identity_pass:
            return img;
        case ModalityKind::intensity_invert: {
            ImageTensor out = img;
            for (auto& v : out.values()) v = 255.0 - v;
            return out;
        }
        case ModalityKind::grayscale_collapse: {
            ImageTensor out(s);
            for (std::uint32_t h = 0; h < s.height; ++h) {
                for (std::uint32_t w = 0; w < s.width; ++w) {
                    double mean = 0.0;
                    for (std::uint32_t c = 0; c < s.channels; ++c) mean += img.at(h, w, c);
                    mean /= s.channels;
                    for (std::uint32_t c = 0; c < s.channels; ++c) out.at(h, w, c) = mean;
                }
            }
            return out;
        }
        case ModalityKind::channel_mix: {
            if (s.channels != 3) throw InvalidArgument("apply_modality: channel-mix needs 3 channels");
            ImageTensor out(s);
            for (std::uint32_t h = 0; h < s.height; ++h) {
                for (std::uint32_t w = 0; w < s.width; ++w) {
                    for (std::uint32_t c = 0; c < 3; ++c) {
                        double v = 0.0;
                        for (std::uint32_t k = 0; k < 3; ++k) v += spec.mix[c * 3 + k] * img.at(h, w, k);
                        out.at(h, w, c) = v;
                    }
                }
            }
            clamp_pixels(out);
            return out;
        }
    }
    throw InvalidArgument("apply_modality: unknown modality kind");
}

ReidDataset build_multimodal(const ReidDataset& base, const std::vector<ModalitySpec>& specs) {
    if (specs.empty()) throw InvalidArgument("build_multimodal: empty modality list");
    if (base.modalities.size() != 1) throw InvalidArgument("build_multimodal: base must be single-modality");

    ReidDataset out;
    out.shape = base.shape;
    out.modalities = specs;
    out.samples.reserve(base.samples.size() * specs.size());
    for (std::size_t m = 0; m < specs.size(); ++m) {
        for (const auto& s : base.samples) {
            out.samples.push_back({apply_modality(s.image, specs[m]), s.identity, static_cast<std::uint16_t>(m), s.split});
        }
    }
    return out;
}

void save_dataset(const ReidDataset& ds, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic(kDatasetMagic);
    w.put<std::uint32_t>(ds.shape.height);
    w.put<std::uint32_t>(ds.shape.width);
    w.put<std::uint32_t>(ds.shape.channels);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.samples.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.modalities.size()));
    for (const auto& spec : ds.modalities) {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.kind));
        for (double v : spec.mix) w.put(v);
        w.put<std::uint64_t>(spec.seed);
    }
    for (const auto& s : ds.samples) {
        w.put<std::uint32_t>(s.identity);
        w.put<std::uint16_t>(s.modality);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s.split));
        w.put_doubles(s.image.raw());
    }
    w.save(path);
}

ReidDataset load_dataset(const std::filesystem::path& path) {
    auto r = io::ByteReader::from_file(path);
    r.expect_magic(kDatasetMagic);

    ReidDataset ds;
    ds.shape.height = r.get<std::uint32_t>("height");
    ds.shape.width = r.get<std::uint32_t>("width");
    ds.shape.channels = r.get<std::uint32_t>("channels");
    if (ds.shape.degenerate()) throw FormatError("degenerate image shape", r.position());
    const auto n_images = r.get<std::uint32_t>("image count");
    const auto n_modalities = r.get<std::uint32_t>("modality count");

    for (std::uint32_t i = 0; i < n_modalities; ++i) {
        ModalitySpec spec;
        const auto kind_offset = r.position();
        const auto kind = r.get<std::uint8_t>("modality kind");
        if (kind > static_cast<std::uint8_t>(ModalityKind::intensity_invert)) {
            throw FormatError("unknown modality kind " + std::to_string(kind), kind_offset);
        }
        spec.kind = static_cast<ModalityKind>(kind);
        for (auto& v : spec.mix) v = r.get<double>("mix matrix");
        spec.seed = r.get<std::uint64_t>("modality seed");
        ds.modalities.push_back(spec);
    }

    ds.samples.reserve(n_images);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        Sample s;
        s.identity = r.get<std::uint32_t>("identity id");
        const auto modality_offset = r.position();
        s.modality = r.get<std::uint16_t>("modality id");
        if (s.modality >= n_modalities) throw FormatError("modality id out of range", modality_offset);
        const auto split_offset = r.position();
        const auto split = r.get<std::uint8_t>("split tag");
        if (split > static_cast<std::uint8_t>(Split::gallery)) throw FormatError("unknown split tag", split_offset);
        s.split = static_cast<Split>(split);
        s.image = ImageTensor(ds.shape, r.get_doubles(ds.shape.size(), "pixels"));
        ds.samples.push_back(std::move(s));
    }
    r.expect_end();
    return ds;
}

}  // namespace mmattack
