#include "mmattack/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmattack/binary_io.hpp"
#include "mmattack/errors.hpp"
#include "mmattack/rng.hpp"

namespace mmattack {

namespace {

constexpr std::string_view kModelMagic = "MMEMB01";
constexpr double kPixelScale = 1.0 / 255.0;

struct Activations {
    Vector hidden;   // post-activation
    Feature feature;
};

void check_input(const ModalityModel& model, const ImageTensor& img) {
    if (img.shape() != model.input_shape) throw InvalidArgument("embedder: image shape does not match model");
}

double activate(Activation a, double x) { return a == Activation::tanh ? std::tanh(x) : x; }

// Derivative expressed through the activation output.
double activate_grad(Activation a, double y) { return a == Activation::tanh ? 1.0 - y * y : 1.0; }

Activations run(const ModalityModel& m, std::span<const double> pixels) {
    Activations out;
    out.hidden.resize(m.d_hidden);
    for (std::uint32_t j = 0; j < m.d_hidden; ++j) {
        const auto row = m.w1.row(j);
        double acc = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * pixels[i];
        out.hidden[j] = activate(m.activation, acc * kPixelScale + m.b1[j]);
    }
    out.feature = mat_vec(m.w2, out.hidden);
    for (std::uint32_t k = 0; k < m.d_feat; ++k) out.feature[k] += m.b2[k];
    return out;
}

void fill_uniform(Matrix& w, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.data()) v = dist(rng);
}

struct Gradients {
    Matrix w1, w2, wc;
    Vector b1, b2, bc;

    explicit Gradients(const ModalityModel& m)
        : w1(m.w1.rows(), m.w1.cols()), w2(m.w2.rows(), m.w2.cols()), wc(m.wc.rows(), m.wc.cols()),
          b1(m.b1.size()), b2(m.b2.size()), bc(m.bc.size()) {}
};

Vector logits_of(const ModalityModel& m, const Feature& f) {
    Vector z = mat_vec(m.wc, f);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += m.bc[i];
    return z;
}

// Softmax probabilities and cross-entropy for one label.
double softmax_ce(Vector& z, std::uint32_t label) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) sum += (v = std::exp(v - zmax));
    for (auto& v : z) v /= sum;
    return -std::log(std::max(z[label], 1e-300));
}

double accumulate_sample(const ModalityModel& m, const Sample& s, Gradients& g) {
    const auto pixels = s.image.values();
    const Activations act = run(m, pixels);
    Vector p = logits_of(m, act.feature);
    const double loss = softmax_ce(p, s.identity);

    Vector dz = p;
    dz[s.identity] -= 1.0;

    Vector df(m.d_feat, 0.0);
    for (std::uint32_t c = 0; c < m.n_identities; ++c) {
        g.bc[c] += dz[c];
        auto grow = g.wc.row(c);
        const auto wrow = m.wc.row(c);
        for (std::uint32_t k = 0; k < m.d_feat; ++k) {
            grow[k] += dz[c] * act.feature[k];
            df[k] += dz[c] * wrow[k];
        }
    }

    Vector dpre(m.d_hidden, 0.0);
    for (std::uint32_t k = 0; k < m.d_feat; ++k) {
        g.b2[k] += df[k];
        auto grow = g.w2.row(k);
        const auto wrow = m.w2.row(k);
        for (std::uint32_t j = 0; j < m.d_hidden; ++j) {
            grow[j] += df[k] * act.hidden[j];
            dpre[j] += df[k] * wrow[j];
        }
    }
    for (std::uint32_t j = 0; j < m.d_hidden; ++j) {
        dpre[j] *= activate_grad(m.activation, act.hidden[j]);
        g.b1[j] += dpre[j];
        if (dpre[j] == 0.0) continue;
        auto grow = g.w1.row(j);
        const double scale = dpre[j] * kPixelScale;
        for (std::size_t i = 0; i < grow.size(); ++i) grow[i] += scale * pixels[i];
    }
    return loss;
}

void descend(std::vector<double>& params, const std::vector<double>& grad, double step) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
}

}  // namespace

ModalityModel init_model(const ModelDims& dims, std::uint64_t seed, std::uint16_t modality) {
    if (dims.shape.degenerate() || dims.d_hidden == 0 || dims.d_feat == 0 || dims.n_identities == 0) {
        throw InvalidArgument("init_model: dimensions must be positive");
    }
    ModalityModel m;
    m.input_shape = dims.shape;
    m.d_hidden = dims.d_hidden;
    m.d_feat = dims.d_feat;
    m.n_identities = dims.n_identities;
    m.modality = modality;
    m.w1 = Matrix(dims.d_hidden, dims.shape.size());
    m.w2 = Matrix(dims.d_feat, dims.d_hidden);
    m.wc = Matrix(dims.n_identities, dims.d_feat);
    m.b1.assign(dims.d_hidden, 0.0);
    m.b2.assign(dims.d_feat, 0.0);
    m.bc.assign(dims.n_identities, 0.0);

    Rng rng(seed);
    fill_uniform(m.w1, rng);
    fill_uniform(m.w2, rng);
    fill_uniform(m.wc, rng);
    return m;
}

Feature forward(const ModalityModel& model, const ImageTensor& img) {
    check_input(model, img);
    return run(model, img.values()).feature;
}

ImageTensor input_gradient(const ModalityModel& model, const ImageTensor& img, std::span<const double> grad_wrt_feature) {
    check_input(model, img);
    if (grad_wrt_feature.size() != model.d_feat) throw InvalidArgument("input_gradient: feature gradient has wrong length");

    ImageTensor grad(model.input_shape);
    if (std::all_of(grad_wrt_feature.begin(), grad_wrt_feature.end(), [](double v) { return v == 0.0; })) return grad;

    const Activations act = run(model, img.values());
    Vector dpre(model.d_hidden, 0.0);
    for (std::uint32_t k = 0; k < model.d_feat; ++k) {
        const auto wrow = model.w2.row(k);
        for (std::uint32_t j = 0; j < model.d_hidden; ++j) dpre[j] += grad_wrt_feature[k] * wrow[j];
    }
    auto out = grad.values();
    for (std::uint32_t j = 0; j < model.d_hidden; ++j) {
        const double scale = dpre[j] * activate_grad(model.activation, act.hidden[j]) * kPixelScale;
        if (scale == 0.0) continue;
        const auto wrow = model.w1.row(j);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * wrow[i];
    }
    return grad;
}

double single_pixel_lipschitz_bound(const ModalityModel& model) {
    return frobenius_norm(model.w1) * frobenius_norm(model.w2) * kPixelScale;
}

double classification_loss(const ModalityModel& model, std::span<const Sample* const> samples) {
    if (samples.empty()) throw InvalidArgument("classification_loss: empty sample set");
    double total = 0.0;
    for (const Sample* s : samples) {
        Vector z = logits_of(model, run(model, s->image.values()).feature);
        total += softmax_ce(z, s->identity);
    }
    return total / static_cast<double>(samples.size());
}

TrainingResult train(ModalityModel model, std::span<const Sample* const> train_samples, const TrainParams& params) {
    if (train_samples.empty()) throw InvalidArgument("train: empty training split");
    if (params.batch_size == 0) throw InvalidArgument("train: batch_size must be positive");
    std::vector<std::uint32_t> seen;
    for (const Sample* s : train_samples) {
        if (s->image.shape() != model.input_shape) throw InvalidArgument("train: sample shape does not match model");
        if (s->identity >= model.n_identities) throw InvalidArgument("train: identity label exceeds classifier size");
        if (std::find(seen.begin(), seen.end(), s->identity) == seen.end()) seen.push_back(s->identity);
    }
    if (seen.size() < 2) throw InvalidArgument("train: need at least 2 identities");

    TrainingResult result;
    Rng rng(params.seed);
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::uint32_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
            const std::size_t end = std::min(order.size(), start + params.batch_size);
            Gradients g(model);
            for (std::size_t i = start; i < end; ++i) accumulate_sample(model, *train_samples[order[i]], g);
            const double step = params.learning_rate / static_cast<double>(end - start);
            descend(model.w1.data(), g.w1.data(), step);
            descend(model.b1, g.b1, step);
            descend(model.w2.data(), g.w2.data(), step);
            descend(model.b2, g.b2, step);
            descend(model.wc.data(), g.wc.data(), step);
            descend(model.bc, g.bc, step);
        }
        result.epoch_losses.push_back(classification_loss(model, train_samples));
    }
    result.model = std::move(model);
    return result;
}

void save_model(const ModalityModel& m, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic(kModelMagic);
    w.put<std::uint32_t>(m.input_shape.height);
    w.put<std::uint32_t>(m.input_shape.width);
    w.put<std::uint32_t>(m.input_shape.channels);
    w.put<std::uint32_t>(m.d_hidden);
    w.put<std::uint32_t>(m.d_feat);
    w.put<std::uint32_t>(m.n_identities);
    w.put<std::uint32_t>(m.modality);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.activation));
    w.put_doubles(m.w1.data());
    w.put_doubles(m.b1);
    w.put_doubles(m.w2.data());
    w.put_doubles(m.b2);
    w.put_doubles(m.wc.data());
    w.put_doubles(m.bc);
    w.save(path);
}

ModalityModel load_model(const std::filesystem::path& path) {
    auto r = io::ByteReader::from_file(path);
    r.expect_magic(kModelMagic);
    ModalityModel m;
    m.input_shape.height = r.get<std::uint32_t>("height");
    m.input_shape.width = r.get<std::uint32_t>("width");
    m.input_shape.channels = r.get<std::uint32_t>("channels");
    m.d_hidden = r.get<std::uint32_t>("d_hidden");
    m.d_feat = r.get<std::uint32_t>("d_feat");
    m.n_identities = r.get<std::uint32_t>("n_identities");
    const auto header_end = r.position();
    const auto modality = r.get<std::uint32_t>("modality");
    const auto activation = r.get<std::uint32_t>("activation");
    if (m.input_shape.degenerate() || m.d_hidden == 0 || m.d_feat == 0 || m.n_identities == 0) {
        throw FormatError("zero model dimension", header_end);
    }
    if (modality > 0xffff || activation > 1) throw FormatError("invalid model header", header_end);
    m.modality = static_cast<std::uint16_t>(modality);
    m.activation = static_cast<Activation>(activation);

    const std::size_t in = m.input_shape.size();
    m.w1 = Matrix(m.d_hidden, in, r.get_doubles(m.d_hidden * in, "w1"));
    m.b1 = r.get_doubles(m.d_hidden, "b1");
    m.w2 = Matrix(m.d_feat, m.d_hidden, r.get_doubles(static_cast<std::size_t>(m.d_feat) * m.d_hidden, "w2"));
    m.b2 = r.get_doubles(m.d_feat, "b2");
    m.wc = Matrix(m.n_identities, m.d_feat, r.get_doubles(static_cast<std::size_t>(m.n_identities) * m.d_feat, "wc"));
    m.bc = r.get_doubles(m.n_identities, "bc");
    r.expect_end();
    return m;
}

}  // namespace mmattack
