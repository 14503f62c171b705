#include "mmattack/uap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmattack/binary_io.hpp"
#include "mmattack/errors.hpp"
#include "mmattack/rng.hpp"

namespace mmattack {

namespace {

constexpr std::string_view kUapMagic = "MMUAP01";

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

const UapModality& context_for(std::span<const UapModality> contexts, std::uint16_t modality) {
    for (const auto& c : contexts)
        if (c.modality == modality) return c;
    throw InvalidArgument("uap: no model for modality " + std::to_string(modality));
}

}  // namespace

TripletResult triplet_loss(std::span<const double> f_adv, std::span<const TripletTerm> terms, double rho) {
    if (!(rho >= 0.0)) throw InvalidArgument("triplet_loss: rho must be >= 0");
    TripletResult out;
    out.grad.assign(f_adv.size(), 0.0);
    for (const auto& term : terms) {
        const CentroidBank& bank = *term.bank;
        if (bank.dim() != f_adv.size()) throw InvalidArgument("triplet_loss: feature and bank dimensions differ");
        if (term.pair.nearest >= bank.n_clusters() || term.pair.farthest >= bank.n_clusters()) {
            throw InvalidArgument("triplet_loss: centroid index out of range");
        }
        const Vector& cp = bank.centroids[term.pair.nearest];
        const Vector& cn = bank.centroids[term.pair.farthest];
        const double value = mahalanobis_sq(cn, f_adv, bank.s_inv) - mahalanobis_sq(cp, f_adv, bank.s_inv) + rho;
        if (value <= 0.0) continue;
        out.loss += value;
        // d/df [(f-cn)' S (f-cn) - (f-cp)' S (f-cp)] = 2 S (cp - cn)
        Vector diff(f_adv.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = cp[i] - cn[i];
        const Vector g = mat_vec(bank.s_inv, diff);
        for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += 2.0 * g[i];
    }
    return out;
}

TripletResult triplet_loss(std::span<const double> f_adv, const CentroidBank& bank_m1, const CentroidBank& bank_m2,
                           CentroidPair pair_m1, CentroidPair pair_m2, double rho) {
    const TripletTerm terms[] = {{&bank_m1, pair_m1}, {&bank_m2, pair_m2}};
    return triplet_loss(f_adv, terms, rho);
}

std::vector<UapSample> prepare_uap_samples(std::span<const Sample* const> samples, std::span<const UapModality> contexts) {
    std::vector<UapSample> out;
    out.reserve(samples.size());
    for (const Sample* s : samples) {
        const UapModality& ctx = context_for(contexts, s->modality);
        UapSample u;
        u.image = &s->image;
        u.context = static_cast<std::size_t>(&ctx - contexts.data());
        const Feature clean = forward(*ctx.model, s->image);
        for (const CentroidBank* bank : ctx.banks) u.pairs.push_back(nearest_farthest(clean, *bank));
        out.push_back(std::move(u));
    }
    return out;
}

MetaLossResult meta_loss_and_grad(const ImageTensor& delta, std::span<const UapSample> batch,
                                  std::span<const UapModality> contexts, double rho) {
    if (batch.empty()) throw InvalidArgument("meta_loss_and_grad: empty batch");
    MetaLossResult out;
    out.grad = ImageTensor(delta.shape());
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    for (const auto& sample : batch) {
        if (sample.context >= contexts.size()) throw InvalidArgument("meta_loss_and_grad: bad context index");
        const UapModality& ctx = contexts[sample.context];
        if (sample.pairs.size() != ctx.banks.size()) throw InvalidArgument("meta_loss_and_grad: centroid pairs missing");
        if (sample.image->shape() != delta.shape()) throw InvalidArgument("meta_loss_and_grad: shape mismatch");

        const ImageTensor adv = add_clamped(*sample.image, delta.values());
        const Feature f = forward(*ctx.model, adv);

        std::vector<TripletTerm> terms;
        for (std::size_t b = 0; b < ctx.banks.size(); ++b) terms.push_back({ctx.banks[b], sample.pairs[b]});
        const TripletResult tri = triplet_loss(f, terms, rho);
        out.loss += tri.loss * inv_n;
        if (tri.loss == 0.0) continue;

        const ImageTensor g = input_gradient(*ctx.model, adv, tri.grad);
        const auto pixels = sample.image->values();
        const auto dvals = delta.values();
        auto acc = out.grad.values();
        for (std::size_t i = 0; i < acc.size(); ++i) {
            const double p = pixels[i] + dvals[i];
            if (p > 0.0 && p < 255.0) acc[i] += g[i] * inv_n;
        }
    }
    return out;
}

MomentumState momentum_step(const MomentumState& state, std::span<const double> grad) {
    if (grad.size() != state.v.size()) throw InvalidArgument("momentum_step: shape mismatch");
    if (!all_finite(grad)) throw InvalidArgument("momentum_step: non-finite gradient");
    MomentumState next = state;
    const double norm = l1_norm(grad);
    const double scale = norm > 0.0 ? (1.0 - state.beta) / norm : 0.0;
    auto v = next.v.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = state.beta * v[i] + scale * grad[i];
    return next;
}

UniversalPerturbation update_delta(const UniversalPerturbation& up, const MomentumState& state, double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("update_delta: alpha must be positive");
    if (state.v.shape() != up.delta.shape()) throw InvalidArgument("update_delta: shape mismatch");
    UniversalPerturbation next = up;
    auto d = next.delta.values();
    const auto v = state.v.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * sign(v[i]);
    linf_clip_inplace(d, up.epsilon);
    return next;
}

UapResult learn_uap(std::span<const UapModality> contexts, std::span<const Sample* const> samples,
                    const UapConfig& config, const std::function<void(const UapStep&)>& observer) {
    if (contexts.empty()) throw InvalidArgument("learn_uap: need at least one model");
    if (samples.empty()) throw InvalidArgument("learn_uap: no training samples");
    if (config.batch_size == 0) throw InvalidArgument("learn_uap: batch_size must be positive");
    if (!(config.epsilon > 0.0)) throw InvalidArgument("learn_uap: epsilon must be positive");
    if (!(config.beta >= 0.0 && config.beta < 1.0)) throw InvalidArgument("learn_uap: beta must lie in [0, 1)");
    if (!(config.rho >= 0.0)) throw InvalidArgument("learn_uap: rho must be >= 0");
    for (const auto& c : contexts) {
        if (c.model == nullptr || c.banks.empty()) throw InvalidArgument("learn_uap: incomplete modality context");
        for (const auto* b : c.banks)
            if (b->dim() != c.model->d_feat) throw InvalidArgument("learn_uap: bank dimension differs from model features");
    }
    const Shape shape = samples.front()->image.shape();

    const std::vector<UapSample> prepared = prepare_uap_samples(samples, contexts);
    UapResult result{UniversalPerturbation::zeros(shape, config.epsilon), {}};
    MomentumState state = MomentumState::zeros(shape, config.beta);
    const double alpha = config.step_size();

    Rng rng(config.seed);
    std::vector<std::size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<UapSample> batch;
    std::size_t step = 0;
    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(prepared[order[i]]);

            MetaLossResult meta = meta_loss_and_grad(result.perturbation.delta, batch, contexts, config.rho);
            for (auto& g : meta.grad.values()) g = -g;
            state = momentum_step(state, meta.grad.values());
            result.perturbation = update_delta(result.perturbation, state, alpha);
            result.step_losses.push_back(meta.loss);
            if (observer) observer({step, meta.loss, &result.perturbation});
            ++step;
        }
    }
    return result;
}

void save_perturbation(const UniversalPerturbation& up, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic(kUapMagic);
    const Shape& s = up.delta.shape();
    w.put<std::uint32_t>(s.height);
    w.put<std::uint32_t>(s.width);
    w.put<std::uint32_t>(s.channels);
    w.put<double>(up.epsilon);
    w.put_doubles(up.delta.raw());
    w.save(path);
}

UniversalPerturbation load_perturbation(const std::filesystem::path& path) {
    auto r = io::ByteReader::from_file(path);
    r.expect_magic(kUapMagic);
    Shape s;
    s.height = r.get<std::uint32_t>("height");
    s.width = r.get<std::uint32_t>("width");
    s.channels = r.get<std::uint32_t>("channels");
    if (s.degenerate()) throw FormatError("degenerate perturbation shape", r.position());
    UniversalPerturbation up;
    up.epsilon = r.get<double>("epsilon");
    up.delta = ImageTensor(s, r.get_doubles(s.size(), "perturbation entries"));
    r.expect_end();
    return up;
}

}  // namespace mmattack
