#include "mmattack/evo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "mmattack/binary_io.hpp"
#include "mmattack/errors.hpp"

namespace mmattack {

namespace {

constexpr std::string_view kEtaMagic = "MMETA01";

std::size_t pixel_index(const Gene& g, const Shape& shape) { return shape.index(g.h, g.w, g.c); }

Gene gene_at(std::size_t index, const Shape& shape, std::int8_t value) {
    Gene g;
    g.c = static_cast<std::uint8_t>(index % shape.channels);
    const std::size_t hw = index / shape.channels;
    g.w = static_cast<std::uint16_t>(hw % shape.width);
    g.h = static_cast<std::uint16_t>(hw / shape.width);
    g.value = value;
    return g;
}

void check_space(const Shape& shape) {
    if (shape.degenerate() || shape.height > 0xffff || shape.width > 0xffff || shape.channels > 0xff) {
        throw InvalidArgument("evo: image shape does not fit the gene encoding");
    }
}

std::int8_t random_sign(Rng& rng) { return bernoulli(rng, 0.5) ? std::int8_t{1} : std::int8_t{-1}; }

// Among the two other ternary values, uniformly.
std::int8_t flipped(std::int8_t value, Rng& rng) {
    const bool first = bernoulli(rng, 0.5);
    switch (value) {
        case -1: return first ? 0 : 1;
        case 0: return first ? -1 : 1;
        default: return first ? -1 : 0;
    }
}

}  // namespace

std::size_t SparseIndividual::l0() const noexcept {
    return static_cast<std::size_t>(std::count_if(genes.begin(), genes.end(), [](const Gene& g) { return g.value != 0; }));
}

std::vector<double> SparseIndividual::dense(const Shape& shape) const {
    std::vector<double> out(shape.size(), 0.0);
    for (const auto& g : genes) {
        if (g.h >= shape.height || g.w >= shape.width || g.c >= shape.channels) {
            throw InvalidArgument("eta: gene position outside the image");
        }
        out[pixel_index(g, shape)] = step_scale * g.value;
    }
    return out;
}

ObjectiveVector ObjectiveVector::from_loss(double total_loss, double s_tilde, double eta_l2) {
    return {std::exp(-total_loss), s_tilde, eta_l2, total_loss};
}

ObjectiveVector ObjectiveVector::from_d_tilde(double d_tilde, double s_tilde, double eta_l2) {
    return {d_tilde, s_tilde, eta_l2, -std::log(d_tilde)};
}

EvoTarget make_target(const ModalityModel& model, const CentroidBank& bank, std::span<const Sample* const> eval_batch,
                      std::span<const Sample* const> gallery) {
    if (eval_batch.empty()) throw InvalidArgument("make_target: empty evaluation batch");
    if (gallery.empty()) throw InvalidArgument("make_target: empty gallery");
    if (bank.dim() != model.d_feat) throw InvalidArgument("make_target: bank dimension differs from model features");
    EvoTarget t;
    t.modality = model.modality;
    t.model = &model;
    t.bank = &bank;
    for (const Sample* s : eval_batch) {
        if (s->modality != model.modality) throw InvalidArgument("make_target: batch sample from another modality");
        t.images.push_back(&s->image);
        t.labels.push_back(s->identity);
        t.home_centroid.push_back(nearest_farthest(forward(model, s->image), bank).nearest);
    }
    for (const Sample* s : gallery) {
        if (s->modality != model.modality) throw InvalidArgument("make_target: gallery sample from another modality");
        t.gallery_features.push_back(forward(model, s->image));
        t.gallery_labels.push_back(s->identity);
    }
    return t;
}

std::vector<double> combined_perturbation(const ImageTensor& delta, const SparseIndividual& eta, double epsilon) {
    std::vector<double> out = eta.dense(delta.shape());
    const auto d = delta.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    linf_clip_inplace(out, epsilon);
    return out;
}

ImageTensor apply_eta(const ImageTensor& img, const ImageTensor& delta, const SparseIndividual& eta, double epsilon) {
    if (img.shape() != delta.shape()) throw InvalidArgument("apply_eta: image and delta shapes differ");
    return add_clamped(img, combined_perturbation(delta, eta, epsilon));
}

Evaluation evaluate(const SparseIndividual& eta, const UniversalPerturbation& delta, std::span<const EvoTarget> targets) {
    if (targets.empty()) throw InvalidArgument("evaluate: no target models");
    const std::vector<double> combined = combined_perturbation(delta.delta, eta, delta.epsilon);

    Evaluation ev;
    double total_loss = 0.0;
    double success_sum = 0.0;
    for (const auto& t : targets) {
        if (t.model->modality != t.modality || t.bank->dim() != t.model->d_feat) {
            throw InvalidArgument("evaluate: model/bank/batch modality mismatch");
        }
        double loss = 0.0;
        std::size_t hits = 0;
        for (std::size_t j = 0; j < t.images.size(); ++j) {
            const Feature f = forward(*t.model, add_clamped(*t.images[j], combined));
            loss += mahalanobis_sq(f, t.bank->centroids[t.home_centroid[j]], t.bank->s_inv);

            std::size_t nn = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t g = 0; g < t.gallery_features.size(); ++g) {
                const double d = squared_euclidean(f, t.gallery_features[g]);
                if (d < best) {
                    best = d;
                    nn = g;
                }
            }
            if (t.gallery_labels[nn] != t.labels[j]) ++hits;
        }
        const double n = static_cast<double>(t.images.size());
        const double rate = static_cast<double>(hits) / n;
        const int indicator = 2 * hits > t.images.size() ? 1 : 0;
        ev.model_losses.push_back(loss / n);
        ev.model_rates.push_back(rate);
        ev.model_success.push_back(indicator);
        total_loss += loss / n;
        success_sum += indicator;
    }
    const double s_tilde = 1.0 - success_sum / static_cast<double>(targets.size());
    const double l2 = eta.step_scale * std::sqrt(static_cast<double>(eta.l0()));
    ev.objectives = ObjectiveVector::from_loss(total_loss, s_tilde, l2);
    return ev;
}

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
    const double sa = a.success();
    const double sb = b.success();
    if (sa > sb) return true;
    if (sa != sb) return false;
    if (sa > 0.0) return a.eta_l2 < b.eta_l2;
    return a.total_loss > b.total_loss;
}

std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const ObjectiveVector> objectives) {
    const std::size_t n = objectives.size();
    std::vector<std::vector<std::size_t>> dominated_by_me(n);
    std::vector<std::size_t> domination_count(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(objectives[i], objectives[j])) {
                dominated_by_me[i].push_back(j);
                ++domination_count[j];
            }
        }
    }
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i)
        if (domination_count[i] == 0) current.push_back(i);
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (auto i : current) {
            for (auto j : dominated_by_me[i])
                if (--domination_count[j] == 0) next.push_back(j);
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

SparseIndividual random_individual(const SearchSpace& space, double step_scale, Rng& rng) {
    check_space(space.shape);
    const std::size_t n = space.shape.size();
    const std::size_t count = std::min(space.k, n);
    // Partial Fisher-Yates over pixel indices.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    SparseIndividual ind;
    ind.step_scale = step_scale;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(pool[i], pool[j]);
        ind.genes.push_back(gene_at(pool[i], space.shape, random_sign(rng)));
    }
    return ind;
}

void repair(SparseIndividual& ind, std::size_t k, Rng& rng) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < ind.genes.size(); ++i)
        if (ind.genes[i].value != 0) active.push_back(i);
    while (active.size() > k) {
        const std::size_t pick = uniform_index(rng, active.size());
        ind.genes[active[pick]].value = 0;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
    }
}

std::pair<SparseIndividual, SparseIndividual> crossover(const SparseIndividual& p1, const SparseIndividual& p2,
                                                        double p_c, const SearchSpace& space, Rng& rng) {
    if (!bernoulli(rng, p_c)) return {p1, p2};

    struct Slot {
        std::optional<Gene> from1;
        std::optional<Gene> from2;
    };
    std::vector<std::size_t> order;
    std::unordered_map<std::size_t, Slot> slots;
    for (const auto& g : p1.genes) {
        const auto idx = pixel_index(g, space.shape);
        if (!slots.contains(idx)) order.push_back(idx);
        slots[idx].from1 = g;
    }
    for (const auto& g : p2.genes) {
        const auto idx = pixel_index(g, space.shape);
        if (!slots.contains(idx)) order.push_back(idx);
        slots[idx].from2 = g;
    }

    SparseIndividual c1{{}, p1.step_scale};
    SparseIndividual c2{{}, p1.step_scale};
    for (auto idx : order) {
        const Slot& s = slots[idx];
        const bool swap = bernoulli(rng, 0.5);
        if (s.from1 && s.from2) {
            c1.genes.push_back(swap ? *s.from2 : *s.from1);
            c2.genes.push_back(swap ? *s.from1 : *s.from2);
        } else {
            const Gene& g = s.from1 ? *s.from1 : *s.from2;
            (swap ? c2 : c1).genes.push_back(g);
        }
    }
    repair(c1, space.k, rng);
    repair(c2, space.k, rng);
    return {std::move(c1), std::move(c2)};
}

SparseIndividual mutate(const SparseIndividual& ind, double p_m, const SearchSpace& space, Rng& rng) {
    if (p_m <= 0.0) return ind;
    SparseIndividual out = ind;
    const std::size_t n = space.shape.size();
    std::unordered_set<std::size_t> used;
    for (const auto& g : out.genes) used.insert(pixel_index(g, space.shape));

    for (auto& g : out.genes) {
        if (!bernoulli(rng, p_m)) continue;
        const bool relocate = bernoulli(rng, 0.5) && used.size() < n;
        if (!relocate) {
            g.value = flipped(g.value, rng);
            continue;
        }
        std::size_t target;
        do {
            target = uniform_index(rng, n);
        } while (used.contains(target));
        used.erase(pixel_index(g, space.shape));
        used.insert(target);
        g = gene_at(target, space.shape, g.value);
    }
    repair(out, space.k, rng);
    return out;
}

bool is_feasible(const SparseIndividual& ind, const SearchSpace& space) {
    if (ind.l0() > space.k) return false;
    std::unordered_set<std::size_t> seen;
    for (const auto& g : ind.genes) {
        if (g.value < -1 || g.value > 1) return false;
        if (g.h >= space.shape.height || g.w >= space.shape.width || g.c >= space.shape.channels) return false;
        if (!seen.insert(pixel_index(g, space.shape)).second) return false;
    }
    return true;
}

std::size_t select_best(std::span<const Evaluation> evaluations) {
    std::vector<ObjectiveVector> objs;
    for (const auto& e : evaluations) objs.push_back(e.objectives);
    const auto fronts = nondominated_sort(objs);
    std::size_t best = fronts.front().front();
    for (auto i : fronts.front()) {
        const auto& a = objs[i];
        const auto& b = objs[best];
        if (a.success() > b.success() || (a.success() == b.success() && a.eta_l2 < b.eta_l2)) best = i;
    }
    return best;
}

namespace {

struct Ranked {
    std::vector<std::size_t> rank;
    std::vector<std::vector<std::size_t>> fronts;
};

Ranked rank_population(std::span<const Evaluation> evals) {
    std::vector<ObjectiveVector> objs;
    for (const auto& e : evals) objs.push_back(e.objectives);
    Ranked r;
    r.fronts = nondominated_sort(objs);
    r.rank.assign(evals.size(), 0);
    for (std::size_t f = 0; f < r.fronts.size(); ++f)
        for (auto i : r.fronts[f]) r.rank[i] = f;
    return r;
}

std::size_t tournament(const Ranked& ranked, std::span<const Evaluation> evals, Rng& rng) {
    const std::size_t n = evals.size();
    const std::size_t a = uniform_index(rng, n);
    std::size_t b = uniform_index(rng, n - 1);
    if (b >= a) ++b;
    if (ranked.rank[a] != ranked.rank[b]) return ranked.rank[a] < ranked.rank[b] ? a : b;
    // Equal rank: keep the larger summed distance.
    return evals[b].objectives.total_loss > evals[a].objectives.total_loss ? b : a;
}

std::vector<std::optional<double>> observed_alpha(std::span<const Evaluation> evals, const Evaluation& baseline) {
    std::vector<std::optional<double>> out(baseline.model_rates.size());
    for (const auto& e : evals) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto a = complementarity(baseline.model_rates[i], e.model_rates[i]);
            if (a && (!out[i] || *a > *out[i])) out[i] = a;
        }
    }
    return out;
}

EvoTraceRow trace_row(std::size_t generation, std::span<const Evaluation> evals, const AlphaArchive& archive) {
    EvoTraceRow row;
    row.generation = generation;
    row.best_success = -1.0;
    row.best_d_tilde = std::numeric_limits<double>::infinity();
    row.best_eta_l2 = std::numeric_limits<double>::infinity();
    for (const auto& e : evals) row.best_success = std::max(row.best_success, e.objectives.success());
    for (const auto& e : evals) {
        row.best_d_tilde = std::min(row.best_d_tilde, e.objectives.d_tilde);
        if (e.objectives.success() == row.best_success) row.best_eta_l2 = std::min(row.best_eta_l2, e.objectives.eta_l2);
    }
    row.alpha = archive.best;
    return row;
}

}  // namespace

EvoResult evolve(const UniversalPerturbation& delta, std::span<const EvoTarget> targets, const EvoConfig& config,
                 const std::function<void(const GenerationView&)>& observer) {
    if (config.pop_size < 2) throw InvalidArgument("evolve: pop_size must be at least 2");
    if (config.generations < 1) throw InvalidArgument("evolve: generations must be at least 1");
    if (config.k == 0) throw InvalidArgument("evolve: k must be positive");
    if (!(config.step_scale > 0.0)) throw InvalidArgument("evolve: step_scale must be positive");
    if (!(config.p_c >= 0.0 && config.p_c <= 1.0 && config.p_m >= 0.0 && config.p_m <= 1.0)) {
        throw InvalidArgument("evolve: p_c and p_m must lie in [0, 1]");
    }
    if (targets.empty()) throw InvalidArgument("evolve: no target models");
    check_space(delta.delta.shape());

    const SearchSpace space{delta.delta.shape(), config.k};
    Rng rng(config.seed);

    EvoResult result;
    result.baseline = evaluate(SparseIndividual{{}, config.step_scale}, delta, targets);
    result.archive = AlphaArchive::with_baselines(result.baseline.model_rates);

    std::vector<SparseIndividual> pop;
    std::vector<Evaluation> evals;
    for (std::size_t i = 0; i < config.pop_size; ++i) {
        pop.push_back(random_individual(space, config.step_scale, rng));
        evals.push_back(evaluate(pop.back(), delta, targets));
    }

    auto record = [&](std::size_t generation) {
        result.archive = update_archive(std::move(result.archive), observed_alpha(evals, result.baseline));
        result.trace.push_back(trace_row(generation, evals, result.archive));
        if (observer) observer({generation, pop, evals});
    };
    record(0);

    for (std::size_t gen = 1; gen < config.generations; ++gen) {
        const Ranked ranked = rank_population(evals);
        std::vector<SparseIndividual> offspring;
        while (offspring.size() < config.pop_size) {
            const auto& p1 = pop[tournament(ranked, evals, rng)];
            const auto& p2 = pop[tournament(ranked, evals, rng)];
            auto [c1, c2] = crossover(p1, p2, config.p_c, space, rng);
            offspring.push_back(mutate(c1, config.p_m, space, rng));
            if (offspring.size() < config.pop_size) offspring.push_back(mutate(c2, config.p_m, space, rng));
        }

        std::vector<SparseIndividual> merged = pop;
        std::vector<Evaluation> merged_evals = evals;
        for (auto& child : offspring) {
            merged_evals.push_back(evaluate(child, delta, targets));
            merged.push_back(std::move(child));
        }

        const Ranked merged_rank = rank_population(merged_evals);
        std::vector<std::size_t> survivors;
        for (const auto& front : merged_rank.fronts) {
            if (survivors.size() >= config.pop_size) break;
            std::vector<std::size_t> members = front;
            std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                const auto& oa = merged_evals[a].objectives;
                const auto& ob = merged_evals[b].objectives;
                if (oa.total_loss != ob.total_loss) return oa.total_loss > ob.total_loss;
                return oa.eta_l2 < ob.eta_l2;
            });
            for (auto i : members) {
                if (survivors.size() >= config.pop_size) break;
                survivors.push_back(i);
            }
        }
        std::vector<SparseIndividual> next_pop;
        std::vector<Evaluation> next_evals;
        for (auto i : survivors) {
            next_pop.push_back(std::move(merged[i]));
            next_evals.push_back(std::move(merged_evals[i]));
        }
        pop = std::move(next_pop);
        evals = std::move(next_evals);
        record(gen);
    }

    const std::size_t best = select_best(evals);
    result.best = pop[best];
    result.best_evaluation = evals[best];
    return result;
}

void save_eta(const SparseIndividual& eta, std::size_t k, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic(kEtaMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(k));
    w.put<double>(eta.step_scale);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(eta.genes.size()));
    for (const auto& g : eta.genes) {
        w.put<std::uint16_t>(g.h);
        w.put<std::uint16_t>(g.w);
        w.put<std::uint8_t>(g.c);
        w.put<std::int8_t>(g.value);
    }
    w.save(path);
}

EtaFile load_eta(const std::filesystem::path& path) {
    auto r = io::ByteReader::from_file(path);
    r.expect_magic(kEtaMagic);
    EtaFile out;
    out.k = r.get<std::uint32_t>("k");
    out.eta.step_scale = r.get<double>("step_scale");
    const auto count = r.get<std::uint32_t>("gene count");
    for (std::uint32_t i = 0; i < count; ++i) {
        Gene g;
        g.h = r.get<std::uint16_t>("gene h");
        g.w = r.get<std::uint16_t>("gene w");
        g.c = r.get<std::uint8_t>("gene c");
        const auto value_offset = r.position();
        g.value = r.get<std::int8_t>("gene value");
        if (g.value < -1 || g.value > 1) throw FormatError("gene value outside {-1, 0, 1}", value_offset);
        out.eta.genes.push_back(g);
    }
    r.expect_end();
    return out;
}

}  // namespace mmattack
