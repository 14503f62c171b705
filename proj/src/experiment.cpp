#include "mmattack/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "mmattack/errors.hpp"
#include "mmattack/metrics.hpp"
#include "mmattack/rng.hpp"

namespace mmattack {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t cluster_count(const ExperimentConfig& c) { return c.n_clusters ? c.n_clusters : c.n_identities; }

BankParams bank_params(const ExperimentConfig& c, std::uint16_t model_modality, std::uint16_t gallery_modality) {
    BankParams p;
    p.n_clusters = cluster_count(c);
    p.lambda_reg = c.lambda_reg;
    p.kmeans_iters = c.kmeans_iters;
    p.seed = derive_seed(c.seed, "bank", static_cast<std::uint64_t>(model_modality) << 16 | gallery_modality);
    return p;
}

std::string role_of(const ExperimentConfig& c, std::uint16_t m) {
    if (std::find(c.source.begin(), c.source.end(), m) != c.source.end()) return "source";
    if (std::find(c.auxiliaries.begin(), c.auxiliaries.end(), m) != c.auxiliaries.end()) return "auxiliary";
    if (m == c.held_out) return "held-out";
    return "unused";
}

std::string modality_name(const ReidDataset& ds, std::uint16_t m) {
    return std::to_string(m) + ":" + std::string(to_string(ds.modalities.at(m).kind));
}

// Gradient layer state: banks live in each source model's feature space, one per source modality.
struct UapSetup {
    std::vector<std::unique_ptr<CentroidBank>> banks;
    std::vector<UapModality> contexts;
    std::vector<const Sample*> samples;
};

UapSetup prepare_uap(const ExperimentConfig& c, const ReidDataset& ds, const ModelProvider& models) {
    UapSetup setup;
    for (auto m : c.source) {
        const ModalityModel& model = models(m);
        UapModality ctx{m, &model, {}};
        for (auto other : c.source) {
            const auto gallery = ds.select(other, Split::gallery);
            setup.banks.push_back(std::make_unique<CentroidBank>(build_bank(model, gallery, bank_params(c, m, other))));
            ctx.banks.push_back(setup.banks.back().get());
        }
        setup.contexts.push_back(std::move(ctx));
        for (const Sample* s : ds.select(m, Split::train)) setup.samples.push_back(s);
    }
    return setup;
}

UapConfig uap_config(const ExperimentConfig& c) {
    UapConfig u;
    u.epochs = c.uap_epochs;
    u.batch_size = c.uap_batch;
    u.epsilon = c.epsilon;
    u.rho = c.rho;
    u.beta = c.beta;
    u.alpha = c.alpha;
    u.seed = derive_seed(c.effective_attack_seed(), "uap");
    return u;
}

EvoConfig evo_config(const ExperimentConfig& c) {
    EvoConfig e;
    e.pop_size = c.pop_size;
    e.generations = c.generations;
    e.k = c.k;
    e.p_c = c.p_c;
    e.p_m = c.p_m;
    e.step_scale = c.step_scale;
    e.seed = derive_seed(c.effective_attack_seed(), "evo");
    return e;
}

struct EvoSetup {
    std::vector<std::unique_ptr<CentroidBank>> banks;
    std::vector<EvoTarget> targets;
};

EvoSetup prepare_evo(const ExperimentConfig& c, const ReidDataset& ds, const ModelProvider& models,
                     std::span<const std::uint16_t> modalities) {
    EvoSetup setup;
    for (auto m : modalities) {
        const ModalityModel& model = models(m);
        const auto gallery = ds.select(m, Split::gallery);
        auto batch = ds.select(m, Split::train);
        if (c.evo_batch > 0 && batch.size() > c.evo_batch) batch.resize(c.evo_batch);
        setup.banks.push_back(std::make_unique<CentroidBank>(build_bank(model, gallery, bank_params(c, m, m))));
        setup.targets.push_back(make_target(model, *setup.banks.back(), batch, gallery));
    }
    return setup;
}

double aux_fitness(const ExperimentConfig& c, const Evaluation& ev, std::size_t l0) {
    FitnessParams params;
    params.weights.assign(ev.model_rates.size(), 1.0 / static_cast<double>(ev.model_rates.size()));
    params.lambda_sparsity = c.fitness_lambda;
    return fitness(ev.model_rates, params, l0);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

std::string_view to_string(AttackMode mode) { return mode == AttackMode::grad_only ? "grad-only" : "dual-layer"; }

AttackMode parse_attack_mode(std::string_view name) {
    if (name == "grad-only") return AttackMode::grad_only;
    if (name == "dual-layer") return AttackMode::dual_layer;
    throw ConfigError("unknown attack mode: " + std::string(name));
}

ReidDataset make_dataset(const ExperimentConfig& c) {
    c.validate();
    GeneratorParams g;
    g.n_identities = c.n_identities;
    g.images_per_identity = c.images_per_identity;
    g.shape = c.shape;
    g.noise_sigma = c.noise_sigma;
    g.identity_amplitude = c.identity_amplitude;
    g.background_amplitude = c.background_amplitude;
    g.seed = derive_seed(c.seed, "data");
    const ReidDataset base = generate_identities(g);

    std::vector<ModalitySpec> specs;
    for (std::size_t m = 0; m < c.modalities.size(); ++m) specs.push_back(make_modality(c.modalities[m], derive_seed(c.seed, "modality", m)));
    return build_multimodal(base, specs);
}

ModalityModel train_modality(const ExperimentConfig& c, const ReidDataset& ds, std::uint16_t modality) {
    ModelDims dims{ds.shape, c.d_hidden, c.d_feat, ds.identity_count()};
    ModalityModel model = init_model(dims, derive_seed(c.seed, "init", modality), modality);
    TrainParams p;
    p.epochs = c.train_epochs;
    p.learning_rate = c.train_lr;
    p.batch_size = c.train_batch;
    p.seed = derive_seed(c.seed, "train", modality);
    return train(std::move(model), ds.select(modality, Split::train), p).model;
}

RetrievalMetrics evaluate_retrieval(const ModalityModel& model, const ReidDataset& ds, std::uint16_t modality,
                                    std::span<const double> perturbation) {
    const auto queries = ds.select(modality, Split::query);
    const auto gallery = ds.select(modality, Split::gallery);
    std::vector<Feature> qf, gf;
    std::vector<std::uint32_t> ql, gl;
    for (const Sample* s : queries) {
        qf.push_back(perturbation.empty() ? forward(model, s->image) : forward(model, add_clamped(s->image, perturbation)));
        ql.push_back(s->identity);
    }
    for (const Sample* s : gallery) {
        gf.push_back(forward(model, s->image));
        gl.push_back(s->identity);
    }
    const DistanceMatrix dm = euclidean_distances(qf, ql, gf, gl);
    const std::size_t ks[] = {1, 5, 10};
    const auto cmc = cmc_rank(dm, ks);
    RetrievalMetrics out;
    out.rank1 = cmc.at(1);
    out.rank5 = cmc.at(5);
    out.rank10 = cmc.at(10);
    out.map = mean_ap(dm);
    out.success_rate = attack_success(dm).rate;
    return out;
}

const MetricsRow& AttackReport::row(std::string_view phase, std::uint16_t modality) const {
    for (const auto& r : metrics)
        if (r.phase == phase && r.modality == modality) return r;
    throw InvalidArgument("attack report: no row for phase " + std::string(phase) + ", modality " + std::to_string(modality));
}

std::vector<std::uint16_t> evo_modalities(const ExperimentConfig& c) {
    if (c.evo_models == 0) {
        if (c.auxiliaries.empty()) throw ConfigError("config: dual-layer attack needs at least one auxiliary modality");
        return c.auxiliaries;
    }
    std::vector<std::uint16_t> candidates = c.auxiliaries;
    candidates.insert(candidates.end(), c.source.begin(), c.source.end());
    if (c.evo_models > candidates.size()) {
        throw ConfigError("config: evo_models=" + std::to_string(c.evo_models) + " exceeds the " +
                          std::to_string(candidates.size()) + " non-held-out modalities");
    }
    candidates.resize(c.evo_models);
    return candidates;
}

AttackReport run_attack(const ExperimentConfig& c, const ReidDataset& ds, const ModelProvider& models, AttackMode mode,
                        const AttackHooks& hooks) {
    c.validate();
    if (ds.modality_count() != c.modalities.size()) throw ConfigError("dataset modality count does not match config");
    auto phase = [&](std::string_view name) {
        if (hooks.on_phase) hooks.on_phase(name);
    };

    AttackReport report;
    report.mode = mode;
    report.run_id = std::string(to_string(mode)) + "-seed" + std::to_string(c.seed) + "-attack" +
                    std::to_string(c.effective_attack_seed());

    phase("uap");
    UapSetup uap = prepare_uap(c, ds, models);
    auto start = Clock::now();
    report.delta = learn_uap(uap.contexts, uap.samples, uap_config(c)).perturbation;
    report.timings.uap_seconds = seconds_since(start);

    std::vector<double> combined;
    if (mode == AttackMode::dual_layer) {
        phase("evolve");
        report.evo_modalities = evo_modalities(c);
        EvoSetup evo = prepare_evo(c, ds, models, report.evo_modalities);
        start = Clock::now();
        report.evo = evolve(report.delta, evo.targets, evo_config(c));
        report.timings.evo_seconds = seconds_since(start);
        combined = combined_perturbation(report.delta.delta, report.evo->best, c.epsilon);
    }

    phase("evaluate");
    start = Clock::now();
    std::optional<double> fit;
    if (report.evo) fit = aux_fitness(c, report.evo->best_evaluation, report.evo->best.l0());
    for (std::uint16_t m = 0; m < ds.modality_count(); ++m) {
        const std::string role = role_of(c, m);
        if (role == "unused") continue;
        const ModalityModel& model = models(m);
        MetricsRow base{report.run_id, "", m, modality_name(ds, m), role, {}, std::nullopt, std::nullopt};

        MetricsRow clean = base;
        clean.phase = "clean";
        clean.metrics = evaluate_retrieval(model, ds, m, {});
        report.metrics.push_back(clean);

        MetricsRow uap_row = base;
        uap_row.phase = "uap";
        uap_row.metrics = evaluate_retrieval(model, ds, m, report.delta.delta.values());
        report.metrics.push_back(uap_row);

        if (mode == AttackMode::dual_layer) {
            MetricsRow eta_row = base;
            eta_row.phase = "uap+eta";
            eta_row.metrics = evaluate_retrieval(model, ds, m, combined);
            eta_row.alpha = complementarity(uap_row.metrics.success_rate, eta_row.metrics.success_rate);
            eta_row.fitness = fit;
            report.metrics.push_back(eta_row);
        }
    }
    report.timings.eval_seconds = seconds_since(start);
    return report;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& c, const ReidDataset& ds, const ModelProvider& models) {
    c.validate();
    auto axis = [](const auto& values, auto fallback) {
        using T = decltype(fallback);
        return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
    };
    const auto ks = axis(c.ablate.k, c.k);
    const auto n_models = axis(c.ablate.n_models, c.evo_models);
    const auto pcs = axis(c.ablate.p_c, c.p_c);
    const auto pms = axis(c.ablate.p_m, c.p_m);
    const auto pops = axis(c.ablate.pop_size, c.pop_size);
    const auto gens = axis(c.ablate.generations, c.generations);
    const auto seeds = axis(c.ablate.seeds, c.effective_attack_seed());
    if (ks.empty() || n_models.empty() || pcs.empty() || pms.empty() || pops.empty() || gens.empty() || seeds.empty()) {
        throw ConfigError("ablation: empty grid");
    }

    std::vector<AblationRow> rows;
    const ModalityModel& held_model = models(c.held_out);
    for (auto seed : seeds) {
        ExperimentConfig sc = c;
        sc.attack_seed = seed;
        UapSetup uap = prepare_uap(sc, ds, models);
        const UniversalPerturbation delta = learn_uap(uap.contexts, uap.samples, uap_config(sc)).perturbation;
        const RetrievalMetrics held_uap = evaluate_retrieval(held_model, ds, c.held_out, delta.delta.values());

        for (auto nm : n_models) {
            ExperimentConfig mc = sc;
            mc.evo_models = nm;
            const auto mods = evo_modalities(mc);
            EvoSetup evo = prepare_evo(mc, ds, models, mods);
            for (auto k : ks)
                for (auto pc : pcs)
                    for (auto pm : pms)
                        for (auto pop : pops)
                            for (auto gen : gens) {
                                ExperimentConfig cell = mc;
                                cell.k = k;
                                cell.p_c = pc;
                                cell.p_m = pm;
                                cell.pop_size = pop;
                                cell.generations = gen;
                                cell.validate();

                                const auto start = Clock::now();
                                const EvoResult res = evolve(delta, evo.targets, evo_config(cell));
                                AblationRow row{k, mods.size(), pc, pm, pop, gen, seed, held_uap, {}, 0.0, seconds_since(start)};
                                const auto combined = combined_perturbation(delta.delta, res.best, cell.epsilon);
                                row.held_out = evaluate_retrieval(held_model, ds, c.held_out, combined);
                                double s = 0.0;
                                for (double r : res.best_evaluation.model_rates) s += r;
                                row.aux_success = s / static_cast<double>(res.best_evaluation.model_rates.size());
                                rows.push_back(row);
                            }
        }
    }
    return rows;
}

std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
    std::string out = "\"";
    for (char ch : value) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

namespace {

constexpr const char* kCrlf = "\r\n";

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

std::string metrics_csv(std::span<const MetricsRow> rows) {
    std::ostringstream os;
    os << "run_id,phase,modality,role,rank1,rank5,rank10,mAP,success_rate,alpha,fitness" << kCrlf;
    for (const auto& r : rows) {
        os << csv_field(r.run_id) << ',' << csv_field(r.phase) << ',' << csv_field(r.modality_name) << ','
           << csv_field(r.role) << ',' << fmt(r.metrics.rank1) << ',' << fmt(r.metrics.rank5) << ','
           << fmt(r.metrics.rank10) << ',' << fmt(r.metrics.map) << ',' << fmt(r.metrics.success_rate) << ','
           << opt(r.alpha) << ',' << opt(r.fitness) << kCrlf;
    }
    return os.str();
}

std::string archive_csv(const EvoResult& evo, std::span<const std::uint16_t> modalities) {
    std::ostringstream os;
    os << "generation,best_success_rate,best_d_tilde,best_eta_l2";
    for (auto m : modalities) os << ",alpha_m" << m;
    os << kCrlf;
    for (const auto& row : evo.trace) {
        os << row.generation << ',' << fmt(row.best_success) << ',' << fmt(row.best_d_tilde) << ','
           << fmt(row.best_eta_l2);
        for (const auto& a : row.alpha) os << ',' << opt(a);
        os << kCrlf;
    }
    return os.str();
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::ostringstream os;
    os << "k,n_models,p_c,p_m,pop_size,generations,attack_seed,heldout_rank1_uap,heldout_success_uap,"
          "heldout_rank1,heldout_success,aux_success,evo_seconds"
       << kCrlf;
    for (const auto& r : rows) {
        os << r.k << ',' << r.n_models << ',' << fmt(r.p_c) << ',' << fmt(r.p_m) << ',' << r.pop_size << ','
           << r.generations << ',' << r.attack_seed << ',' << fmt(r.held_out_uap.rank1) << ','
           << fmt(r.held_out_uap.success_rate) << ',' << fmt(r.held_out.rank1) << ',' << fmt(r.held_out.success_rate)
           << ',' << fmt(r.aux_success) << ',' << fmt(r.evo_seconds) << kCrlf;
    }
    return os.str();
}

}  // namespace mmattack
