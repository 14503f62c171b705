#include "mmattack/commands.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <memory>

#include <json.hpp>

#include "mmattack/errors.hpp"

namespace mmattack {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

namespace {

void require(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifact(path.string());
}

json metrics_json(const RetrievalMetrics& m) {
    return {{"rank1", m.rank1}, {"rank5", m.rank5}, {"rank10", m.rank10}, {"mAP", m.map}, {"success_rate", m.success_rate}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ReidDataset cmd_gen_data(const ExperimentConfig& config, const RunPaths& paths, std::ostream& log) {
    ReidDataset ds = make_dataset(config);
    save_dataset(ds, paths.dataset());
    write_text(paths.config(), to_text(config));
    log << "dataset: " << ds.identity_count() << " identities, " << ds.modality_count() << " modalities, "
        << ds.samples.size() << " images -> " << paths.dataset().string() << '\n';
    return ds;
}

std::vector<RetrievalMetrics> cmd_train(const ExperimentConfig& config, const RunPaths& paths, std::ostream& log) {
    require(paths.dataset());
    const ReidDataset ds = load_dataset(paths.dataset());
    std::vector<RetrievalMetrics> clean;
    for (std::uint16_t m = 0; m < ds.modality_count(); ++m) {
        const ModalityModel model = train_modality(config, ds, m);
        save_model(model, paths.model(m));
        clean.push_back(evaluate_retrieval(model, ds, m, {}));
        log << "modality " << m << " (" << to_string(ds.modalities[m].kind) << "): clean rank-1 " << std::fixed
            << std::setprecision(4) << clean.back().rank1 << ", mAP " << clean.back().map << std::defaultfloat << '\n';
    }
    return clean;
}

AttackReport cmd_attack(const ExperimentConfig& config, const RunPaths& paths, AttackMode mode, std::ostream& log) {
    require(paths.dataset());
    const ReidDataset ds = load_dataset(paths.dataset());
    for (std::uint16_t m = 0; m < ds.modality_count(); ++m) require(paths.model(m));

    std::map<std::uint16_t, std::unique_ptr<ModalityModel>> cache;
    bool evaluating = false;
    const ModelProvider provider = [&](std::uint16_t m) -> const ModalityModel& {
        if (m == config.held_out && !evaluating) {
            throw InvalidArgument("held-out model requested outside the evaluation phase");
        }
        auto& slot = cache[m];
        if (!slot) slot = std::make_unique<ModalityModel>(load_model(paths.model(m)));
        return *slot;
    };
    AttackHooks hooks;
    hooks.on_phase = [&](std::string_view phase) {
        evaluating = phase == "evaluate";
        log << "phase: " << phase << '\n';
    };

    AttackReport report = run_attack(config, ds, provider, mode, hooks);

    const fs::path dir = paths.attack_dir(mode);
    fs::create_directories(dir);
    save_perturbation(report.delta, dir / "delta.bin");
    write_text(dir / "metrics.csv", metrics_csv(report.metrics));
    if (report.evo) {
        save_eta(report.evo->best, config.k, dir / "eta.bin");
        write_text(dir / "archive.csv", archive_csv(*report.evo, report.evo_modalities));
    }
    write_text(dir / "config.txt", to_text(config));
    write_text(dir / "summary.json", summary_json(config, report));

    for (const auto& row : report.metrics) {
        log << std::left << std::setw(8) << row.phase << ' ' << std::setw(22) << row.modality_name << ' '
            << std::setw(10) << row.role << std::right << std::fixed << std::setprecision(4) << " rank1 "
            << row.metrics.rank1 << " mAP " << row.metrics.map << " success " << row.metrics.success_rate
            << std::defaultfloat << '\n';
    }
    return report;
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config, const RunPaths& paths, std::ostream& log) {
    require(paths.dataset());
    const ReidDataset ds = load_dataset(paths.dataset());
    for (std::uint16_t m = 0; m < ds.modality_count(); ++m) require(paths.model(m));
    std::map<std::uint16_t, ModalityModel> models;
    for (std::uint16_t m = 0; m < ds.modality_count(); ++m) models.emplace(m, load_model(paths.model(m)));
    const ModelProvider provider = [&](std::uint16_t m) -> const ModalityModel& { return models.at(m); };

    const auto rows = run_ablation(config, ds, provider);
    write_text(paths.ablation(), ablation_csv(rows));
    log << rows.size() << " ablation cells -> " << paths.ablation().string() << '\n';
    return rows;
}

std::string summary_json(const ExperimentConfig& config, const AttackReport& report) {
    json j;
    j["run_id"] = report.run_id;
    j["mode"] = std::string(to_string(report.mode));
    j["config"] = to_text(config);
    json rows = json::array();
    for (const auto& r : report.metrics) {
        rows.push_back({{"phase", r.phase},
                        {"modality", r.modality},
                        {"modality_name", r.modality_name},
                        {"role", r.role},
                        {"metrics", metrics_json(r.metrics)},
                        {"alpha", optional_json(r.alpha)},
                        {"fitness", optional_json(r.fitness)}});
    }
    j["metrics"] = rows;
    j["delta_linf"] = linf_norm(report.delta.delta.values());
    if (report.evo) {
        j["evo_modalities"] = report.evo_modalities;
        j["eta_l0"] = report.evo->best.l0();
        json trace = json::array();
        for (const auto& t : report.evo->trace) {
            json alpha = json::array();
            for (const auto& a : t.alpha) alpha.push_back(optional_json(a));
            trace.push_back({{"generation", t.generation},
                             {"best_success", t.best_success},
                             {"best_d_tilde", t.best_d_tilde},
                             {"best_eta_l2", t.best_eta_l2},
                             {"alpha", alpha}});
        }
        j["archive_trace"] = trace;
    }
    j["wall_clock_seconds"] = {{"uap", report.timings.uap_seconds},
                               {"evolve", report.timings.evo_seconds},
                               {"evaluate", report.timings.eval_seconds}};
    return j.dump(2) + "\n";
}

void cmd_report(const RunPaths& paths, std::ostream& log) {
    json out;
    out["runs"] = json::array();
    for (AttackMode mode : {AttackMode::grad_only, AttackMode::dual_layer}) {
        const fs::path p = paths.attack_dir(mode) / "summary.json";
        if (!fs::exists(p)) continue;
        std::ifstream in(p);
        json summary;
        try {
            summary = json::parse(in);
        } catch (const json::exception& e) {
            throw std::runtime_error(p.string() + ": " + e.what());
        }
        out["runs"].push_back(summary);
        for (const auto& row : summary["metrics"]) {
            if (row["role"] != "held-out") continue;
            log << summary["mode"].get<std::string>() << ' ' << row["phase"].get<std::string>()
                << " held-out rank-1 " << row["metrics"]["rank1"].get<double>() << " success "
                << row["metrics"]["success_rate"].get<double>() << '\n';
        }
    }
    if (out["runs"].empty()) throw MissingArtifact((paths.attack_dir(AttackMode::grad_only) / "summary.json").string());
    write_text(paths.report(), out.dump(2) + "\n");
}

}  // namespace mmattack
