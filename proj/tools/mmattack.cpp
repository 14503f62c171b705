// Command-line driver: gen-data, train, attack, ablate, report.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mmattack/commands.hpp"
#include "mmattack/errors.hpp"

namespace fs = std::filesystem;
using namespace mmattack;

namespace {

// --config wins; otherwise the run directory's echo (written by gen-data); otherwise defaults.
ExperimentConfig resolve_config(const std::string& config_path, const RunPaths& paths,
                                const std::optional<std::uint64_t>& seed, bool use_echo) {
    ExperimentConfig config;
    if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw MissingArtifact(config_path);
        config = load_config(config_path);
    } else if (use_echo && fs::exists(paths.config())) {
        config = load_config(paths.config());
    }
    if (seed) config.seed = *seed;
    config.validate();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-layer universal adversarial attack on a synthetic multi-modal re-identification benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "run";
    std::optional<std::uint64_t> seed;
    std::string mode_name = "dual-layer";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out_dir, "run directory")->capture_default_str();
    };
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark");
    auto* train = app.add_subcommand("train", "train one embedder per modality");
    auto* attack = app.add_subcommand("attack", "learn the perturbation(s) and evaluate transfer");
    auto* ablate = app.add_subcommand("ablate", "run the configured ablation grid");
    auto* report = app.add_subcommand("report", "collect attack summaries into report.json");
    for (auto* sub : {gen, train, attack, ablate}) add_common(sub);
    report->add_option("--out", out_dir, "run directory")->capture_default_str();
    attack->add_option("--mode", mode_name, "grad-only | dual-layer")
        ->check(CLI::IsMember({"grad-only", "dual-layer"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const RunPaths paths{out_dir};
    try {
        if (gen->parsed()) {
            cmd_gen_data(resolve_config(config_path, paths, seed, false), paths, std::cout);
        } else if (train->parsed()) {
            cmd_train(resolve_config(config_path, paths, seed, true), paths, std::cout);
        } else if (attack->parsed()) {
            cmd_attack(resolve_config(config_path, paths, seed, true), paths, parse_attack_mode(mode_name), std::cout);
        } else if (ablate->parsed()) {
            cmd_ablate(resolve_config(config_path, paths, seed, true), paths, std::cout);
        } else if (report->parsed()) {
            cmd_report(paths, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const MissingArtifact& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
