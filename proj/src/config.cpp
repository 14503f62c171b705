#include "mmattack/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "mmattack/errors.hpp"

namespace mmattack {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc() || res.ptr != last) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
    return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    for (const auto& item : split_list(value)) out.push_back(parse_number<T>(key, item));
    return out;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::ostringstream os;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) os << ',';
        if constexpr (std::is_floating_point_v<T>) {
            os << format_double(values[i]);
        } else {
            os << +values[i];
        }
    }
    return os.str();
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter number(T ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

template <typename T>
Setter list(std::vector<T> ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_list<T>(k, v); };
}

template <typename T>
Setter grid(std::vector<T> AblationGrid::*field) {
    return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.ablate.*field = parse_list<T>(k, v);
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed", number(&ExperimentConfig::seed)},
        {"attack_seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v.empty()) {
                 c.attack_seed.reset();
             } else {
                 c.attack_seed = parse_number<std::uint64_t>(k, v);
             }
         }},
        {"n_identities", number(&ExperimentConfig::n_identities)},
        {"images_per_identity", number(&ExperimentConfig::images_per_identity)},
        {"height", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.shape.height = parse_number<std::uint32_t>(k, v); }},
        {"width", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.shape.width = parse_number<std::uint32_t>(k, v); }},
        {"channels", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.shape.channels = parse_number<std::uint32_t>(k, v); }},
        {"noise_sigma", number(&ExperimentConfig::noise_sigma)},
        {"identity_amplitude", number(&ExperimentConfig::identity_amplitude)},
        {"background_amplitude", number(&ExperimentConfig::background_amplitude)},
        {"modalities",
         [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.modalities.clear();
             try {
                 for (const auto& item : split_list(v)) c.modalities.push_back(parse_modality_kind(item));
             } catch (const InvalidArgument& e) {
                 throw ConfigError(std::string("config key 'modalities': ") + e.what());
             }
         }},
        {"source", list(&ExperimentConfig::source)},
        {"auxiliaries", list(&ExperimentConfig::auxiliaries)},
        {"held_out", number(&ExperimentConfig::held_out)},
        {"d_hidden", number(&ExperimentConfig::d_hidden)},
        {"d_feat", number(&ExperimentConfig::d_feat)},
        {"train_epochs", number(&ExperimentConfig::train_epochs)},
        {"train_lr", number(&ExperimentConfig::train_lr)},
        {"train_batch", number(&ExperimentConfig::train_batch)},
        {"lambda_reg", number(&ExperimentConfig::lambda_reg)},
        {"n_clusters", number(&ExperimentConfig::n_clusters)},
        {"kmeans_iters", number(&ExperimentConfig::kmeans_iters)},
        {"uap_epochs", number(&ExperimentConfig::uap_epochs)},
        {"uap_batch", number(&ExperimentConfig::uap_batch)},
        {"epsilon", number(&ExperimentConfig::epsilon)},
        {"rho", number(&ExperimentConfig::rho)},
        {"beta", number(&ExperimentConfig::beta)},
        {"alpha", number(&ExperimentConfig::alpha)},
        {"pop_size", number(&ExperimentConfig::pop_size)},
        {"generations", number(&ExperimentConfig::generations)},
        {"k", number(&ExperimentConfig::k)},
        {"p_c", number(&ExperimentConfig::p_c)},
        {"p_m", number(&ExperimentConfig::p_m)},
        {"step_scale", number(&ExperimentConfig::step_scale)},
        {"evo_models", number(&ExperimentConfig::evo_models)},
        {"evo_batch", number(&ExperimentConfig::evo_batch)},
        {"fitness_lambda", number(&ExperimentConfig::fitness_lambda)},
        {"ablate.k", grid(&AblationGrid::k)},
        {"ablate.n_models", grid(&AblationGrid::n_models)},
        {"ablate.p_c", grid(&AblationGrid::p_c)},
        {"ablate.p_m", grid(&AblationGrid::p_m)},
        {"ablate.pop_size", grid(&AblationGrid::pop_size)},
        {"ablate.generations", grid(&AblationGrid::generations)},
        {"ablate.seeds", grid(&AblationGrid::seeds)},
    };
    return table;
}

}  // namespace

void ExperimentConfig::validate() const {
    const auto n_mod = modalities.size();
    if (n_mod == 0) throw ConfigError("config: no modalities");
    if (n_identities < 2) throw ConfigError("config: n_identities must be >= 2");
    if (images_per_identity < 3) throw ConfigError("config: images_per_identity must be >= 3");
    if (shape.degenerate()) throw ConfigError("config: degenerate image shape");
    if (source.empty() || source.size() > 2) throw ConfigError("config: source must list one or two modalities");

    std::set<std::uint16_t> roles;
    auto claim = [&](std::uint16_t m, const char* role) {
        if (m >= n_mod) throw ConfigError(std::string("config: ") + role + " modality " + std::to_string(m) + " out of range");
        if (!roles.insert(m).second) throw ConfigError("config: modality " + std::to_string(m) + " has more than one role");
    };
    for (auto m : source) claim(m, "source");
    for (auto m : auxiliaries) claim(m, "auxiliary");
    claim(held_out, "held-out");

    if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be positive");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("config: beta must lie in [0, 1)");
    if (!(rho >= 0.0)) throw ConfigError("config: rho must be >= 0");
    if (alpha < 0.0) throw ConfigError("config: alpha must be >= 0");
    if (uap_batch == 0 || train_batch == 0) throw ConfigError("config: batch sizes must be positive");
    if (!(lambda_reg > 0.0)) throw ConfigError("config: lambda_reg must be positive");
    if (pop_size < 2) throw ConfigError("config: pop_size must be >= 2");
    if (generations < 1) throw ConfigError("config: generations must be >= 1");
    if (k == 0) throw ConfigError("config: k must be positive");
    if (!(p_c >= 0.0 && p_c <= 1.0) || !(p_m >= 0.0 && p_m <= 1.0)) throw ConfigError("config: p_c and p_m must lie in [0, 1]");
    if (!(step_scale > 0.0)) throw ConfigError("config: step_scale must be positive");
    if (d_hidden == 0 || d_feat == 0) throw ConfigError("config: model dimensions must be positive");
    if (n_clusters == 1) throw ConfigError("config: n_clusters must be 0 (auto) or >= 2");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        it->second(base, key, value);
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string to_text(const ExperimentConfig& c) {
    std::ostringstream os;
    auto kv = [&](const char* key, const std::string& value) { os << key << " = " << value << '\n'; };
    std::vector<std::string> kinds;
    for (auto k : c.modalities) kinds.emplace_back(to_string(k));
    std::string kinds_joined;
    for (std::size_t i = 0; i < kinds.size(); ++i) kinds_joined += (i ? "," : "") + kinds[i];

    kv("seed", std::to_string(c.seed));
    kv("attack_seed", c.attack_seed ? std::to_string(*c.attack_seed) : "");
    kv("n_identities", std::to_string(c.n_identities));
    kv("images_per_identity", std::to_string(c.images_per_identity));
    kv("height", std::to_string(c.shape.height));
    kv("width", std::to_string(c.shape.width));
    kv("channels", std::to_string(c.shape.channels));
    kv("noise_sigma", format_double(c.noise_sigma));
    kv("identity_amplitude", format_double(c.identity_amplitude));
    kv("background_amplitude", format_double(c.background_amplitude));
    kv("modalities", kinds_joined);
    kv("source", join(c.source));
    kv("auxiliaries", join(c.auxiliaries));
    kv("held_out", std::to_string(c.held_out));
    kv("d_hidden", std::to_string(c.d_hidden));
    kv("d_feat", std::to_string(c.d_feat));
    kv("train_epochs", std::to_string(c.train_epochs));
    kv("train_lr", format_double(c.train_lr));
    kv("train_batch", std::to_string(c.train_batch));
    kv("lambda_reg", format_double(c.lambda_reg));
    kv("n_clusters", std::to_string(c.n_clusters));
    kv("kmeans_iters", std::to_string(c.kmeans_iters));
    kv("uap_epochs", std::to_string(c.uap_epochs));
    kv("uap_batch", std::to_string(c.uap_batch));
    kv("epsilon", format_double(c.epsilon));
    kv("rho", format_double(c.rho));
    kv("beta", format_double(c.beta));
    kv("alpha", format_double(c.alpha));
    kv("pop_size", std::to_string(c.pop_size));
    kv("generations", std::to_string(c.generations));
    kv("k", std::to_string(c.k));
    kv("p_c", format_double(c.p_c));
    kv("p_m", format_double(c.p_m));
    kv("step_scale", format_double(c.step_scale));
    kv("evo_models", std::to_string(c.evo_models));
    kv("evo_batch", std::to_string(c.evo_batch));
    kv("fitness_lambda", format_double(c.fitness_lambda));
    kv("ablate.k", join(c.ablate.k));
    kv("ablate.n_models", join(c.ablate.n_models));
    kv("ablate.p_c", join(c.ablate.p_c));
    kv("ablate.p_m", join(c.ablate.p_m));
    kv("ablate.pop_size", join(c.ablate.pop_size));
    kv("ablate.generations", join(c.ablate.generations));
    kv("ablate.seeds", join(c.ablate.seeds));
    return os.str();
}

}  // namespace mmattack
