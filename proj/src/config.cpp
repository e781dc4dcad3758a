#include "chatter/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace chatter {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(EmbeddingPolicy p) {
    switch (p) {
        case EmbeddingPolicy::per_series: return "per_series";
        case EmbeddingPolicy::dataset_median: return "dataset_median";
        case EmbeddingPolicy::fixed: return "fixed";
    }
    return "?";
}

EmbeddingPolicy embedding_policy_from_string(const std::string& s) {
    if (s == "per_series") return EmbeddingPolicy::per_series;
    if (s == "dataset_median") return EmbeddingPolicy::dataset_median;
    if (s == "fixed") return EmbeddingPolicy::fixed;
    throw std::invalid_argument("unknown embedding policy '" + s + "'");
}

ProcessParams default_process_params() {
    ProcessParams p;
    p.modal_mass = 0.03993;
    p.natural_frequency = 2.0 * std::numbers::pi * 922.0;
    p.damping_ratio = 0.011;
    p.tangential_coefficient = 6e8;
    p.normal_ratio = 0.3;
    p.teeth = 4;
    p.radial_immersion = 0.25;
    p.mode = MillingMode::down;
    p.feed_per_tooth = 1e-4;
    return p;
}

GridSpec default_grid() {
    GridSpec g;
    g.speed_min = 8000.0;
    g.speed_max = 25000.0;
    g.depth_min = 1e-4;
    g.depth_max = 3e-3;
    g.speed_count = 30;
    g.depth_count = 30;
    return g;
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw std::invalid_argument("config: unknown key '" + where + "." + it.key() + "'");
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
    process.validate();
    grid.validate();
    simulation.validate();
    if (stability_order < 20) throw std::invalid_argument("config: stability.order must be >= 20");
    if (!(hopf_tol > 0.0)) throw std::invalid_argument("config: stability.hopf_tol must be positive");
    if (noise.snr_db.empty() && !noise.include_noiseless)
        throw std::invalid_argument("config: no dataset variants (no SNR levels and noiseless excluded)");
    for (double s : noise.snr_db)
        if (!std::isfinite(s)) throw std::invalid_argument("config: SNR levels must be finite");
    if (embedding.max_delay < 2) throw std::invalid_argument("config: embedding.max_delay must be >= 2");
    if (embedding.policy == EmbeddingPolicy::fixed && (embedding.delay < 1 || embedding.dimension < 1))
        throw std::invalid_argument("config: fixed embedding needs delay >= 1 and dimension >= 1");
    if (embedding.cloud_cap < 2) throw std::invalid_argument("config: embedding.cloud_cap must be >= 2");
    if (persistence.max_dim < 1 || persistence.max_dim > 2)
        throw std::invalid_argument("config: persistence.max_dim must be 1 or 2");
    if (features.methods.empty()) throw std::invalid_argument("config: features.methods is empty");
    for (auto [a, b] : features.mesh_sizes)
        if (a < 2 || b < 2) throw std::invalid_argument("config: mesh sizes must be >= 2");
    if (features.padding < 0.0) throw std::invalid_argument("config: features.padding must be >= 0");
    if (classifiers.empty()) throw std::invalid_argument("config: classifiers is empty");
    if (!(evaluation.train_fraction > 0.0 && evaluation.train_fraction < 1.0))
        throw std::invalid_argument("config: evaluation.train_fraction must lie in (0,1)");
    if (evaluation.repeats < 1) throw std::invalid_argument("config: evaluation.repeats must be >= 1");
    if (evaluation.class_problems.empty()) throw std::invalid_argument("config: evaluation.class_problems is empty");
    for (int c : evaluation.class_problems)
        if (c != 2 && c != 3) throw std::invalid_argument("config: class problems must be 2 or 3");
}

ordered_json ExperimentConfig::to_json() const {
    ordered_json j;
    j["name"] = name;
    j["seed"] = seed;
    const auto& p = process;
    j["process"] = {{"modal_mass", p.modal_mass},
                    {"natural_frequency", p.natural_frequency},
                    {"damping_ratio", p.damping_ratio},
                    {"tangential_coefficient", p.tangential_coefficient},
                    {"normal_ratio", p.normal_ratio},
                    {"teeth", p.teeth},
                    {"radial_immersion", p.radial_immersion},
                    {"feed_per_tooth", p.feed_per_tooth}};
    j["milling_mode"] = chatter::to_string(p.mode);
    j["grid"] = {{"speed_min", grid.speed_min},     {"speed_max", grid.speed_max},
                 {"depth_min", grid.depth_min},     {"depth_max", grid.depth_max},
                 {"speed_count", grid.speed_count}, {"depth_count", grid.depth_count}};
    const auto& s = simulation;
    j["simulation"] = {{"samples_per_delay_period", s.samples_per_delay_period},
                       {"total_periods", s.total_periods},
                       {"transient_periods", s.transient_periods},
                       {"perturbation", s.perturbation},
                       {"substeps", s.substeps},
                       {"include_forcing", s.include_forcing},
                       {"blowup_guard", s.blowup_guard}};
    j["stability"] = {{"order", stability_order}, {"hopf_tol", hopf_tol}};
    j["noise"] = {{"snr_db", noise.snr_db},
                  {"include_noiseless", noise.include_noiseless},
                  {"after_transient", noise.after_transient}};
    j["embedding"] = {{"policy", chatter::to_string(embedding.policy)},
                      {"delay", embedding.delay},
                      {"dimension", embedding.dimension},
                      {"max_delay", embedding.max_delay},
                      {"cloud_cap", embedding.cloud_cap}};
    j["persistence"] = {{"max_dim", persistence.max_dim}, {"threshold", persistence.threshold}};
    ordered_json methods = ordered_json::array(), meshes = ordered_json::array();
    for (auto m : features.methods) methods.push_back(chatter::to_string(m));
    for (auto [a, b] : features.mesh_sizes) meshes.push_back({a, b});
    j["features"] = {{"methods", methods},
                     {"mesh_sizes", meshes},
                     {"padding", features.padding},
                     {"include_h0", features.include_h0}};
    ordered_json cls = ordered_json::array();
    for (auto a : classifiers) cls.push_back(chatter::to_string(a));
    j["classifiers"] = cls;
    const auto& h = hyper;
    j["hyperparameters"] = {{"svm_c", h.svm_c},
                            {"svm_gamma", h.svm_gamma},
                            {"svm_tol", h.svm_tol},
                            {"logistic_c", h.logistic_c},
                            {"logistic_tol", h.logistic_tol},
                            {"logistic_max_iter", h.logistic_max_iter},
                            {"forest_trees", h.forest_trees},
                            {"forest_depth", h.forest_depth},
                            {"boost_stages", h.boost_stages},
                            {"boost_depth", h.boost_depth},
                            {"boost_learning_rate", h.boost_learning_rate},
                            {"standardize", h.standardize}};
    j["evaluation"] = {{"train_fraction", evaluation.train_fraction},
                       {"repeats", evaluation.repeats},
                       {"class_problems", evaluation.class_problems}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j, "config",
               {"name", "seed", "process", "milling_mode", "grid", "simulation", "stability", "noise", "embedding",
                "persistence", "features", "classifiers", "hyperparameters", "evaluation", "comment"});
    ExperimentConfig c;
    c.process = default_process_params();
    c.grid = default_grid();
    try {
        get(j, "name", c.name);
        get(j, "seed", c.seed);
        if (j.contains("process")) {
            const auto& p = j["process"];
            check_keys(p, "process",
                       {"modal_mass", "natural_frequency", "damping_ratio", "tangential_coefficient", "normal_ratio",
                        "teeth", "radial_immersion", "feed_per_tooth"});
            get(p, "modal_mass", c.process.modal_mass);
            get(p, "natural_frequency", c.process.natural_frequency);
            get(p, "damping_ratio", c.process.damping_ratio);
            get(p, "tangential_coefficient", c.process.tangential_coefficient);
            get(p, "normal_ratio", c.process.normal_ratio);
            get(p, "teeth", c.process.teeth);
            get(p, "radial_immersion", c.process.radial_immersion);
            get(p, "feed_per_tooth", c.process.feed_per_tooth);
        }
        if (j.contains("milling_mode")) c.process.mode = milling_mode_from_string(j["milling_mode"].get<std::string>());
        if (j.contains("grid")) {
            const auto& g = j["grid"];
            check_keys(g, "grid", {"speed_min", "speed_max", "depth_min", "depth_max", "speed_count", "depth_count"});
            get(g, "speed_min", c.grid.speed_min);
            get(g, "speed_max", c.grid.speed_max);
            get(g, "depth_min", c.grid.depth_min);
            get(g, "depth_max", c.grid.depth_max);
            get(g, "speed_count", c.grid.speed_count);
            get(g, "depth_count", c.grid.depth_count);
        }
        if (j.contains("simulation")) {
            const auto& s = j["simulation"];
            check_keys(s, "simulation",
                       {"samples_per_delay_period", "total_periods", "transient_periods", "perturbation", "substeps",
                        "include_forcing", "blowup_guard"});
            get(s, "samples_per_delay_period", c.simulation.samples_per_delay_period);
            get(s, "total_periods", c.simulation.total_periods);
            get(s, "transient_periods", c.simulation.transient_periods);
            get(s, "perturbation", c.simulation.perturbation);
            get(s, "substeps", c.simulation.substeps);
            get(s, "include_forcing", c.simulation.include_forcing);
            get(s, "blowup_guard", c.simulation.blowup_guard);
        }
        if (j.contains("stability")) {
            const auto& s = j["stability"];
            check_keys(s, "stability", {"order", "hopf_tol"});
            get(s, "order", c.stability_order);
            get(s, "hopf_tol", c.hopf_tol);
        }
        if (j.contains("noise")) {
            const auto& n = j["noise"];
            check_keys(n, "noise", {"snr_db", "include_noiseless", "after_transient"});
            get(n, "snr_db", c.noise.snr_db);
            get(n, "include_noiseless", c.noise.include_noiseless);
            get(n, "after_transient", c.noise.after_transient);
        }
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            check_keys(e, "embedding", {"policy", "delay", "dimension", "max_delay", "cloud_cap"});
            if (e.contains("policy")) c.embedding.policy = embedding_policy_from_string(e["policy"].get<std::string>());
            get(e, "delay", c.embedding.delay);
            get(e, "dimension", c.embedding.dimension);
            get(e, "max_delay", c.embedding.max_delay);
            get(e, "cloud_cap", c.embedding.cloud_cap);
        }
        if (j.contains("persistence")) {
            const auto& p = j["persistence"];
            check_keys(p, "persistence", {"max_dim", "threshold"});
            get(p, "max_dim", c.persistence.max_dim);
            get(p, "threshold", c.persistence.threshold);
        }
        if (j.contains("features")) {
            const auto& f = j["features"];
            check_keys(f, "features", {"methods", "mesh_sizes", "padding", "include_h0"});
            if (f.contains("methods")) {
                c.features.methods.clear();
                for (const auto& m : f["methods"]) c.features.methods.push_back(feature_method_from_string(m.get<std::string>()));
            }
            if (f.contains("mesh_sizes")) {
                c.features.mesh_sizes.clear();
                for (const auto& m : f["mesh_sizes"]) {
                    if (!m.is_array() || m.size() != 2) throw std::invalid_argument("config: mesh sizes are [births, lifetimes] pairs");
                    c.features.mesh_sizes.emplace_back(m[0].get<int>(), m[1].get<int>());
                }
            }
            get(f, "padding", c.features.padding);
            get(f, "include_h0", c.features.include_h0);
        }
        if (j.contains("classifiers")) {
            c.classifiers.clear();
            for (const auto& a : j["classifiers"]) c.classifiers.push_back(algorithm_from_string(a.get<std::string>()));
        }
        if (j.contains("hyperparameters")) {
            const auto& h = j["hyperparameters"];
            check_keys(h, "hyperparameters",
                       {"svm_c", "svm_gamma", "svm_tol", "logistic_c", "logistic_tol", "logistic_max_iter",
                        "forest_trees", "forest_depth", "boost_stages", "boost_depth", "boost_learning_rate",
                        "standardize"});
            get(h, "svm_c", c.hyper.svm_c);
            get(h, "svm_gamma", c.hyper.svm_gamma);
            get(h, "svm_tol", c.hyper.svm_tol);
            get(h, "logistic_c", c.hyper.logistic_c);
            get(h, "logistic_tol", c.hyper.logistic_tol);
            get(h, "logistic_max_iter", c.hyper.logistic_max_iter);
            get(h, "forest_trees", c.hyper.forest_trees);
            get(h, "forest_depth", c.hyper.forest_depth);
            get(h, "boost_stages", c.hyper.boost_stages);
            get(h, "boost_depth", c.hyper.boost_depth);
            get(h, "boost_learning_rate", c.hyper.boost_learning_rate);
            get(h, "standardize", c.hyper.standardize);
        }
        if (j.contains("evaluation")) {
            const auto& e = j["evaluation"];
            check_keys(e, "evaluation", {"train_fraction", "repeats", "class_problems"});
            get(e, "train_fraction", c.evaluation.train_fraction);
            get(e, "repeats", c.evaluation.repeats);
            get(e, "class_problems", c.evaluation.class_problems);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace chatter
