#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chatter/classify.hpp"
#include "chatter/featurize.hpp"
#include "chatter/milling_model.hpp"
#include "chatter/stability.hpp"

namespace chatter {

struct NoiseConfig {
    std::vector<double> snr_db;
    bool include_noiseless = true;
    bool after_transient = true;  // false: noise the full record, then drop the transient
};

enum class EmbeddingPolicy { per_series, dataset_median, fixed };
std::string to_string(EmbeddingPolicy p);
EmbeddingPolicy embedding_policy_from_string(const std::string& s);

struct EmbeddingConfig {
    EmbeddingPolicy policy = EmbeddingPolicy::per_series;
    int delay = 1;      // used by the fixed policy
    int dimension = 3;  // used by the fixed policy
    int max_delay = 32;
    std::size_t cloud_cap = 300;
};

struct PersistenceConfig {
    int max_dim = 2;
    double threshold = 0.0;  // non-positive: enclosing radius
};

struct FeatureConfig {
    std::vector<FeatureMethod> methods{FeatureMethod::carlsson, FeatureMethod::template_functions};
    std::vector<std::pair<int, int>> mesh_sizes{{5, 5}};  // (birth nodes, lifetime nodes)
    double padding = 0.05;
    bool include_h0 = false;
};

struct EvaluationConfig {
    double train_fraction = 0.67;
    int repeats = 10;
    std::vector<int> class_problems{2, 3};
};

struct ExperimentConfig {
    std::string name = "experiment";
    ProcessParams process;
    GridSpec grid;
    SimConfig simulation;
    int stability_order = 60;
    double hopf_tol = 1e-6;
    NoiseConfig noise;
    EmbeddingConfig embedding;
    PersistenceConfig persistence;
    FeatureConfig features;
    std::vector<Algorithm> classifiers = all_algorithms();
    Hyperparameters hyper;
    EvaluationConfig evaluation;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
};

/// Process parameters used when a config omits them.
ProcessParams default_process_params();
GridSpec default_grid();

}  // namespace chatter
