#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatter/trees.hpp"

namespace chatter {

struct Dataset {
    Eigen::MatrixXd X;            // one row per retained grid point
    std::vector<int> y;           // classes 0..n_classes-1
    std::vector<int> grid_index;  // flat grid index per row
    int n_classes = 2;

    std::size_t rows() const { return y.size(); }
    void validate() const;
    Dataset subset(std::span<const std::size_t> rows) const;
};

enum class Algorithm { svm, logistic, random_forest, gradient_boost };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);
std::vector<Algorithm> all_algorithms();

struct Hyperparameters {
    double svm_c = 1.0;
    double svm_gamma = 0.0;  // non-positive: 1 / (n_features * training variance)
    double svm_tol = 1e-3;
    double logistic_c = 1.0;
    double logistic_tol = 1e-8;
    int logistic_max_iter = 100;
    int forest_trees = 100;
    int forest_depth = 2;
    int boost_stages = 100;
    int boost_depth = 3;
    double boost_learning_rate = 0.1;
    bool standardize = true;
    bool allow_single_class = false;
};

/// Column-wise zero mean / unit variance, fitted on training rows only.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& X);
    Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
};

class Model {
public:
    virtual ~Model() = default;
    /// Checks width, applies the training standardization, then predicts.
    std::vector<int> predict(const Eigen::MatrixXd& X) const;
    virtual Algorithm algorithm() const = 0;
    Eigen::Index feature_count() const { return features_; }
    void set_feature_count(Eigen::Index n) { features_ = n; }
    void set_standardizer(std::optional<Standardizer> s) { standardizer_ = std::move(s); }
    const std::optional<Standardizer>& standardizer() const { return standardizer_; }

protected:
    virtual std::vector<int> predict_prepared(const Eigen::MatrixXd& X) const = 0;

private:
    Eigen::Index features_ = 0;
    std::optional<Standardizer> standardizer_;
};

class RandomForest : public Model {
public:
    Algorithm algorithm() const override { return Algorithm::random_forest; }
    const std::vector<DecisionTree>& trees() const { return trees_; }
    /// Mean of leaf class fractions over trees.
    Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& prepared) const;

    std::vector<DecisionTree> trees_;
    int n_classes_ = 2;

protected:
    std::vector<int> predict_prepared(const Eigen::MatrixXd& X) const override;
};

/// Train one model; features are standardized internally when hp.standardize is set.
std::unique_ptr<Model> train(const Dataset& train_set, Algorithm algo, const Hyperparameters& hp,
                             std::uint64_t seed);

struct TrainTestSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Uniform random partition; train size is round(train_fraction * n).
TrainTestSplit split(const Dataset& ds, double train_fraction, std::uint64_t seed);
TrainTestSplit split(std::span<const int> labels, int n_classes, double train_fraction, std::uint64_t seed);

double accuracy(std::span<const int> truth, std::span<const int> predicted);

struct EvalResult {
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population standard deviation over repeats
    std::vector<double> per_split_accuracies;
    std::vector<int> grid_index;    // aligned with dataset rows
    std::vector<int> misclassified;  // times each row was misclassified while in the test set
    std::vector<int> tested;         // times each row fell in the test set
};

/// Builds the feature matrix for all rows given the training rows of one split; lets
/// featurizations that are fitted on training data (template meshes) run per split.
using FeatureBuilder = std::function<Eigen::MatrixXd(std::span<const std::size_t> train_rows)>;

struct EvalProtocol {
    double train_fraction = 0.67;
    int repeats = 10;
    std::vector<std::uint64_t> seeds;  // one per repeat
};

EvalProtocol default_protocol(std::uint64_t master_seed);

EvalResult evaluate(const Dataset& ds, Algorithm algo, const Hyperparameters& hp, const EvalProtocol& protocol);
EvalResult evaluate(const FeatureBuilder& features, std::span<const int> labels, std::span<const int> grid_index,
                    int n_classes, Algorithm algo, const Hyperparameters& hp, const EvalProtocol& protocol);

/// Model-agnostic evaluation loop; `predictor` trains on the split's training rows and
/// returns predictions for its test rows.
using SplitPredictor = std::function<std::vector<int>(const TrainTestSplit&, std::uint64_t seed)>;
EvalResult evaluate_with(const SplitPredictor& predictor, std::span<const int> labels,
                         std::span<const int> grid_index, int n_classes, const EvalProtocol& protocol);

void write_eval_json(const EvalResult& r, std::ostream& os);

}  // namespace chatter
