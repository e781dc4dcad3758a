#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace chatter {

/// CART tree over dense features. Classification uses Gini impurity and stores class
/// fractions at leaves; regression uses squared error and stores a single value.
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        std::vector<double> value;
    };

    struct Options {
        int max_depth = 2;
        int max_features = 0;  // 0 considers every feature
        int min_samples_split = 2;
    };

    /// `rows` selects (possibly repeated) training rows; candidate features are drawn per
    /// split from `rng` when max_features is below the feature count.
    void fit_classifier(const Eigen::MatrixXd& X, std::span<const int> y, int n_classes,
                        std::span<const int> rows, const Options& opts, std::mt19937_64& rng);
    void fit_regressor(const Eigen::MatrixXd& X, std::span<const double> target, std::span<const int> rows,
                       const Options& opts, std::mt19937_64& rng);

    /// Index of the leaf reached by a feature row.
    int leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    const std::vector<double>& predict_value(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return nodes_[leaf_of(x)].value;
    }
    std::vector<Node>& nodes() { return nodes_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    int depth() const;

private:
    struct GrowState;
    template <class Cost>
    void grow(GrowState& st, int begin, int end, int depth, Cost& cost, int node);

    std::vector<Node> nodes_;
};

}  // namespace chatter
