#pragma once

#include <Eigen/Dense>

#include <memory>
#include <vector>

#include "chatter/classify.hpp"

namespace chatter::detail {

/// Real-valued score of a binary problem; positive favors the positive class.
class BinaryScorer {
public:
    virtual ~BinaryScorer() = default;
    virtual Eigen::VectorXd score(const Eigen::MatrixXd& X) const = 0;
};

/// y holds +1 / -1.
std::unique_ptr<BinaryScorer> fit_svm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparameters& hp);
std::unique_ptr<BinaryScorer> fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                           const Hyperparameters& hp);

}  // namespace chatter::detail
