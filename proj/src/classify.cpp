#include "chatter/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "chatter/types.hpp"
#include "model_internal.hpp"

namespace chatter {

using detail::BinaryScorer;

void Dataset::validate() const {
    if (n_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (static_cast<std::size_t>(X.rows()) != y.size() || grid_index.size() != y.size())
        throw std::invalid_argument("dataset row counts disagree");
    if (!X.allFinite()) throw std::invalid_argument("dataset has non-finite features");
    for (int c : y)
        if (c < 0 || c >= n_classes) throw std::invalid_argument("label out of range: " + std::to_string(c));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.n_classes = n_classes;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= y.size()) throw std::out_of_range("subset row out of range");
        out.X.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(rows[k]));
        out.y.push_back(y[rows[k]]);
        out.grid_index.push_back(grid_index[rows[k]]);
    }
    return out;
}

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::svm: return "svm";
        case Algorithm::logistic: return "logistic";
        case Algorithm::random_forest: return "random_forest";
        case Algorithm::gradient_boost: return "gradient_boost";
    }
    return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
    for (Algorithm a : all_algorithms())
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown classifier: " + s);
}

std::vector<Algorithm> all_algorithms() {
    return {Algorithm::svm, Algorithm::logistic, Algorithm::random_forest, Algorithm::gradient_boost};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
    if (X.rows() == 0) throw std::invalid_argument("cannot standardize zero rows");
    Standardizer s;
    s.mean = X.colwise().mean();
    s.scale = ((X.rowwise() - s.mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
        if (!(s.scale(j) > 1e-300)) s.scale(j) = 1.0;
    return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& X) const {
    if (X.cols() != mean.size()) throw std::invalid_argument("standardizer width mismatch");
    return ((X.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

std::vector<int> Model::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != features_)
        throw std::invalid_argument("feature width " + std::to_string(X.cols()) + " does not match trained width " +
                                    std::to_string(features_));
    if (standardizer_) return predict_prepared(standardizer_->transform(X));
    return predict_prepared(X);
}

namespace {

int argmax_row(const Eigen::MatrixXd& S, Eigen::Index r) {
    int best = 0;
    for (Eigen::Index k = 1; k < S.cols(); ++k)
        if (S(r, k) > S(r, best)) best = static_cast<int>(k);
    return best;
}

// Binary problems use one scorer (positive = classes[1]); otherwise one scorer per class.
class OneVsRest : public Model {
public:
    OneVsRest(Algorithm a, std::vector<int> classes) : algo_(a), classes_(std::move(classes)) {}
    Algorithm algorithm() const override { return algo_; }
    std::vector<std::unique_ptr<BinaryScorer>> scorers;

protected:
    std::vector<int> predict_prepared(const Eigen::MatrixXd& X) const override {
        std::vector<int> out(X.rows());
        if (scorers.size() == 1) {
            Eigen::VectorXd s = scorers[0]->score(X);
            for (Eigen::Index r = 0; r < X.rows(); ++r) out[r] = s(r) > 0.0 ? classes_[1] : classes_[0];
            return out;
        }
        Eigen::MatrixXd S(X.rows(), static_cast<Eigen::Index>(scorers.size()));
        for (std::size_t k = 0; k < scorers.size(); ++k) S.col(static_cast<Eigen::Index>(k)) = scorers[k]->score(X);
        for (Eigen::Index r = 0; r < X.rows(); ++r) out[r] = classes_[argmax_row(S, r)];
        return out;
    }

private:
    Algorithm algo_;
    std::vector<int> classes_;
};

class ConstantModel : public Model {
public:
    ConstantModel(Algorithm a, int label) : algo_(a), label_(label) {}
    Algorithm algorithm() const override { return algo_; }

protected:
    std::vector<int> predict_prepared(const Eigen::MatrixXd& X) const override {
        return std::vector<int>(X.rows(), label_);
    }

private:
    Algorithm algo_;
    int label_;
};

class BoostScorer : public BinaryScorer {
public:
    double init = 0.0;
    double rate = 0.1;
    std::vector<DecisionTree> stages;
    Eigen::VectorXd score(const Eigen::MatrixXd& X) const override {
        Eigen::VectorXd f = Eigen::VectorXd::Constant(X.rows(), init);
        for (const auto& t : stages)
            for (Eigen::Index r = 0; r < X.rows(); ++r) f(r) += rate * t.predict_value(X.row(r))[0];
        return f;
    }
};

// Logistic-loss boosting: trees fit the residual y - p, leaves take one Newton step.
std::unique_ptr<BinaryScorer> fit_boost(const Eigen::MatrixXd& X, const Eigen::VectorXd& ypm,
                                        const Hyperparameters& hp, std::mt19937_64& rng) {
    const Eigen::Index n = X.rows();
    Eigen::VectorXd t = (ypm.array() > 0).cast<double>();
    const double prior = t.mean();
    auto m = std::make_unique<BoostScorer>();
    m->init = std::log(prior / (1.0 - prior));
    m->rate = hp.boost_learning_rate;
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    Eigen::VectorXd f = Eigen::VectorXd::Constant(n, m->init);
    DecisionTree::Options opts;
    opts.max_depth = hp.boost_depth;
    std::vector<double> resid(n);
    for (int s = 0; s < hp.boost_stages; ++s) {
        Eigen::ArrayXd prob = 1.0 / (1.0 + (-f.array()).exp());
        for (Eigen::Index r = 0; r < n; ++r) resid[r] = t(r) - prob(r);
        DecisionTree tree;
        tree.fit_regressor(X, resid, rows, opts, rng);
        auto& nodes = tree.nodes();
        std::vector<double> num(nodes.size(), 0.0), den(nodes.size(), 0.0);
        std::vector<int> leaf(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            leaf[r] = tree.leaf_of(X.row(r));
            num[leaf[r]] += resid[r];
            den[leaf[r]] += prob(r) * (1.0 - prob(r));
        }
        for (std::size_t k = 0; k < nodes.size(); ++k)
            if (nodes[k].feature < 0) nodes[k].value = {std::abs(den[k]) < 1e-150 ? 0.0 : num[k] / den[k]};
        for (Eigen::Index r = 0; r < n; ++r) f(r) += m->rate * nodes[leaf[r]].value[0];
        m->stages.push_back(std::move(tree));
    }
    return m;
}

}  // namespace

Eigen::MatrixXd RandomForest::predict_proba(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.rows(), n_classes_);
    for (const auto& t : trees_)
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const auto& v = t.predict_value(X.row(r));
            for (int k = 0; k < n_classes_; ++k) P(r, k) += v[k];
        }
    if (!trees_.empty()) P /= static_cast<double>(trees_.size());
    return P;
}

std::vector<int> RandomForest::predict_prepared(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd P = predict_proba(X);
    std::vector<int> out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out[r] = argmax_row(P, r);
    return out;
}

std::unique_ptr<Model> train(const Dataset& ds, Algorithm algo, const Hyperparameters& hp, std::uint64_t seed) {
    ds.validate();
    if (ds.rows() == 0) throw std::invalid_argument("cannot train on an empty dataset");
    const std::set<int> present(ds.y.begin(), ds.y.end());
    std::unique_ptr<Model> model;
    std::optional<Standardizer> st;
    Eigen::MatrixXd X = ds.X;
    if (hp.standardize) {
        st = Standardizer::fit(ds.X);
        X = st->transform(ds.X);
    }

    if (present.size() < 2) {
        if (!hp.allow_single_class)
            throw std::invalid_argument("training set contains a single class (" + std::to_string(*present.begin()) +
                                        ")");
        model = std::make_unique<ConstantModel>(algo, *present.begin());
    } else if (algo == Algorithm::random_forest) {
        auto rf = std::make_unique<RandomForest>();
        rf->n_classes_ = ds.n_classes;
        std::mt19937_64 rng(seed);
        DecisionTree::Options opts;
        opts.max_depth = hp.forest_depth;
        opts.max_features = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(X.cols())))));
        const int n = static_cast<int>(ds.rows());
        std::uniform_int_distribution<int> pick(0, n - 1);
        std::vector<int> boot(n);
        for (int k = 0; k < hp.forest_trees; ++k) {
            for (int& b : boot) b = pick(rng);
            DecisionTree t;
            t.fit_classifier(X, ds.y, ds.n_classes, boot, opts, rng);
            rf->trees_.push_back(std::move(t));
        }
        model = std::move(rf);
    } else {
        std::vector<int> classes(present.begin(), present.end());
        auto ovr = std::make_unique<OneVsRest>(algo, classes);
        std::mt19937_64 rng(seed);
        std::vector<int> positives;
        if (classes.size() == 2) positives = {classes[1]};
        else positives = classes;
        for (int pos : positives) {
            Eigen::VectorXd ypm(X.rows());
            for (Eigen::Index r = 0; r < X.rows(); ++r) ypm(r) = ds.y[r] == pos ? 1.0 : -1.0;
            switch (algo) {
                case Algorithm::svm: ovr->scorers.push_back(detail::fit_svm(X, ypm, hp)); break;
                case Algorithm::logistic: ovr->scorers.push_back(detail::fit_logistic(X, ypm, hp)); break;
                case Algorithm::gradient_boost: ovr->scorers.push_back(fit_boost(X, ypm, hp, rng)); break;
                case Algorithm::random_forest: break;
            }
        }
        model = std::move(ovr);
    }
    model->set_feature_count(ds.X.cols());
    model->set_standardizer(std::move(st));
    return model;
}

TrainTestSplit split(std::span<const int> labels, int n_classes, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must be in (0,1)");
    const std::size_t n = labels.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) throw std::invalid_argument("split leaves an empty train or test side");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    TrainTestSplit s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());

    std::vector<bool> in_data(n_classes, false), in_train(n_classes, false);
    for (int c : labels) in_data.at(c) = true;
    for (auto r : s.train) in_train[labels[r]] = true;
    for (int c = 0; c < n_classes; ++c)
        if (in_data[c] && !in_train[c])
            throw std::invalid_argument("split leaves class " + std::to_string(c) + " absent from training");
    return s;
}

TrainTestSplit split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    return split(ds.y, ds.n_classes, train_fraction, seed);
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size() || truth.empty()) throw std::invalid_argument("accuracy needs equal non-empty spans");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) ok += truth[i] == predicted[i];
    return static_cast<double>(ok) / static_cast<double>(truth.size());
}

EvalProtocol default_protocol(std::uint64_t master_seed) {
    EvalProtocol p;
    std::mt19937_64 g(master_seed);
    for (int k = 0; k < p.repeats; ++k) p.seeds.push_back(g());
    return p;
}

EvalResult evaluate_with(const SplitPredictor& predictor, std::span<const int> labels, std::span<const int> grid_index,
                         int n_classes, const EvalProtocol& protocol) {
    if (protocol.repeats <= 0 || protocol.seeds.size() != static_cast<std::size_t>(protocol.repeats))
        throw std::invalid_argument("protocol needs one seed per repeat");
    if (grid_index.size() != labels.size()) throw std::invalid_argument("grid index and labels disagree in length");
    EvalResult r;
    r.grid_index.assign(grid_index.begin(), grid_index.end());
    r.misclassified.assign(labels.size(), 0);
    r.tested.assign(labels.size(), 0);
    for (int k = 0; k < protocol.repeats; ++k) {
        try {
            const TrainTestSplit s = split(labels, n_classes, protocol.train_fraction, protocol.seeds[k]);
            const std::vector<int> pred = predictor(s, protocol.seeds[k]);
            if (pred.size() != s.test.size()) throw std::logic_error("predictor returned the wrong number of labels");
            std::vector<int> truth;
            for (std::size_t t = 0; t < s.test.size(); ++t) {
                truth.push_back(labels[s.test[t]]);
                ++r.tested[s.test[t]];
                if (pred[t] != truth.back()) ++r.misclassified[s.test[t]];
            }
            r.per_split_accuracies.push_back(accuracy(truth, pred));
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("repeat " + std::to_string(k) + ": " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error("repeat " + std::to_string(k) + ": " + e.what());
        }
    }
    const double m = std::accumulate(r.per_split_accuracies.begin(), r.per_split_accuracies.end(), 0.0) /
                     static_cast<double>(r.per_split_accuracies.size());
    double v = 0.0;
    for (double a : r.per_split_accuracies) v += (a - m) * (a - m);
    r.mean_accuracy = m;
    r.std_accuracy = std::sqrt(v / static_cast<double>(r.per_split_accuracies.size()));
    return r;
}

EvalResult evaluate(const Dataset& ds, Algorithm algo, const Hyperparameters& hp, const EvalProtocol& protocol) {
    ds.validate();
    return evaluate_with(
        [&](const TrainTestSplit& s, std::uint64_t seed) {
            auto model = train(ds.subset(s.train), algo, hp, seed);
            return model->predict(ds.subset(s.test).X);
        },
        ds.y, ds.grid_index, ds.n_classes, protocol);
}

EvalResult evaluate(const FeatureBuilder& features, std::span<const int> labels, std::span<const int> grid_index,
                    int n_classes, Algorithm algo, const Hyperparameters& hp, const EvalProtocol& protocol) {
    return evaluate_with(
        [&](const TrainTestSplit& s, std::uint64_t seed) {
            Dataset ds;
            ds.X = features(s.train);
            ds.y.assign(labels.begin(), labels.end());
            ds.grid_index.assign(grid_index.begin(), grid_index.end());
            ds.n_classes = n_classes;
            auto model = train(ds.subset(s.train), algo, hp, seed);
            return model->predict(ds.subset(s.test).X);
        },
        labels, grid_index, n_classes, protocol);
}

void write_eval_json(const EvalResult& r, std::ostream& os) {
    nlohmann::ordered_json j;
    j["mean_accuracy"] = r.mean_accuracy;
    j["std_accuracy"] = r.std_accuracy;
    j["per_split_accuracies"] = r.per_split_accuracies;
    j["grid_index"] = r.grid_index;
    j["misclassified"] = r.misclassified;
    j["tested"] = r.tested;
    os << j.dump(2) << '\n';
}

}  // namespace chatter
