#include "chatter/trees.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace chatter {

namespace {

struct GiniCost {
    std::span<const int> y;
    int classes;
    std::vector<double> total, left;

    void init(std::span<const int> rows, const std::vector<int>& pos, int b, int e) {
        total.assign(classes, 0.0);
        for (int i = b; i < e; ++i) total[y[rows[pos[i]]]] += 1.0;
    }
    void clear_left() { left.assign(classes, 0.0); }
    void move_left(int row) { left[y[row]] += 1.0; }
    static double cost(const std::vector<double>& c, double n) {
        if (n <= 0.0) return 0.0;
        double s = 0.0;
        for (double v : c) s += v * v;
        return n - s / n;
    }
    double node_cost(double n) const { return cost(total, n); }
    double split_cost(double nl, double nr) const {
        double sl = 0.0, sr = 0.0;
        for (int k = 0; k < classes; ++k) {
            const double r = total[k] - left[k];
            sl += left[k] * left[k];
            sr += r * r;
        }
        return (nl > 0.0 ? nl - sl / nl : 0.0) + (nr > 0.0 ? nr - sr / nr : 0.0);
    }
    std::vector<double> leaf(double n) const {
        std::vector<double> p(total);
        for (double& v : p) v /= n;
        return p;
    }
};

struct SquaredErrorCost {
    std::span<const double> t;
    double sum = 0.0, sumsq = 0.0, lsum = 0.0, lsumsq = 0.0;

    void init(std::span<const int> rows, const std::vector<int>& pos, int b, int e) {
        sum = sumsq = 0.0;
        for (int i = b; i < e; ++i) {
            const double v = t[rows[pos[i]]];
            sum += v, sumsq += v * v;
        }
    }
    void clear_left() { lsum = lsumsq = 0.0; }
    void move_left(int row) { lsum += t[row], lsumsq += t[row] * t[row]; }
    static double cost(double s, double ss, double n) { return n <= 0.0 ? 0.0 : ss - s * s / n; }
    double node_cost(double n) const { return cost(sum, sumsq, n); }
    double split_cost(double nl, double nr) const {
        return cost(lsum, lsumsq, nl) + cost(sum - lsum, sumsq - lsumsq, nr);
    }
    std::vector<double> leaf(double n) const { return {sum / n}; }
};

}  // namespace

// Each candidate feature keeps the node's sample positions in ascending feature order;
// children are produced by stable partitions, so every node sweeps a presorted range.
struct DecisionTree::GrowState {
    const Eigen::MatrixXd& X;
    std::span<const int> rows;  // position -> data row
    const Options& opts;
    std::mt19937_64& rng;
    std::vector<std::vector<int>> sorted;  // per feature, positions
    std::vector<char> goes_left;

    double value(int f, int pos) const { return X(rows[pos], f); }
};

namespace {

std::vector<std::vector<int>> presort(const Eigen::MatrixXd& X, std::span<const int> rows) {
    std::vector<std::vector<int>> sorted(X.cols());
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
        auto& s = sorted[f];
        s.resize(rows.size());
        std::iota(s.begin(), s.end(), 0);
        std::stable_sort(s.begin(), s.end(), [&](int a, int b) { return X(rows[a], f) < X(rows[b], f); });
    }
    return sorted;
}

}  // namespace

template <class Cost>
void DecisionTree::grow(GrowState& st, int begin, int end, int depth, Cost& cost, int node) {
    const int n = end - begin;
    const auto& any = st.sorted[0];
    cost.init(st.rows, any, begin, end);
    nodes_[node].value = cost.leaf(n);
    const double parent = cost.node_cost(n);
    if (depth >= st.opts.max_depth || n < st.opts.min_samples_split || parent <= 1e-12 * n) return;

    const int p = static_cast<int>(st.X.cols());
    std::vector<int> features(p);
    std::iota(features.begin(), features.end(), 0);
    if (st.opts.max_features > 0 && st.opts.max_features < p) {
        for (int i = 0; i < st.opts.max_features; ++i) {
            std::uniform_int_distribution<int> pick(i, p - 1);
            std::swap(features[i], features[pick(st.rng)]);
        }
        features.resize(st.opts.max_features);
        std::sort(features.begin(), features.end());
    }

    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (int f : features) {
        const auto& order = st.sorted[f];
        cost.clear_left();
        for (int i = begin; i + 1 < end; ++i) {
            cost.move_left(st.rows[order[i]]);
            const double a = st.value(f, order[i]), b = st.value(f, order[i + 1]);
            if (!(b > a)) continue;
            const double gain = parent - cost.split_cost(i + 1 - begin, end - i - 1);
            if (gain > best_gain * (1.0 + 1e-12) + 1e-14) {
                best_gain = gain;
                best_feature = f;
                double mid = 0.5 * (a + b);
                if (!(mid < b)) mid = a;
                best_threshold = mid;
            }
        }
    }
    if (best_feature < 0) return;

    int n_left = 0;
    for (int i = begin; i < end; ++i) {
        const int pos = any[i];
        st.goes_left[pos] = st.value(best_feature, pos) <= best_threshold;
        n_left += st.goes_left[pos];
    }
    for (auto& order : st.sorted)
        std::stable_partition(order.begin() + begin, order.begin() + end, [&](int pos) { return st.goes_left[pos] != 0; });

    const int left = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const int right = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[node].feature = best_feature;
    nodes_[node].threshold = best_threshold;
    nodes_[node].left = left;
    nodes_[node].right = right;
    grow(st, begin, begin + n_left, depth + 1, cost, left);
    grow(st, begin + n_left, end, depth + 1, cost, right);
}

void DecisionTree::fit_classifier(const Eigen::MatrixXd& X, std::span<const int> y, int n_classes,
                                  std::span<const int> rows, const Options& opts, std::mt19937_64& rng) {
    if (rows.empty() || X.cols() == 0) throw std::invalid_argument("cannot fit a tree on zero rows or features");
    nodes_.assign(1, Node{});
    GrowState st{X, rows, opts, rng, presort(X, rows), std::vector<char>(rows.size(), 0)};
    GiniCost cost{y, n_classes, {}, {}};
    grow(st, 0, static_cast<int>(rows.size()), 0, cost, 0);
}

void DecisionTree::fit_regressor(const Eigen::MatrixXd& X, std::span<const double> target,
                                 std::span<const int> rows, const Options& opts, std::mt19937_64& rng) {
    if (rows.empty() || X.cols() == 0) throw std::invalid_argument("cannot fit a tree on zero rows or features");
    nodes_.assign(1, Node{});
    GrowState st{X, rows, opts, rng, presort(X, rows), std::vector<char>(rows.size(), 0)};
    SquaredErrorCost cost{target};
    grow(st, 0, static_cast<int>(rows.size()), 0, cost, 0);
}

int DecisionTree::leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int node = 0;
    while (nodes_[node].feature >= 0)
        node = x(nodes_[node].feature) <= nodes_[node].threshold ? nodes_[node].left : nodes_[node].right;
    return node;
}

int DecisionTree::depth() const {
    std::vector<int> d(nodes_.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].feature < 0) continue;
        d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
        best = std::max(best, d[i] + 1);
    }
    return best;
}

}  // namespace chatter
