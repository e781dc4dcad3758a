#include <cmath>
#include <limits>
#include <string>

#include "chatter/types.hpp"
#include "model_internal.hpp"

namespace chatter::detail {

namespace {

class SvmScorer : public BinaryScorer {
public:
    Eigen::MatrixXd support;
    Eigen::VectorXd coef;  // alpha_i * y_i
    double rho = 0.0;
    double gamma = 1.0;

    Eigen::VectorXd score(const Eigen::MatrixXd& X) const override {
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < support.rows(); ++i)
                s += coef(i) * std::exp(-gamma * (support.row(i) - X.row(r)).squaredNorm());
            out(r) = s - rho;
        }
        return out;
    }
};

class LinearScorer : public BinaryScorer {
public:
    Eigen::VectorXd w;
    double bias = 0.0;
    Eigen::VectorXd score(const Eigen::MatrixXd& X) const override {
        return (X * w).array() + bias;
    }
};

}  // namespace

// Dual soft-margin SVM by sequential minimal optimization with second-order working set
// selection.
std::unique_ptr<BinaryScorer> fit_svm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparameters& hp) {
    const Eigen::Index n = X.rows();
    const double C = hp.svm_c;
    if (!(C > 0.0)) throw std::invalid_argument("svm C must be positive");
    double gamma = hp.svm_gamma;
    if (!(gamma > 0.0)) {
        const double mean = X.mean();
        const double var = X.size() > 0 ? (X.array() - mean).square().mean() : 0.0;
        gamma = var > 0.0 ? 1.0 / (static_cast<double>(X.cols()) * var) : 1.0;
    }

    Eigen::VectorXd sq = X.rowwise().squaredNorm();
    Eigen::MatrixXd K = X * X.transpose();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) = std::exp(-gamma * std::max(0.0, sq(i) + sq(j) - 2.0 * K(i, j)));

    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
    constexpr double tau = 1e-12;
    const long long cap = std::max<long long>(10'000'000LL, 100LL * n);
    auto up = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) < C) || (y(t) < 0 && alpha(t) > 0); };
    auto low = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < C); };

    long long iter = 0;
    for (;; ++iter) {
        if (iter >= cap) throw ConvergenceError("svm solver hit the iteration cap of " + std::to_string(cap));
        double gmax = -std::numeric_limits<double>::infinity();
        Eigen::Index i = -1;
        for (Eigen::Index t = 0; t < n; ++t)
            if (up(t) && -y(t) * G(t) >= gmax) {
                if (-y(t) * G(t) > gmax || i < 0) i = t;
                gmax = -y(t) * G(t);
            }
        double gmax2 = -std::numeric_limits<double>::infinity();
        Eigen::Index j = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < n; ++t) {
            if (!low(t)) continue;
            gmax2 = std::max(gmax2, y(t) * G(t));
            if (i < 0) continue;
            const double diff = gmax + y(t) * G(t);
            if (diff > 0.0) {
                double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
                if (a <= 0.0) a = tau;
                const double obj = -diff * diff / a;
                if (obj < best) best = obj, j = t;
            }
        }
        if (i < 0 || j < 0 || gmax + gmax2 < hp.svm_tol) break;

        const double ai = alpha(i), aj = alpha(j);
        const double qij = y(i) * y(j) * K(i, j);
        if (y(i) != y(j)) {
            double a = K(i, i) + K(j, j) + 2.0 * qij;
            if (a <= 0.0) a = tau;
            const double delta = (-G(i) - G(j)) / a;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0.0) {
                if (alpha(j) < 0.0) alpha(j) = 0.0, alpha(i) = diff;
            } else if (alpha(i) < 0.0) {
                alpha(i) = 0.0, alpha(j) = -diff;
            }
            if (diff > 0.0) {
                if (alpha(i) > C) alpha(i) = C, alpha(j) = C - diff;
            } else if (alpha(j) > C) {
                alpha(j) = C, alpha(i) = C + diff;
            }
        } else {
            double a = K(i, i) + K(j, j) - 2.0 * qij;
            if (a <= 0.0) a = tau;
            const double delta = (G(i) - G(j)) / a;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > C) {
                if (alpha(i) > C) alpha(i) = C, alpha(j) = sum - C;
            } else if (alpha(j) < 0.0) {
                alpha(j) = 0.0, alpha(i) = sum;
            }
            if (sum > C) {
                if (alpha(j) > C) alpha(j) = C, alpha(i) = sum - C;
            } else if (alpha(i) < 0.0) {
                alpha(i) = 0.0, alpha(j) = sum;
            }
        }
        const double di = alpha(i) - ai, dj = alpha(j) - aj;
        for (Eigen::Index t = 0; t < n; ++t) G(t) += y(t) * (y(i) * K(t, i) * di + y(j) * K(t, j) * dj);
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = y(t) * G(t);
        if (alpha(t) >= C) {
            if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (alpha(t) <= 0.0) {
            if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++free, sum_free += yg;
        }
    }

    auto m = std::make_unique<SvmScorer>();
    m->rho = free > 0 ? sum_free / free : 0.5 * (ub + lb);
    m->gamma = gamma;
    int nsv = 0;
    for (Eigen::Index t = 0; t < n; ++t) nsv += alpha(t) > 0.0;
    m->support.resize(nsv, X.cols());
    m->coef.resize(nsv);
    for (Eigen::Index t = 0, k = 0; t < n; ++t)
        if (alpha(t) > 0.0) m->support.row(k) = X.row(t), m->coef(k++) = alpha(t) * y(t);
    return m;
}

// L2-penalized logistic regression, C * sum(log-loss) + |w|^2 / 2 with a free intercept,
// minimized by damped Newton steps.
std::unique_ptr<BinaryScorer> fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                           const Hyperparameters& hp) {
    const Eigen::Index n = X.rows(), p = X.cols();
    const double C = hp.logistic_c;
    if (!(C > 0.0)) throw std::invalid_argument("logistic C must be positive");
    Eigen::MatrixXd A(n, p + 1);
    A.leftCols(p) = X;
    A.col(p).setOnes();
    Eigen::VectorXd t = (y.array() > 0).cast<double>();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);

    auto objective = [&](const Eigen::VectorXd& b) {
        Eigen::ArrayXd z = A * b;
        // log(1 + e^z) - t z, computed stably
        Eigen::ArrayXd loss = z.max(0.0) + (-z.abs()).exp().log1p() - t.array() * z;
        return C * loss.sum() + 0.5 * b.head(p).squaredNorm();
    };

    double f = objective(beta);
    bool converged = false;
    for (int it = 0; it < hp.logistic_max_iter; ++it) {
        Eigen::ArrayXd z = A * beta;
        Eigen::ArrayXd prob = 1.0 / (1.0 + (-z).exp());
        Eigen::VectorXd grad = C * (A.transpose() * (prob - t.array()).matrix());
        grad.head(p) += beta.head(p);
        if (grad.lpNorm<Eigen::Infinity>() <= hp.logistic_tol * std::max(1.0, static_cast<double>(n))) {
            converged = true;
            break;
        }
        Eigen::ArrayXd wts = (prob * (1.0 - prob)).max(1e-12);
        Eigen::MatrixXd H = C * (A.transpose() * wts.matrix().asDiagonal() * A);
        H.diagonal().head(p).array() += 1.0;
        H(p, p) += 1e-10;
        Eigen::VectorXd step = H.ldlt().solve(grad);
        double s = 1.0, fn = f;
        Eigen::VectorXd cand;
        for (int h = 0; h < 40; ++h, s *= 0.5) {
            cand = beta - s * step;
            fn = objective(cand);
            if (fn <= f - 1e-4 * s * grad.dot(step)) break;
        }
        const double change = (cand - beta).lpNorm<Eigen::Infinity>();
        beta = cand;
        const double fold = f;
        f = fn;
        if (change <= 1e-12 * (1.0 + beta.lpNorm<Eigen::Infinity>()) && std::abs(fold - f) <= 1e-14 * std::abs(f)) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw ConvergenceError("logistic regression did not converge within " + std::to_string(hp.logistic_max_iter) +
                               " iterations");
    auto m = std::make_unique<LinearScorer>();
    m->w = beta.head(p);
    m->bias = beta(p);
    return m;
}

}  // namespace chatter::detail
