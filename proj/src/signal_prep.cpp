#include "chatter/signal_prep.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "chatter/csv_io.hpp"

namespace chatter {

void EmbeddingParams::validate(std::size_t length) const {
    if (delay < 1) throw std::invalid_argument("embedding delay must be >= 1");
    if (dimension < 2) throw std::invalid_argument("embedding dimension must be >= 2");
    if (static_cast<std::size_t>(dimension - 1) * delay >= length)
        throw std::invalid_argument("series too short for embedding parameters");
}

void PointCloud::validate() const {
    if (dimension < 1) throw std::invalid_argument("point cloud dimension must be positive");
    if (coords.empty() || coords.size() % dimension != 0)
        throw std::invalid_argument("point cloud must hold whole points");
    for (double c : coords)
        if (!std::isfinite(c)) throw std::invalid_argument("point cloud has non-finite coordinates");
}

TimeSeries add_noise(const TimeSeries& ts, double snr_db, std::uint64_t seed) {
    const auto& x = ts.samples;
    if (x.empty()) throw std::invalid_argument("cannot add noise to an empty series");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double power = 0.0;
    for (double v : x) power += (v - mean) * (v - mean);
    power /= x.size();
    if (!(power > 0.0)) throw std::invalid_argument("cannot add noise to a zero-power series");

    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    TimeSeries out = ts;
    for (double& v : out.samples) v += noise(rng);
    out.snr_db = snr_db;
    return out;
}

namespace {

// Lehmer rank of the stable argsort of `window`.
std::size_t ordinal_rank(const double* window, int order, int* perm) {
    std::iota(perm, perm + order, 0);
    std::stable_sort(perm, perm + order, [&](int a, int b) { return window[a] < window[b]; });
    std::size_t rank = 0;
    for (int i = 0; i < order; ++i) {
        int smaller = 0;
        for (int j = i + 1; j < order; ++j)
            if (perm[j] < perm[i]) ++smaller;
        rank = rank * (order - i) + smaller;
    }
    return rank;
}

}  // namespace

double permutation_entropy(std::span<const double> x, int order, int delay) {
    if (order < 3 || order > 7) throw std::invalid_argument("permutation entropy order must lie in [3,7]");
    if (delay < 1) throw std::invalid_argument("permutation entropy delay must be >= 1");
    const std::size_t span = static_cast<std::size_t>(order - 1) * delay;
    if (x.size() <= span || x.size() - span < 100)
        throw std::invalid_argument("series too short: need at least 100 ordinal windows");
    const std::size_t windows = x.size() - span;

    std::size_t patterns = 1;
    for (int i = 2; i <= order; ++i) patterns *= i;
    std::vector<std::size_t> counts(patterns, 0);
    double window[7];
    int perm[7];
    for (std::size_t i = 0; i < windows; ++i) {
        for (int j = 0; j < order; ++j) window[j] = x[i + static_cast<std::size_t>(j) * delay];
        ++counts[ordinal_rank(window, order, perm)];
    }
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / windows;
        h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(patterns));
}

int select_delay(std::span<const double> x, int max_delay) {
    if (max_delay < 2) throw std::invalid_argument("max_delay must be >= 2");
    std::vector<double> pe;
    for (int d = 1; d <= max_delay; ++d) {
        if (d > 1 && (x.size() <= 2u * d || x.size() - 2u * d < 100)) break;
        pe.push_back(permutation_entropy(x, 3, d));
    }
    constexpr double saturated = 0.99;
    if (pe.front() >= saturated) return 1;
    for (std::size_t i = 1; i + 1 < pe.size(); ++i)
        if (pe[i] > pe[i - 1] && pe[i] >= pe[i + 1]) return static_cast<int>(i) + 1;
    return static_cast<int>(std::max_element(pe.begin(), pe.end()) - pe.begin()) + 1;
}

double false_neighbor_fraction(std::span<const double> x, int delay, int dimension,
                               double ratio_threshold) {
    if (delay < 1 || dimension < 1) throw std::invalid_argument("invalid FNN parameters");
    const std::size_t reach = static_cast<std::size_t>(dimension) * delay;
    if (x.size() <= reach + 1) throw std::invalid_argument("series too short for FNN test");
    const std::size_t m = x.size() - reach;  // points whose next coordinate exists

    // Nearest neighbours by sweeping outward in the first coordinate.
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<std::size_t> where(m);
    for (std::size_t r = 0; r < m; ++r) where[order[r]] = r;

    // Points closer than this are repeats up to rounding, not neighbours.
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double same = std::pow(1e-9 * (*hi_it - *lo_it), 2) * dimension;

    auto dist2 = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (int k = 0; k < dimension; ++k) {
            const double d = x[a + static_cast<std::size_t>(k) * delay] - x[b + static_cast<std::size_t>(k) * delay];
            s += d * d;
        }
        return s;
    };

    std::size_t counted = 0, false_count = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t r = where[i];
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = m;
        auto visit = [&](std::size_t j) {
            const double d = dist2(i, j);
            if (d > same && d < best) best = d, best_j = j;
        };
        for (std::size_t lo = r; lo-- > 0;) {
            const double gap = x[i] - x[order[lo]];
            if (gap * gap >= best) break;
            visit(order[lo]);
        }
        for (std::size_t hi = r + 1; hi < m; ++hi) {
            const double gap = x[order[hi]] - x[i];
            if (gap * gap >= best) break;
            visit(order[hi]);
        }
        if (best_j == m) continue;
        ++counted;
        const double extra = std::abs(x[i + reach] - x[best_j + reach]);
        if (extra / std::sqrt(best) > ratio_threshold) ++false_count;
    }
    return counted == 0 ? 0.0 : static_cast<double>(false_count) / counted;
}

int select_dimension(std::span<const double> x, int delay) {
    if (delay < 1) throw std::invalid_argument("delay must be >= 1");
    if (x.size() <= 2u * delay + 1) throw std::invalid_argument("series too short for dimension 2");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double var = 0.0, peak = 0.0;
    for (double v : x) var += (v - mean) * (v - mean), peak = std::max(peak, std::abs(v));
    const double sd = std::sqrt(var / x.size());
    if (sd <= 1e-9 * peak || peak == 0.0) return 2;  // numerically constant

    constexpr int max_dim = 8;
    for (int d = 2; d < max_dim; ++d) {
        if (x.size() <= static_cast<std::size_t>(d) * delay + 1) return d;
        if (false_neighbor_fraction(x, delay, d) < 0.01) return d;
    }
    return max_dim;
}

PointCloud takens_embed(std::span<const double> x, const EmbeddingParams& ep) {
    ep.validate(x.size());
    const std::size_t count = x.size() - static_cast<std::size_t>(ep.dimension - 1) * ep.delay;
    PointCloud pc;
    pc.dimension = ep.dimension;
    pc.coords.resize(count * ep.dimension);
    for (std::size_t i = 0; i < count; ++i)
        for (int k = 0; k < ep.dimension; ++k)
            pc.coords[i * ep.dimension + k] = x[i + static_cast<std::size_t>(k) * ep.delay];
    return pc;
}

PointCloud takens_embed(const TimeSeries& ts, const EmbeddingParams& ep) {
    PointCloud pc = takens_embed(std::span<const double>(ts.samples), ep);
    pc.source = ts.id;
    return pc;
}

std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t max_points) {
    const std::size_t n = pc.size();
    std::vector<std::size_t> chosen;
    if (n <= max_points) {
        chosen.resize(n);
        std::iota(chosen.begin(), chosen.end(), 0);
        return chosen;
    }
    if (max_points == 0) return chosen;
    const int dim = pc.dimension;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t current = 0;
    chosen.reserve(max_points);
    while (true) {
        chosen.push_back(current);
        if (chosen.size() == max_points) break;
        const double* c = pc.coords.data() + current * dim;
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* q = pc.coords.data() + i * dim;
            double d = 0.0;
            for (int k = 0; k < dim; ++k) d += (q[k] - c[k]) * (q[k] - c[k]);
            if (d < nearest[i]) nearest[i] = d;
            if (nearest[i] > far_d) far_d = nearest[i], far = i;
        }
        current = far;
    }
    return chosen;
}

PointCloud farthest_point_subsample(const PointCloud& pc, std::size_t max_points) {
    if (pc.size() <= max_points) return pc;
    const auto idx = farthest_point_indices(pc, max_points);
    PointCloud out;
    out.dimension = pc.dimension;
    out.source = pc.source;
    out.coords.reserve(idx.size() * pc.dimension);
    for (auto i : idx) {
        const auto p = pc.point(i);
        out.coords.insert(out.coords.end(), p.begin(), p.end());
    }
    return out;
}

void write_cloud_csv(const PointCloud& pc, std::ostream& os) {
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const auto p = pc.point(i);
        for (int k = 0; k < pc.dimension; ++k) os << (k ? "," : "") << fmt_double(p[k]);
        os << '\n';
    }
}

PointCloud read_cloud_csv(std::istream& is, std::string source) {
    PointCloud pc;
    pc.source = std::move(source);
    for (const auto& row : read_csv(is)) {
        if (pc.dimension == 0) pc.dimension = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != pc.dimension)
            throw std::runtime_error("cloud csv: ragged rows");
        for (const auto& cell : row) pc.coords.push_back(parse_double(cell));
    }
    return pc;
}

}  // namespace chatter
