#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "chatter/signal_prep.hpp"

using namespace chatter;
constexpr double pi = std::numbers::pi;

namespace {

// Ordinal patterns counted as rank vectors in a map.
double pe_oracle(const std::vector<double>& x, int order, int delay) {
    std::map<std::vector<int>, int> counts;
    const std::size_t windows = x.size() - static_cast<std::size_t>(order - 1) * delay;
    for (std::size_t i = 0; i < windows; ++i) {
        std::vector<int> idx(order);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return x[i + a * delay] < x[i + b * delay]; });
        ++counts[idx];
    }
    double h = 0.0;
    for (const auto& [pattern, c] : counts) {
        const double q = static_cast<double>(c) / windows;
        h -= q * std::log(q);
    }
    return h / std::lgamma(order + 1.0);
}

double fnn_oracle(const std::vector<double>& x, int delay, int dim, double threshold) {
    const std::size_t reach = static_cast<std::size_t>(dim) * delay;
    const std::size_t m = x.size() - reach;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double same = std::pow(1e-9 * (*hi - *lo), 2) * dim;
    int counted = 0, fals = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double best = 1e300;
        std::size_t bj = m;
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (int k = 0; k < dim; ++k) s += std::pow(x[i + k * delay] - x[j + k * delay], 2);
            if (s > same && s < best) best = s, bj = j;
        }
        if (bj == m) continue;
        ++counted;
        fals += std::abs(x[i + reach] - x[bj + reach]) / std::sqrt(best) > threshold;
    }
    return counted ? static_cast<double>(fals) / counted : 0.0;
}

std::vector<double> sine(std::size_t n, double period, double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * pi * i / period + phase);
    return x;
}

std::vector<double> uniform_noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

TimeSeries as_series(std::vector<double> x) {
    TimeSeries ts;
    ts.id = "s";
    ts.samples = std::move(x);
    ts.sample_interval = 1e-4;
    return ts;
}

double mean(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); }
double variance(const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / x.size();
}

}  // namespace

TEST_CASE("add_noise") {
    SUBCASE("variance follows the dB ratio") {
        // +-1 square wave has power exactly 1
        std::vector<double> x(100000);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i / 7) % 2 ? 1.0 : -1.0;
        x.back() = -x[x.size() - 2];
        const auto ts = as_series(x);
        const double p = variance(x);
        const auto noisy = add_noise(ts, 20.0, 42);
        REQUIRE(noisy.samples.size() == x.size());
        CHECK(noisy.sample_interval == ts.sample_interval);
        std::vector<double> e(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) e[i] = noisy.samples[i] - x[i];
        CHECK(variance(e) == doctest::Approx(0.01 * p).epsilon(0.01));
        CHECK(std::abs(mean(e)) < 5 * 0.1 / std::sqrt(1e5));
        const double snr = 10 * std::log10(p / variance(e));
        CHECK(std::abs(snr - 20.0) < 0.5);
        CHECK(noisy.snr_db.value() == 20.0);
    }
    SUBCASE("deterministic in the seed") {
        const auto ts = as_series(sine(5000, 64.0));
        CHECK(add_noise(ts, 25.0, 7).samples == add_noise(ts, 25.0, 7).samples);
        CHECK(add_noise(ts, 25.0, 7).samples != add_noise(ts, 25.0, 8).samples);
    }
    SUBCASE("constant input is rejected") { CHECK_THROWS(add_noise(as_series(std::vector<double>(100, 3.0)), 20.0, 1)); }
}

TEST_CASE("permutation_entropy") {
    std::vector<double> ramp(500);
    std::iota(ramp.begin(), ramp.end(), 0.0);
    CHECK(permutation_entropy(ramp, 3, 1) == 0.0);
    const auto noise = uniform_noise(200000, 3);
    CHECK(permutation_entropy(noise, 3, 1) == doctest::Approx(1.0).epsilon(0.02));
    const auto s = sine(5000, 100.0);
    const double h = permutation_entropy(s, 3, 1);
    CHECK(h > 0.0);
    CHECK(h < 1.0);
    CHECK_THROWS(permutation_entropy(ramp, 2, 1));
    CHECK_THROWS(permutation_entropy(ramp, 8, 1));
    CHECK_THROWS(permutation_entropy(std::vector<double>(101, 0.0), 3, 1));

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const int order = 3 + trial % 5, delay = 1 + trial % 4;
        auto x = uniform_noise(400 + 37 * trial, 100 + trial);
        // quantize so that ties occur
        if (trial % 2) for (auto& v : x) v = std::round(v * 4);
        CAPTURE(order);
        CAPTURE(delay);
        CHECK(permutation_entropy(x, order, delay) == doctest::Approx(pe_oracle(x, order, delay)).epsilon(1e-12));
    }
}

TEST_CASE("permutation entropy is invariant under monotone transforms") {
    auto x = uniform_noise(3000, 17);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += std::sin(0.05 * i);
    std::vector<double> y(x.size()), z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(3 * x[i]), z[i] = 5 * x[i] * x[i] * x[i] - 2;
    for (int order : {3, 4, 5})
        for (int delay : {1, 3}) {
            const double h = permutation_entropy(x, order, delay);
            CHECK(permutation_entropy(y, order, delay) == h);
            CHECK(permutation_entropy(z, order, delay) == h);
        }
}

TEST_CASE("select_delay") {
    SUBCASE("pure tone: order-3 entropy peaks at a third of the period") {
        for (double period : {48.0, 60.0, 64.0}) {
            const auto x = sine(4800, period, 0.3);
            CAPTURE(period);
            CHECK(std::abs(select_delay(x, 40) - period / 3) <= 1.0);
        }
    }
    SUBCASE("white noise: 1") { CHECK(select_delay(uniform_noise(20000, 5), 20) == 1); }
    SUBCASE("matches a sweep of the oracle") {
        for (double period : {30.0, 48.0, 64.0, 90.0}) {
            auto x = sine(6000, period);
            const auto n = uniform_noise(6000, 77);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.05 * (n[i] - 0.5) + 0.4 * std::sin(2 * pi * i / (period / 3));
            std::vector<double> pe;
            for (int d = 1; d <= 40; ++d) pe.push_back(pe_oracle(x, 3, d));
            int expected = 0;
            if (pe[0] >= 0.99) expected = 1;
            for (std::size_t i = 1; !expected && i + 1 < pe.size(); ++i)
                if (pe[i] > pe[i - 1] && pe[i] >= pe[i + 1]) expected = static_cast<int>(i) + 1;
            if (!expected) expected = static_cast<int>(std::max_element(pe.begin(), pe.end()) - pe.begin()) + 1;
            CAPTURE(period);
            CHECK(select_delay(x, 40) == expected);
        }
    }
    SUBCASE("deterministic and validated") {
        const auto x = sine(3000, 40.0);
        CHECK(select_delay(x, 20) == select_delay(x, 20));
        CHECK_THROWS(select_delay(x, 1));
    }
}

TEST_CASE("false nearest neighbours") {
    SUBCASE("fraction matches brute force") {
        const auto tone = sine(700, 32.0);
        CHECK(false_neighbor_fraction(tone, 8, 2) == doctest::Approx(fnn_oracle(tone, 8, 2, 10.0)).epsilon(1e-12));
        auto x = sine(900, 37.0);
        const auto n = uniform_noise(900, 8);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.3 * std::sin(2 * pi * i / 11.3) + 0.01 * n[i];
        for (int dim : {1, 2, 3, 4})
            for (int delay : {1, 4, 9}) {
                CAPTURE(dim);
                CAPTURE(delay);
                CHECK(false_neighbor_fraction(x, delay, dim) == doctest::Approx(fnn_oracle(x, delay, dim, 10.0)).epsilon(1e-12));
            }
    }
    SUBCASE("pure sine embeds in two dimensions") { CHECK(select_dimension(sine(3000, 64.0), 16) == 2); }
    SUBCASE("constant plus tiny noise does not crash") {
        auto x = uniform_noise(2000, 4);
        for (auto& v : x) v = 5.0 + 1e-12 * v;
        const int d = select_dimension(x, 1);
        CHECK(d >= 2);
        CHECK(d <= 8);
        CHECK(select_dimension(x, 1) == d);
    }
    SUBCASE("series too short") { CHECK_THROWS(select_dimension(std::vector<double>(3, 1.0), 2)); }
}

TEST_CASE("takens_embed") {
    const std::vector<double> x{1, 2, 3, 4};
    const auto pc = takens_embed(x, {1, 2});
    REQUIRE(pc.size() == 3);
    CHECK(pc.coords == std::vector<double>{1, 2, 2, 3, 3, 4});
    const auto c = takens_embed(std::vector<double>(10, 2.5), {2, 3});
    for (double v : c.coords) CHECK(v == 2.5);
    CHECK_THROWS(takens_embed(x, {2, 3}));
    CHECK_THROWS(takens_embed(x, {0, 2}));
    CHECK_THROWS(takens_embed(x, {1, 1}));

    SUBCASE("point count formula") {
        for (std::size_t len = 2; len < 40; ++len)
            for (int delay = 1; delay < 8; ++delay)
                for (int dim = 2; dim < 7; ++dim) {
                    const std::vector<double> s(len, 1.0);
                    if (static_cast<std::size_t>((dim - 1) * delay) >= len) {
                        CHECK_THROWS(takens_embed(s, {delay, dim}));
                        continue;
                    }
                    const auto e = takens_embed(s, {delay, dim});
                    CHECK(e.size() == len - (dim - 1) * delay);
                    CHECK(e.dimension == dim);
                }
    }
    SUBCASE("quarter-period delay of a sine traces a circle") {
        const auto s = sine(64, 64.0);
        const auto e = takens_embed(s, {16, 2});
        for (std::size_t i = 0; i < e.size(); ++i) {
            const auto q = e.point(i);
            CHECK(std::abs(std::hypot(q[0], q[1]) - 1.0) < 1e-6);
        }
    }
    SUBCASE("commutes with amplitude scaling") {
        const auto s = uniform_noise(300, 12);
        std::vector<double> t(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = -3.5 * s[i];
        const auto a = takens_embed(s, {3, 4}), b = takens_embed(t, {3, 4});
        for (std::size_t i = 0; i < a.coords.size(); ++i) CHECK(b.coords[i] == -3.5 * a.coords[i]);
    }
}

TEST_CASE("farthest point subsampling") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    PointCloud pc;
    pc.dimension = 3;
    for (int i = 0; i < 3 * 500; ++i) pc.coords.push_back(u(rng));
    const auto idx = farthest_point_indices(pc, 50);
    REQUIRE(idx.size() == 50);
    CHECK(idx.front() == 0);
    // each choice maximizes the distance to those already chosen
    auto d2 = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += std::pow(pc.point(a)[k] - pc.point(b)[k], 2);
        return s;
    };
    for (std::size_t k = 1; k < idx.size(); ++k) {
        auto gap = [&](std::size_t p) {
            double m = 1e300;
            for (std::size_t j = 0; j < k; ++j) m = std::min(m, d2(p, idx[j]));
            return m;
        };
        const double chosen = gap(idx[k]);
        for (std::size_t p = 0; p < pc.size(); ++p) CHECK(gap(p) <= chosen);
    }
    const auto sub = farthest_point_subsample(pc, 50);
    CHECK(sub.size() == 50);
    CHECK(farthest_point_subsample(pc, 1000).coords == pc.coords);
}

TEST_CASE("cloud csv round trip") {
    PointCloud pc;
    pc.dimension = 2;
    pc.coords = {0.1, -2.0, 1.0 / 3.0, 1e-17};
    std::stringstream ss;
    write_cloud_csv(pc, ss);
    const auto back = read_cloud_csv(ss, "x");
    CHECK(back.dimension == 2);
    CHECK(back.coords == pc.coords);
}
