#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "chatter/config.hpp"
#include "chatter/milling_model.hpp"
#include "chatter/stability.hpp"

using namespace chatter;
constexpr double pi = std::numbers::pi;

TEST_CASE("tooth angle follows rotation plus tooth offset") {
    CHECK(tooth_angle(0.0, 1, 9000.0, 4) == doctest::Approx(0.0));
    CHECK(tooth_angle(0.0, 3, 9000.0, 4) == doctest::Approx(pi));
    const double omega = 12000.0;
    CHECK(tooth_angle(60.0 / (4.0 * omega), 1, omega, 4) == doctest::Approx(pi / 2).epsilon(1e-12));
    // reduced modulo 2 pi
    const double full_turn = 60.0 / omega;
    CHECK(tooth_angle(1.25 * full_turn, 1, omega, 4) == doctest::Approx(pi / 2).epsilon(1e-9));
    CHECK_THROWS(tooth_angle(0.0, 0, omega, 4));
    CHECK_THROWS(tooth_angle(0.0, 5, omega, 4));
    CHECK_THROWS(tooth_angle(-1.0, 1, omega, 4));
}

TEST_CASE("engagement arcs for up and down milling") {
    CHECK(engagement(1e-6, MillingMode::up, 0.25) == 1);
    CHECK(engagement(pi / 2, MillingMode::up, 0.25) == 0);
    CHECK(engagement(pi - 1e-6, MillingMode::down, 0.25) == 1);
    CHECK(engagement(pi / 2, MillingMode::down, 0.25) == 0);
    CHECK(engagement(1.5 * pi, MillingMode::down, 0.25) == 0);
    CHECK_THROWS(engagement(0.1, MillingMode::up, 0.0));
    CHECK_THROWS(engagement(0.1, MillingMode::up, 1.5));

    for (double ri : {0.1, 0.25, 0.5, 0.8, 1.0})
        for (auto mode : {MillingMode::up, MillingMode::down}) {
            const int n = 200000;
            int inside = 0, transitions = 0, prev = engagement(0.0, mode, ri);
            for (int k = 0; k < n; ++k) {
                const int e = engagement(2 * pi * k / n, mode, ri);
                inside += e;
                transitions += e != prev;
                prev = e;
            }
            transitions += prev != engagement(0.0, mode, ri);  // wrap-around
            CAPTURE(ri);
            CHECK(transitions <= 2);  // one contiguous arc
            CHECK(2 * pi * inside / n == doctest::Approx(std::acos(1 - 2 * ri)).epsilon(1e-3));
        }
}

TEST_CASE("specific force") {
    ProcessParams p = default_process_params();
    SUBCASE("no tooth in cut gives zero") {
        p.teeth = 1;
        p.mode = MillingMode::up;
        // theta = pi: outside the up-milling arc [0, pi/3)
        const double omega = 10000.0;
        CHECK(specific_force(30.0 / omega, p, omega) == 0.0);
    }
    SUBCASE("single tooth at a right angle") {
        p.teeth = 1;
        p.radial_immersion = 1.0;
        p.mode = MillingMode::down;
        p.normal_ratio = 0.3;
        const double omega = 10000.0;
        const double t = 15.0 / omega;  // theta = pi/2
        CHECK(specific_force(t, p, omega) == doctest::Approx(p.tangential_coefficient * 0.3).epsilon(1e-9));
    }
    SUBCASE("tau periodic") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.0, 0.01);
        for (double omega : {6000.0, 14321.0, 25000.0}) {
            const double tau = delay_period(omega, p.teeth);
            for (int k = 0; k < 200; ++k) {
                const double t = u(rng);
                const double a = specific_force(t, p, omega), b = specific_force(t + tau, p, omega);
                CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)) * p.tangential_coefficient / 1e8 + 1e-9 * std::abs(a));
            }
        }
    }
}

namespace {

// Free damped oscillator from x(0)=x0, v(0)=0.
double damped(double t, const ProcessParams& p, double x0) {
    const double z = p.damping_ratio, wn = p.natural_frequency;
    const double wd = wn * std::sqrt(1 - z * z);
    return x0 * std::exp(-z * wn * t) * (std::cos(wd * t) + z / std::sqrt(1 - z * z) * std::sin(wd * t));
}

double rms(const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s / a.size());
}

}  // namespace

TEST_CASE("zero depth reduces to the free damped oscillator") {
    const ProcessParams p = default_process_params();
    SimConfig cfg;
    const GridPoint g{10000.0, 0.0};
    const TimeSeries ts = simulate_full(p, g, cfg);
    const int n = 10 * cfg.samples_per_delay_period;
    REQUIRE(ts.samples.size() > static_cast<std::size_t>(n));
    double worst = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double t = k * ts.sample_interval;
        const double env = cfg.perturbation * std::exp(-p.damping_ratio * p.natural_frequency * t);
        worst = std::max(worst, std::abs(ts.samples[k] - damped(t, p, cfg.perturbation)) / env);
    }
    CHECK(worst < 0.01);
}

TEST_CASE("homogeneous problem is linear in the perturbation") {
    const ProcessParams p = default_process_params();
    SimConfig a;
    a.include_forcing = false;
    SimConfig b = a;
    b.perturbation = 2 * a.perturbation;
    for (double depth : {0.0, 0.001}) {
        const auto x = simulate(p, {12000.0, depth}, a), y = simulate(p, {12000.0, depth}, b);
        REQUIRE(x.samples.size() == y.samples.size());
        for (std::size_t k = 0; k < x.samples.size(); ++k)
            CHECK(std::abs(y.samples[k] - 2 * x.samples[k]) <= 1e-9 * std::abs(2 * x.samples[k]) + 1e-300);
    }
}

TEST_CASE("growth sign agrees with the monodromy on clear-cut points") {
    const ProcessParams p = default_process_params();
    SimConfig cfg;
    bool saw_decay = false, saw_growth = false;
    for (double omega = 8000.0; omega <= 25000.0 && !(saw_decay && saw_growth); omega += 1700.0)
        for (double depth = 2e-4; depth <= 3e-3; depth += 4e-4) {
            const double rho = build_monodromy(p, {omega, depth}, 60).spectral_radius;
            const bool decay_case = rho > 0.4 && rho < 0.75;
            const bool growth_case = rho > 1.2 && rho < 1.5;
            if (!decay_case && !growth_case) continue;
            const auto ts = simulate(p, {omega, depth}, cfg);
            const auto d = period_difference_rms(ts.samples, cfg.samples_per_delay_period);
            REQUIRE(d.size() >= 5);
            CAPTURE(omega);
            CAPTURE(depth);
            CAPTURE(rho);
            const double rate = log_growth_rate(ts.samples, cfg.samples_per_delay_period);
            if (decay_case) {
                saw_decay = true;
                CHECK(rate < 0.0);
                CHECK(d[3] < d[0]);
            } else {
                saw_growth = true;
                CHECK(rate > 0.0);
                CHECK(d[3] > d[0]);
            }
        }
    CHECK(saw_decay);
    CHECK(saw_growth);
}

TEST_CASE("halving the step barely changes the signal") {
    const ProcessParams p = default_process_params();
    SimConfig coarse;
    SimConfig fine = coarse;
    fine.substeps = 2 * coarse.substeps;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> speed(8000.0, 25000.0), depth(1e-4, 3e-3);
    int checked = 0;
    while (checked < 5) {
        const GridPoint g{speed(rng), depth(rng)};
        const auto a = simulate(p, g, coarse), b = simulate(p, g, fine);
        if (a.blew_up || b.blew_up) continue;
        REQUIRE(a.samples.size() == b.samples.size());
        std::vector<double> diff(a.samples.size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = a.samples[k] - b.samples[k];
        CAPTURE(g.spindle_speed);
        CAPTURE(g.depth_of_cut);
        CHECK(rms(diff) < 1e-3 * rms(b.samples));
        ++checked;
    }
}

TEST_CASE("simulation is deterministic and well formed") {
    const ProcessParams p = default_process_params();
    SimConfig cfg;
    const auto a = simulate(p, {15000.0, 1e-3}, cfg), b = simulate(p, {15000.0, 1e-3}, cfg);
    CHECK(a.samples == b.samples);
    CHECK(a.samples.size() == static_cast<std::size_t>((cfg.total_periods - cfg.transient_periods) * cfg.samples_per_delay_period));
    CHECK(a.sample_interval == doctest::Approx(delay_period(15000.0, 4) / cfg.samples_per_delay_period));
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("deeply unstable points are truncated at the guard and flagged") {
    const ProcessParams p = default_process_params();
    SimConfig cfg;
    const auto ts = simulate(p, {8500.0, 3e-3}, cfg);
    CHECK(ts.blew_up);
    for (double x : ts.samples) CHECK(std::abs(x) <= cfg.blowup_guard);
}

TEST_CASE("parameter validation") {
    ProcessParams p = default_process_params();
    p.damping_ratio = 1.5;
    CHECK_THROWS(p.validate());
    p = default_process_params();
    p.radial_immersion = 0.0;
    CHECK_THROWS(p.validate());
    p = default_process_params();
    p.teeth = 0;
    CHECK_THROWS(p.validate());
    SimConfig c;
    c.samples_per_delay_period = 8;
    CHECK_THROWS(c.validate());
    c = SimConfig{};
    c.total_periods = 25;
    c.transient_periods = 20;
    CHECK_THROWS(c.validate());
    CHECK_THROWS(simulate(default_process_params(), {0.0, 1e-3}, SimConfig{}));
}

TEST_CASE("serial and parallel batches agree") {
    const ProcessParams p = default_process_params();
    std::vector<GridPoint> pts{{9000.0, 5e-4}, {15000.0, 2e-3}, {22000.0, 1e-3}};
    const auto a = simulate_batch(p, pts, SimConfig{}, Exec::serial);
    const auto b = simulate_batch(p, pts, SimConfig{}, Exec::parallel);
    for (std::size_t k = 0; k < pts.size(); ++k) CHECK(a[k].samples == b[k].samples);
}
