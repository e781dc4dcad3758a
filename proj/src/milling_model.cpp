#include "chatter/milling_model.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace chatter {

namespace {
constexpr double two_pi = 2.0 * std::numbers::pi;
}

std::string to_string(MillingMode mode) { return mode == MillingMode::up ? "up" : "down"; }

MillingMode milling_mode_from_string(const std::string& s) {
    if (s == "up") return MillingMode::up;
    if (s == "down") return MillingMode::down;
    throw std::invalid_argument("unknown milling mode '" + s + "'");
}

void ProcessParams::validate() const {
    if (!(modal_mass > 0.0)) throw std::invalid_argument("modal_mass must be positive");
    if (!(natural_frequency > 0.0)) throw std::invalid_argument("natural_frequency must be positive");
    if (!(damping_ratio > 0.0 && damping_ratio < 1.0))
        throw std::invalid_argument("damping_ratio must lie in (0,1)");
    if (teeth < 1) throw std::invalid_argument("teeth must be >= 1");
    if (!(radial_immersion > 0.0 && radial_immersion <= 1.0))
        throw std::invalid_argument("radial_immersion must lie in (0,1]");
    if (!std::isfinite(tangential_coefficient) || !std::isfinite(normal_ratio) ||
        !std::isfinite(feed_per_tooth))
        throw std::invalid_argument("cutting coefficients must be finite");
}

void SimConfig::validate() const {
    if (samples_per_delay_period < 1 || substeps < 1)
        throw std::invalid_argument("sampling counts must be positive");
    if (samples_per_delay_period * substeps < 32)
        throw std::invalid_argument("delay must be resolved by at least 32 integration steps");
    if (total_periods < 1 || transient_periods < 0 || transient_periods >= total_periods)
        throw std::invalid_argument("need 0 <= transient_periods < total_periods");
    if (total_periods - transient_periods < 10)
        throw std::invalid_argument("retained duration must cover at least 10 delay periods");
    if (!(blowup_guard > 0.0)) throw std::invalid_argument("blowup_guard must be positive");
}

void TimeSeries::validate() const {
    if (samples.size() < 2) throw std::invalid_argument("time series needs at least 2 samples");
    if (!(sample_interval > 0.0)) throw std::invalid_argument("sample_interval must be positive");
    for (double x : samples)
        if (!std::isfinite(x)) throw std::invalid_argument("time series has non-finite samples");
}

double delay_period(double spindle_speed_rpm, int teeth) {
    if (!(spindle_speed_rpm > 0.0) || teeth < 1)
        throw std::invalid_argument("spindle speed and teeth must be positive");
    return 60.0 / (teeth * spindle_speed_rpm);
}

double tooth_angle(double t, int n, double spindle_speed_rpm, int teeth) {
    if (teeth < 1 || n < 1 || n > teeth) throw std::invalid_argument("tooth index out of range");
    if (t < 0.0) throw std::invalid_argument("time must be non-negative");
    double theta = two_pi * spindle_speed_rpm / 60.0 * t + two_pi * (n - 1) / teeth;
    theta = std::fmod(theta, two_pi);
    if (theta < 0.0) theta += two_pi;
    return theta;
}

CutArc cut_arc(MillingMode mode, double radial_immersion) {
    if (!(radial_immersion > 0.0 && radial_immersion <= 1.0))
        throw std::invalid_argument("radial_immersion must lie in (0,1]");
    if (mode == MillingMode::up) return {0.0, std::acos(1.0 - 2.0 * radial_immersion)};
    return {std::acos(2.0 * radial_immersion - 1.0), std::numbers::pi};
}

int engagement(double theta, MillingMode mode, double radial_immersion) {
    const CutArc arc = cut_arc(mode, radial_immersion);
    return (theta >= arc.entry && theta < arc.exit) ? 1 : 0;
}

double specific_force(double t, const ProcessParams& p, double spindle_speed_rpm) {
    const CutArc arc = cut_arc(p.mode, p.radial_immersion);
    double h = 0.0;
    for (int n = 1; n <= p.teeth; ++n) {
        const double theta = tooth_angle(t, n, spindle_speed_rpm, p.teeth);
        if (theta < arc.entry || theta >= arc.exit) continue;
        const double s = std::sin(theta);
        h += p.tangential_coefficient * (std::cos(theta) + p.normal_ratio * s) * s;
    }
    return h;
}

namespace {

TimeSeries integrate(const ProcessParams& p, const GridPoint& g, const SimConfig& cfg,
                     int transient_periods) {
    p.validate();
    cfg.validate();
    if (!(g.spindle_speed > 0.0) || g.depth_of_cut < 0.0)
        throw std::invalid_argument("grid point needs positive speed and non-negative depth");

    const double tau = delay_period(g.spindle_speed, p.teeth);
    const int steps_per_period = cfg.samples_per_delay_period * cfg.substeps;
    const long total_steps = static_cast<long>(cfg.total_periods) * steps_per_period;
    const double dt = tau / steps_per_period;
    const double wn = p.natural_frequency;
    const double c1 = 2.0 * p.damping_ratio * wn;
    const double c0 = wn * wn;
    const double gain = g.depth_of_cut / p.modal_mass;
    const double feed = cfg.include_forcing ? p.feed_per_tooth : 0.0;

    // h(t) is tau-periodic and jumps where a tooth enters or leaves the cut. Steps are split
    // at those instants so every RK4 stage sees a smooth h; per step of one period, store the
    // pieces with h at their left end, midpoint and right end (one-sided at the ends).
    struct Piece {
        double a, b, ha, hm, hb;
    };
    const CutArc arc = cut_arc(p.mode, p.radial_immersion);
    const double omega_rad = two_pi * g.spindle_speed / 60.0;
    std::vector<double> jumps;
    for (double phi : {arc.entry, arc.exit}) jumps.push_back(std::fmod(phi / omega_rad, tau));
    std::vector<std::vector<Piece>> pieces(steps_per_period);
    const double nudge = 1e-9 * dt;
    for (int j = 0; j < steps_per_period; ++j) {
        std::vector<double> cuts{0.0, 1.0};
        for (double tj : jumps) {
            const double u = tj / dt - j;
            if (u > 1e-9 && u < 1.0 - 1e-9) cuts.push_back(u);
        }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double a = cuts[k], b = cuts[k + 1];
            const double ta = (j + a) * dt, tb = (j + b) * dt;
            pieces[j].push_back({a, b, specific_force(ta + nudge, p, g.spindle_speed),
                                 specific_force(0.5 * (ta + tb), p, g.spindle_speed),
                                 specific_force(tb - nudge, p, g.spindle_speed)});
        }
    }

    std::vector<double> x(total_steps + 1, 0.0), v(total_steps + 1, 0.0);
    x[0] = cfg.perturbation;

    auto accel = [&](double xi, double vi, double xd, double h) {
        return -c1 * vi - c0 * xi - gain * h * (xi - xd) - gain * h * feed;
    };

    long last = total_steps;
    bool blew_up = false;
    for (long i = 0; i < total_steps; ++i) {
        const long d = i - steps_per_period;
        // the history is zero before t = 0, so the step ending at tau must not see x(0)
        const bool pre = d < 0;
        const double hx0 = pre ? 0.0 : x[d], hx1 = pre ? 0.0 : x[d + 1];
        const double hv0 = pre ? 0.0 : dt * v[d], hv1 = pre ? 0.0 : dt * v[d + 1];
        // cubic Hermite interpolant of the stored history
        auto lag = [&](double u) {
            const double u2 = u * u, u3 = u2 * u;
            return (2 * u3 - 3 * u2 + 1) * hx0 + (u3 - 2 * u2 + u) * hv0 + (3 * u2 - 2 * u3) * hx1 + (u3 - u2) * hv1;
        };
        double xs = x[i], vs = v[i];
        for (const Piece& pc : pieces[i % steps_per_period]) {
            const double hstep = (pc.b - pc.a) * dt;
            const double xda = lag(pc.a), xdm = lag(0.5 * (pc.a + pc.b)), xdb = lag(pc.b);
            const double k1x = vs, k1v = accel(xs, vs, xda, pc.ha);
            const double k2x = vs + 0.5 * hstep * k1v, k2v = accel(xs + 0.5 * hstep * k1x, k2x, xdm, pc.hm);
            const double k3x = vs + 0.5 * hstep * k2v, k3v = accel(xs + 0.5 * hstep * k2x, k3x, xdm, pc.hm);
            const double k4x = vs + hstep * k3v, k4v = accel(xs + hstep * k3x, k4x, xdb, pc.hb);
            xs += hstep / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            vs += hstep / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        x[i + 1] = xs;
        v[i + 1] = vs;
        if (!std::isfinite(x[i + 1]) || std::abs(x[i + 1]) > cfg.blowup_guard) {
            last = i;
            blew_up = true;
            break;
        }
    }

    const long spp = cfg.samples_per_delay_period;
    const long first_kept = static_cast<long>(transient_periods) * spp;
    const long end_sample = static_cast<long>(cfg.total_periods) * spp;  // exclusive
    long last_sample = std::min(end_sample - 1, last / cfg.substeps);
    long begin = first_kept;
    if (last_sample < first_kept + 1) {
        // blow-up inside the transient: keep the window that precedes the guard crossing
        const long retained = end_sample - first_kept;
        begin = std::max(0L, last_sample + 1 - retained);
    }

    TimeSeries ts;
    ts.grid_point = g;
    ts.sample_interval = dt * cfg.substeps;
    ts.blew_up = blew_up;
    for (long k = begin; k <= last_sample; ++k) ts.samples.push_back(x[k * cfg.substeps]);
    if (ts.samples.size() < 2)
        throw std::runtime_error("simulation diverged before producing two samples");
    return ts;
}

}  // namespace

TimeSeries simulate(const ProcessParams& p, const GridPoint& g, const SimConfig& cfg) {
    return integrate(p, g, cfg, cfg.transient_periods);
}

TimeSeries simulate_full(const ProcessParams& p, const GridPoint& g, const SimConfig& cfg) {
    return integrate(p, g, cfg, 0);
}

std::vector<TimeSeries> simulate_batch(const ProcessParams& p, std::span<const GridPoint> points,
                                       const SimConfig& cfg, Exec exec) {
    std::vector<TimeSeries> out(points.size());
    if (exec == Exec::serial) {
        for (std::size_t i = 0; i < points.size(); ++i) out[i] = simulate(p, points[i], cfg);
        return out;
    }
    std::vector<std::string> errors(points.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(points.size()); ++i) {
        try {
            out[i] = simulate(p, points[i], cfg);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);
    return out;
}

std::vector<double> period_difference_rms(std::span<const double> samples, int samples_per_period) {
    if (samples_per_period < 1) throw std::invalid_argument("samples_per_period must be positive");
    const std::size_t P = samples_per_period;
    std::vector<double> rms;
    for (std::size_t k = 1; (k + 1) * P <= samples.size(); ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < P; ++j) {
            const double d = samples[k * P + j] - samples[(k - 1) * P + j];
            acc += d * d;
        }
        rms.push_back(std::sqrt(acc / P));
    }
    return rms;
}

double log_growth_rate(std::span<const double> samples, int samples_per_period) {
    const auto rms = period_difference_rms(samples, samples_per_period);
    if (rms.size() < 2) throw std::invalid_argument("need at least three periods to estimate growth");
    double scale = 0.0;
    for (double s : samples) scale = std::max(scale, std::abs(s));
    // Differences at the rounding floor carry no trend information.
    const double floor = 1e-12 * scale;
    std::vector<double> ks, ys;
    for (std::size_t k = 0; k < rms.size(); ++k) {
        if (rms[k] <= floor && !ks.empty()) break;
        ks.push_back(static_cast<double>(k));
        ys.push_back(std::log(std::max(rms[k], 1e-300)));
    }
    if (ks.size() < 2) {
        return std::log(std::max(rms.back(), 1e-300)) - std::log(std::max(rms.front(), 1e-300));
    }
    const double n = static_cast<double>(ks.size());
    double mk = 0.0, my = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) mk += ks[i], my += ys[i];
    mk /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        sxy += (ks[i] - mk) * (ys[i] - my);
        sxx += (ks[i] - mk) * (ks[i] - mk);
    }
    return sxy / sxx;
}

void set_thread_count(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace chatter
