#pragma once

#include <span>
#include <vector>

#include "chatter/parallel.hpp"
#include "chatter/types.hpp"

namespace chatter {

/// Single-DOF milling process. Units: kg, rad/s, N/m^2, m.
struct ProcessParams {
    double modal_mass = 0.0;
    double natural_frequency = 0.0;
    double damping_ratio = 0.0;
    double tangential_coefficient = 0.0;
    double normal_ratio = 0.0;  // K_n / K_t
    int teeth = 1;
    double radial_immersion = 1.0;
    MillingMode mode = MillingMode::down;
    double feed_per_tooth = 0.0;

    void validate() const;
};

struct SimConfig {
    int samples_per_delay_period = 64;
    int total_periods = 60;
    int transient_periods = 20;
    double perturbation = 1e-6;
    // Integration steps per output sample; the step is tau / (samples_per_delay_period * substeps).
    int substeps = 2;
    bool include_forcing = true;
    double blowup_guard = 1.0;

    void validate() const;
};

/// Tooth pass period tau = 60 / (z * Omega) in seconds.
double delay_period(double spindle_speed_rpm, int teeth);

/// Angular position of tooth n (1-based), reduced to [0, 2pi).
double tooth_angle(double t, int n, double spindle_speed_rpm, int teeth);

/// Entry and exit angles of the cutting arc, measured from the vertical.
struct CutArc {
    double entry;
    double exit;
};
CutArc cut_arc(MillingMode mode, double radial_immersion);

/// Screening function g_n: 1 inside [entry, exit), 0 elsewhere.
int engagement(double theta, MillingMode mode, double radial_immersion);

/// Periodic directional force coefficient h(t) at spindle speed Omega.
double specific_force(double t, const ProcessParams& p, double spindle_speed_rpm);

/// Integrates the delayed milling equation by the method of steps with RK4.
TimeSeries simulate(const ProcessParams& p, const GridPoint& g, const SimConfig& cfg);

/// Full record including the transient, used when noise must be applied before truncation.
TimeSeries simulate_full(const ProcessParams& p, const GridPoint& g, const SimConfig& cfg);

std::vector<TimeSeries> simulate_batch(const ProcessParams& p, std::span<const GridPoint> points,
                                       const SimConfig& cfg, Exec exec = Exec::parallel);

/// Per-period RMS of the period-to-period difference x(t + tau) - x(t). This difference
/// obeys the homogeneous delayed equation, so its trend tracks the dominant multiplier
/// regardless of the periodic forcing.
std::vector<double> period_difference_rms(std::span<const double> samples, int samples_per_period);

/// Least-squares slope of log(period_difference_rms) per period. Positive means growth.
double log_growth_rate(std::span<const double> samples, int samples_per_period);

}  // namespace chatter
