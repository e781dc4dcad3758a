#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chatter {

enum class MillingMode { up, down };

std::string to_string(MillingMode mode);
MillingMode milling_mode_from_string(const std::string& s);

/// Spindle speed (rpm) and axial depth of cut (m) of one grid cell.
struct GridPoint {
    double spindle_speed = 0.0;
    double depth_of_cut = 0.0;
};

enum class Class3 { stable, hopf, period_doubling };
enum class Class2 { stable, chatter };

std::string to_string(Class3 c);
std::string to_string(Class2 c);
Class3 class3_from_string(const std::string& s);

struct StabilityLabel {
    Class3 class3 = Class3::stable;
    std::complex<double> dominant_eigenvalue{0.0, 0.0};

    Class2 class2() const { return class3 == Class3::stable ? Class2::stable : Class2::chatter; }
};

/// Uniformly sampled tool displacement record.
struct TimeSeries {
    std::string id;
    std::vector<double> samples;
    double sample_interval = 0.0;
    GridPoint grid_point;
    std::optional<StabilityLabel> label;
    std::optional<double> snr_db;
    // Set when the integrator hit the displacement guard; the record is truncated there.
    bool blew_up = false;

    void validate() const;
};

/// Error with a pipeline stage tag, used for CLI diagnostics.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace chatter
