#pragma once

#include <complex>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "chatter/milling_model.hpp"
#include "chatter/parallel.hpp"
#include "chatter/types.hpp"

namespace chatter {

struct MonodromyResult {
    std::complex<double> dominant_eigenvalue{0.0, 0.0};
    double spectral_radius = 0.0;
    int discretization_order = 0;
    // Full spectrum, sorted by decreasing modulus.
    std::vector<std::complex<double>> eigenvalues;
};

/// First-order semi-discretization of the delayed state equation over one tooth period.
/// `order` is the number of sub-intervals per period; the map acts on
/// (x_i, v_i, x_{i-1}, ..., x_{i-order}).
MonodromyResult build_monodromy(const ProcessParams& p, const GridPoint& g, int order);

/// Returns nullopt for a real positive multiplier outside the unit circle, which neither a
/// Hopf nor a flip exit describes; such points are excluded from datasets.
std::optional<StabilityLabel> classify_eigenvalue(const MonodromyResult& mr, double tol = 1e-6);

struct GridSpec {
    double speed_min = 0.0, speed_max = 0.0;  // rpm
    double depth_min = 0.0, depth_max = 0.0;  // m
    int speed_count = 2, depth_count = 2;

    void validate() const;
    std::size_t size() const { return static_cast<std::size_t>(speed_count) * depth_count; }
    /// Row-major in speed: index = speed_index * depth_count + depth_index.
    GridPoint point(int speed_index, int depth_index) const;
};

struct GridEntry {
    int speed_index = 0;
    int depth_index = 0;
    GridPoint point;
    std::optional<MonodromyResult> monodromy;
    std::optional<StabilityLabel> label;
    bool undetermined = false;
    std::string error;  // non-empty when the monodromy computation failed

    bool usable() const { return label.has_value(); }
};

struct LabeledGrid {
    GridSpec spec;
    std::vector<GridEntry> entries;
};

LabeledGrid label_grid(const ProcessParams& p, const GridSpec& gs, int order, double tol = 1e-6,
                       Exec exec = Exec::parallel);

/// Columns: speed_index, depth_index, spindle_speed, depth_of_cut, re, im, modulus, class3, class2.
void write_grid_csv(const LabeledGrid& grid, std::ostream& os);
LabeledGrid read_grid_csv(std::istream& is, const GridSpec& spec);

}  // namespace chatter
