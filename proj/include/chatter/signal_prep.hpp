#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chatter/types.hpp"

namespace chatter {

struct EmbeddingParams {
    int delay = 1;
    int dimension = 2;

    /// Throws unless (dimension - 1) * delay < length.
    void validate(std::size_t length) const;
};

/// Row-major point set with uniform dimension.
struct PointCloud {
    int dimension = 0;
    std::vector<double> coords;
    std::string source;

    std::size_t size() const { return dimension == 0 ? 0 : coords.size() / dimension; }
    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * dimension, static_cast<std::size_t>(dimension)};
    }
    void validate() const;
};

/// Gaussian noise with variance P / 10^(snr/10), P the mean squared deviation from the mean.
TimeSeries add_noise(const TimeSeries& ts, double snr_db, std::uint64_t seed);

/// Normalized ordinal-pattern entropy in [0, 1]. Equal values rank by position.
double permutation_entropy(std::span<const double> x, int order, int delay);

/// Delay at the first local maximum of order-3 permutation entropy over 1..max_delay.
/// A delay of 1 is returned directly when entropy is already saturated there.
int select_delay(std::span<const double> x, int max_delay);

/// Smallest dimension in [2, 8] with false-nearest-neighbour fraction below 1%.
int select_dimension(std::span<const double> x, int delay);

/// Fraction of false nearest neighbours moving from `dimension` to `dimension + 1`.
/// Pairs within 1e-9 of the series range (per coordinate) count as the same point.
double false_neighbor_fraction(std::span<const double> x, int delay, int dimension,
                               double ratio_threshold = 10.0);

PointCloud takens_embed(std::span<const double> x, const EmbeddingParams& ep);
PointCloud takens_embed(const TimeSeries& ts, const EmbeddingParams& ep);

/// Greedy farthest-point subsample starting at point 0; returns the chosen indices in
/// selection order. Clouds at or below `max_points` are returned whole.
std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t max_points);
PointCloud farthest_point_subsample(const PointCloud& pc, std::size_t max_points);

void write_cloud_csv(const PointCloud& pc, std::ostream& os);
PointCloud read_cloud_csv(std::istream& is, std::string source = {});

}  // namespace chatter
