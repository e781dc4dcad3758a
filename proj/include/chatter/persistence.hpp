#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chatter/parallel.hpp"
#include "chatter/signal_prep.hpp"

namespace chatter {

class DistanceMatrix {
public:
    DistanceMatrix() = default;
    /// Takes a full row-major n x n matrix; throws unless symmetric with zero diagonal.
    DistanceMatrix(std::size_t n, std::vector<double> entries);

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    std::span<const double> row(std::size_t i) const { return {d_.data() + i * n_, n_}; }

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

DistanceMatrix distance_matrix(const PointCloud& pc);

/// Smallest r such that some point reaches every other within r. Rips complexes at or
/// beyond this scale are cones, so no homology in positive degree survives it.
double enclosing_radius(const DistanceMatrix& dm);

struct PersistencePair {
    double birth = 0.0;
    double death = 0.0;  // +inf for essential classes

    bool operator==(const PersistencePair&) const = default;
    auto operator<=>(const PersistencePair&) const = default;
};

struct PersistenceDiagram {
    int dimension = 0;
    std::vector<PersistencePair> pairs;  // sorted, zero-persistence pairs removed

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
    /// The diagram without classes of infinite death.
    PersistenceDiagram finite() const;
};

struct RipsOptions {
    int max_dim = 2;
    // Filtration cutoff; non-positive means the enclosing radius (exact diagrams).
    double threshold = 0.0;
    std::size_t max_points = 300;
};

/// Vietoris-Rips persistence over Z/2 in degrees 0..max_dim. Returns one diagram per degree.
std::vector<PersistenceDiagram> rips_persistence(const DistanceMatrix& dm, const RipsOptions& opts = {});
std::vector<PersistenceDiagram> rips_persistence(const PointCloud& pc, const RipsOptions& opts = {});

std::vector<std::vector<PersistenceDiagram>> rips_persistence_batch(std::span<const PointCloud> clouds,
                                                                    const RipsOptions& opts,
                                                                    Exec exec = Exec::parallel);

/// Rows of (series_id, dim, birth, death), death "inf" for essential classes.
void write_diagrams_csv(const std::string& series_id, std::span<const PersistenceDiagram> diagrams,
                        std::ostream& os, bool header = false);
/// Keyed by series id; each entry holds diagrams for degrees 0..max_dim (missing degrees empty).
std::map<std::string, std::vector<PersistenceDiagram>> read_diagrams_csv(std::istream& is, int max_dim);

}  // namespace chatter
