#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chatter/persistence.hpp"

namespace chatter {

enum class FeatureMethod { carlsson, template_functions };

std::string to_string(FeatureMethod m);
FeatureMethod feature_method_from_string(const std::string& s);

/// Five-bit selector over f1..f5; bit i selects f_{i+1}.
using SubsetMask = std::uint8_t;

struct CarlssonFeatures {
    std::array<double, 5> f{};

    /// Selected coordinates in increasing coordinate order.
    std::vector<double> select(SubsetMask mask) const;
};

/// The polynomial coordinates f1..f5. Empty diagrams map to zeros; infinite deaths are rejected.
CarlssonFeatures carlsson_coordinates(const PersistenceDiagram& dgm);

/// All 31 non-empty masks, ordered by popcount then numeric value.
std::vector<SubsetMask> enumerate_subsets();
std::string mask_name(SubsetMask mask);

struct BirthLifetime {
    double birth;
    double lifetime;
};

std::vector<BirthLifetime> to_birth_lifetime(const PersistenceDiagram& dgm);
std::vector<PersistencePair> from_birth_lifetime(std::span<const BirthLifetime> points);

/// Lagrange basis polynomial of node j on the given mesh.
double lagrange_basis(std::span<const double> mesh, std::size_t j, double x);

struct TemplateMesh {
    std::vector<double> birth_nodes;     // strictly increasing
    std::vector<double> lifetime_nodes;  // strictly increasing, positive
    double padding_fraction = 0.05;

    void validate() const;
    std::size_t feature_count() const { return birth_nodes.size() * lifetime_nodes.size(); }
    bool encloses(const BirthLifetime& p) const;
};

/// Uniform mesh over the padded bounding box of the given birth-lifetime points.
TemplateMesh build_template_mesh(std::span<const BirthLifetime> points, std::size_t birth_count = 5,
                                 std::size_t lifetime_count = 5, double padding_fraction = 0.05);

/// v_ij = sum over diagram points of |l_i(birth) l_j(lifetime)|, row-major in (i, j).
/// Points outside the mesh box contribute nothing; with zero padding they are an error.
std::vector<double> template_features(const PersistenceDiagram& dgm, const TemplateMesh& mesh);

/// Upper bound on |d v_ij| per unit move of one point inside the mesh box.
double template_lipschitz_bound(const TemplateMesh& mesh);

struct FeatureVector {
    std::vector<double> values;
    FeatureMethod method = FeatureMethod::carlsson;
    std::vector<int> dims;
    std::vector<std::string> names;
};

FeatureVector carlsson_vector(const PersistenceDiagram& dgm, SubsetMask mask = 0x1f);
FeatureVector template_vector(const PersistenceDiagram& dgm, const TemplateMesh& mesh);

/// H_a block followed by H_b block.
FeatureVector concat_features(const FeatureVector& a, const FeatureVector& b);

}  // namespace chatter
