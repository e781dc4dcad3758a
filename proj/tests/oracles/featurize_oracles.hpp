#pragma once

// Direct evaluations of the featurizations: Carlsson coordinates term by term and template
// features as a double loop over Lagrange products in product form.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "chatter/featurize.hpp"

namespace oracle {

// Coordinates written out term by term.
inline std::array<double, 5> cc_oracle(const chatter::PersistenceDiagram& d) {
    std::array<double, 5> f{0, 0, 0, 0, 0};
    if (d.pairs.empty()) return f;
    double dmax = -1e300;
    for (const auto& p : d.pairs) dmax = std::max(dmax, p.death);
    for (const auto& p : d.pairs) {
        const double b = p.birth, de = p.death, life = de - b;
        f[0] += b * life;
        f[1] += (dmax - de) * life;
        f[2] += b * b * life * life * life * life;
        f[3] += (dmax - de) * (dmax - de) * life * life * life * life;
        f[4] = std::max(f[4], life);
    }
    return f;
}

inline double lagrange_oracle(const std::vector<double>& nodes, std::size_t j, double x) {
    double num = 1.0, den = 1.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i == j) continue;
        num *= x - nodes[i];
        den *= nodes[j] - nodes[i];
    }
    return num / den;
}

inline std::vector<double> tf_oracle(const chatter::PersistenceDiagram& d, const chatter::TemplateMesh& m) {
    std::vector<double> v(m.birth_nodes.size() * m.lifetime_nodes.size(), 0.0);
    for (const auto& p : d.pairs) {
        const double x = p.birth, y = p.death - p.birth;
        if (x < m.birth_nodes.front() || x > m.birth_nodes.back() || y < m.lifetime_nodes.front() ||
            y > m.lifetime_nodes.back())
            continue;
        for (std::size_t i = 0; i < m.birth_nodes.size(); ++i)
            for (std::size_t j = 0; j < m.lifetime_nodes.size(); ++j)
                v[i * m.lifetime_nodes.size() + j] +=
                    std::abs(lagrange_oracle(m.birth_nodes, i, x) * lagrange_oracle(m.lifetime_nodes, j, y));
    }
    return v;
}

}  // namespace oracle
