#include "chatter/featurize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace chatter {

std::string to_string(FeatureMethod m) { return m == FeatureMethod::carlsson ? "CC" : "TF"; }

FeatureMethod feature_method_from_string(const std::string& s) {
    if (s == "CC" || s == "cc" || s == "carlsson") return FeatureMethod::carlsson;
    if (s == "TF" || s == "tf" || s == "template") return FeatureMethod::template_functions;
    throw std::invalid_argument("unknown featurization '" + s + "'");
}

std::vector<double> CarlssonFeatures::select(SubsetMask mask) const {
    std::vector<double> out;
    for (int i = 0; i < 5; ++i)
        if (mask & (1u << i)) out.push_back(f[i]);
    return out;
}

CarlssonFeatures carlsson_coordinates(const PersistenceDiagram& dgm) {
    CarlssonFeatures cf;
    if (dgm.empty()) return cf;
    double d_max = 0.0;
    for (const auto& p : dgm.pairs) {
        if (!std::isfinite(p.death)) throw std::invalid_argument("Carlsson coordinates need finite deaths");
        d_max = std::max(d_max, p.death);
    }
    for (const auto& p : dgm.pairs) {
        const double life = p.death - p.birth;
        const double life4 = life * life * life * life;
        const double slack = d_max - p.death;
        cf.f[0] += p.birth * life;
        cf.f[1] += slack * life;
        cf.f[2] += p.birth * p.birth * life4;
        cf.f[3] += slack * slack * life4;
        cf.f[4] = std::max(cf.f[4], life);
    }
    return cf;
}

std::vector<SubsetMask> enumerate_subsets() {
    std::vector<SubsetMask> masks;
    for (unsigned m = 1; m < 32; ++m) masks.push_back(static_cast<SubsetMask>(m));
    std::stable_sort(masks.begin(), masks.end(),
                     [](SubsetMask a, SubsetMask b) { return std::popcount(a) < std::popcount(b); });
    return masks;
}

std::string mask_name(SubsetMask mask) {
    std::string s;
    for (int i = 0; i < 5; ++i)
        if (mask & (1u << i)) s += (s.empty() ? "f" : "+f") + std::to_string(i + 1);
    return s;
}

std::vector<BirthLifetime> to_birth_lifetime(const PersistenceDiagram& dgm) {
    std::vector<BirthLifetime> out;
    out.reserve(dgm.size());
    for (const auto& p : dgm.pairs) {
        if (!std::isfinite(p.death)) throw std::invalid_argument("birth-lifetime needs finite deaths");
        out.push_back({p.birth, p.death - p.birth});
    }
    return out;
}

std::vector<PersistencePair> from_birth_lifetime(std::span<const BirthLifetime> points) {
    std::vector<PersistencePair> out;
    for (const auto& p : points) out.push_back({p.birth, p.birth + p.lifetime});
    return out;
}

double lagrange_basis(std::span<const double> mesh, std::size_t j, double x) {
    if (j >= mesh.size()) throw std::out_of_range("Lagrange node index out of range");
    for (std::size_t a = 0; a < mesh.size(); ++a)
        for (std::size_t b = a + 1; b < mesh.size(); ++b)
            if (mesh[a] == mesh[b]) throw std::invalid_argument("Lagrange mesh has duplicate nodes");
    double v = 1.0;
    for (std::size_t i = 0; i < mesh.size(); ++i)
        if (i != j) v *= (x - mesh[i]) / (mesh[j] - mesh[i]);
    return v;
}

namespace {
void check_increasing(const std::vector<double>& nodes, const char* what) {
    if (nodes.size() < 2) throw std::invalid_argument(std::string(what) + " needs at least 2 nodes");
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (!(nodes[i] > nodes[i - 1]))
            throw std::invalid_argument(std::string(what) + " must be strictly increasing");
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return v;
}
}  // namespace

void TemplateMesh::validate() const {
    check_increasing(birth_nodes, "birth mesh");
    check_increasing(lifetime_nodes, "lifetime mesh");
    if (!(lifetime_nodes.front() > 0.0)) throw std::invalid_argument("lifetime mesh must be positive");
    if (padding_fraction < 0.0) throw std::invalid_argument("padding must be non-negative");
}

bool TemplateMesh::encloses(const BirthLifetime& p) const {
    return p.birth >= birth_nodes.front() && p.birth <= birth_nodes.back() &&
           p.lifetime >= lifetime_nodes.front() && p.lifetime <= lifetime_nodes.back();
}

TemplateMesh build_template_mesh(std::span<const BirthLifetime> points, std::size_t birth_count,
                                 std::size_t lifetime_count, double padding_fraction) {
    if (birth_count < 2 || lifetime_count < 2) throw std::invalid_argument("mesh sizes must be >= 2");
    if (padding_fraction < 0.0) throw std::invalid_argument("padding must be non-negative");
    double b_lo = 0.0, b_hi = 1.0, l_lo = 0.0, l_hi = 1.0;
    if (!points.empty()) {
        b_lo = b_hi = points.front().birth;
        l_lo = l_hi = points.front().lifetime;
        for (const auto& p : points) {
            b_lo = std::min(b_lo, p.birth), b_hi = std::max(b_hi, p.birth);
            l_lo = std::min(l_lo, p.lifetime), l_hi = std::max(l_hi, p.lifetime);
        }
    }
    const double b_span = b_hi > b_lo ? b_hi - b_lo : std::max(std::abs(b_hi), 1.0) * 1e-3;
    const double l_span = l_hi > l_lo ? l_hi - l_lo : std::max(std::abs(l_hi), 1.0) * 1e-3;
    const double b_pad = padding_fraction * b_span, l_pad = padding_fraction * l_span;
    b_lo -= b_pad, b_hi += b_pad;
    // Lifetimes are positive; keep the box off the diagonal.
    l_lo = l_lo - l_pad > 0.0 ? l_lo - l_pad : 0.5 * l_lo;
    l_hi += l_pad;
    if (!(l_lo > 0.0)) l_lo = 1e-3 * l_hi;
    if (b_hi <= b_lo) b_hi = b_lo + b_span;
    if (l_hi <= l_lo) l_hi = l_lo + l_span;

    TemplateMesh mesh;
    mesh.birth_nodes = linspace(b_lo, b_hi, birth_count);
    mesh.lifetime_nodes = linspace(l_lo, l_hi, lifetime_count);
    mesh.padding_fraction = padding_fraction;
    mesh.validate();
    return mesh;
}

std::vector<double> template_features(const PersistenceDiagram& dgm, const TemplateMesh& mesh) {
    mesh.validate();
    const auto& A = mesh.birth_nodes;
    const auto& B = mesh.lifetime_nodes;
    std::vector<double> v(A.size() * B.size(), 0.0);
    std::vector<double> la(A.size()), lb(B.size());
    for (const auto& p : to_birth_lifetime(dgm)) {
        if (!mesh.encloses(p)) {
            if (mesh.padding_fraction == 0.0)
                throw std::invalid_argument("diagram point outside the template mesh box");
            continue;
        }
        for (std::size_t i = 0; i < A.size(); ++i) la[i] = lagrange_basis(A, i, p.birth);
        for (std::size_t j = 0; j < B.size(); ++j) lb[j] = lagrange_basis(B, j, p.lifetime);
        for (std::size_t i = 0; i < A.size(); ++i)
            for (std::size_t j = 0; j < B.size(); ++j) v[i * B.size() + j] += std::abs(la[i] * lb[j]);
    }
    return v;
}

namespace {
// Crude sup bound of |l_j| on [nodes.front(), nodes.back()] and the Markov bound on |l_j'|.
std::pair<double, double> basis_bounds(const std::vector<double>& nodes, std::size_t j) {
    const double width = nodes.back() - nodes.front();
    double sup = 1.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (i != j) sup *= width / std::abs(nodes[j] - nodes[i]);
    const double degree = static_cast<double>(nodes.size() - 1);
    return {sup, 2.0 * degree * degree / width * sup};
}
}  // namespace

double template_lipschitz_bound(const TemplateMesh& mesh) {
    mesh.validate();
    double bound = 0.0;
    for (std::size_t i = 0; i < mesh.birth_nodes.size(); ++i) {
        const auto [sa, da] = basis_bounds(mesh.birth_nodes, i);
        for (std::size_t j = 0; j < mesh.lifetime_nodes.size(); ++j) {
            const auto [sb, db] = basis_bounds(mesh.lifetime_nodes, j);
            bound = std::max(bound, da * sb + sa * db);
        }
    }
    return bound;
}

FeatureVector carlsson_vector(const PersistenceDiagram& dgm, SubsetMask mask) {
    FeatureVector fv;
    fv.method = FeatureMethod::carlsson;
    fv.dims = {dgm.dimension};
    fv.values = carlsson_coordinates(dgm).select(mask);
    for (int i = 0; i < 5; ++i)
        if (mask & (1u << i)) fv.names.push_back("CC_f" + std::to_string(i + 1) + "_H" + std::to_string(dgm.dimension));
    return fv;
}

FeatureVector template_vector(const PersistenceDiagram& dgm, const TemplateMesh& mesh) {
    FeatureVector fv;
    fv.method = FeatureMethod::template_functions;
    fv.dims = {dgm.dimension};
    fv.values = template_features(dgm, mesh);
    for (std::size_t i = 0; i < mesh.birth_nodes.size(); ++i)
        for (std::size_t j = 0; j < mesh.lifetime_nodes.size(); ++j)
            fv.names.push_back("TF_A" + std::to_string(i) + "_B" + std::to_string(j) + "_H" +
                               std::to_string(dgm.dimension));
    return fv;
}

FeatureVector concat_features(const FeatureVector& a, const FeatureVector& b) {
    if (a.method != b.method) throw std::invalid_argument("cannot concatenate features of different methods");
    FeatureVector out = a;
    out.values.insert(out.values.end(), b.values.begin(), b.values.end());
    out.dims.insert(out.dims.end(), b.dims.begin(), b.dims.end());
    out.names.insert(out.names.end(), b.names.begin(), b.names.end());
    return out;
}

}  // namespace chatter
