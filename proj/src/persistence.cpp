#include "chatter/persistence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <array>

#include <absl/container/flat_hash_map.h>

#include "chatter/csv_io.hpp"

namespace chatter {

DistanceMatrix::DistanceMatrix(std::size_t n, std::vector<double> entries) : n_(n), d_(std::move(entries)) {
    if (d_.size() != n * n) throw std::invalid_argument("distance matrix must be n x n");
    for (std::size_t i = 0; i < n; ++i) {
        if (d_[i * n + i] != 0.0) throw std::invalid_argument("distance matrix diagonal must be zero");
        for (std::size_t j = 0; j < i; ++j) {
            const double a = d_[i * n + j];
            if (!std::isfinite(a)) throw std::invalid_argument("distance matrix has non-finite entries");
            if (a < 0.0) throw std::invalid_argument("distance matrix has negative entries");
            if (a != d_[j * n + i]) throw std::invalid_argument("distance matrix must be symmetric");
        }
    }
}

DistanceMatrix distance_matrix(const PointCloud& pc) {
    pc.validate();
    const std::size_t n = pc.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = pc.point(i);
        for (std::size_t j = 0; j < i; ++j) {
            const auto b = pc.point(j);
            double s = 0.0;
            for (int k = 0; k < pc.dimension; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
            d[i * n + j] = d[j * n + i] = std::sqrt(s);
        }
    }
    return DistanceMatrix(n, std::move(d));
}

double enclosing_radius(const DistanceMatrix& dm) {
    double r = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dm.size(); ++i) {
        const auto row = dm.row(i);
        r = std::min(r, *std::max_element(row.begin(), row.end()));
    }
    return dm.size() == 0 ? 0.0 : r;
}

PersistenceDiagram PersistenceDiagram::finite() const {
    PersistenceDiagram out;
    out.dimension = dimension;
    for (const auto& p : pairs)
        if (std::isfinite(p.death)) out.pairs.push_back(p);
    return out;
}

namespace {

using index_t = std::int64_t;

struct Entry {
    double diameter;
    index_t index;
};

// Heap order: the top is the earliest simplex in the filtration, i.e. smallest diameter
// and, among equal diameters, the largest combinatorial index.
struct LaterInFiltration {
    bool operator()(const Entry& a, const Entry& b) const {
        return a.diameter > b.diameter || (a.diameter == b.diameter && a.index < b.index);
    }
};

// Binary heap over a reusable vector, ordered by LaterInFiltration.
class Column {
public:
    bool empty() const { return heap_.empty(); }
    const Entry& top() const { return heap_.front(); }
    void push(const Entry& e) {
        heap_.push_back(e);
        std::push_heap(heap_.begin(), heap_.end(), LaterInFiltration{});
    }
    void pop() {
        std::pop_heap(heap_.begin(), heap_.end(), LaterInFiltration{});
        heap_.pop_back();
    }
    void clear() { heap_.clear(); }

private:
    std::vector<Entry> heap_;
};

using PivotMap = absl::flat_hash_map<index_t, std::size_t>;

// C(n, k) for 0 <= n <= max_n, 0 <= k <= max_k; stored per k so a fixed k scans contiguously.
class BinomialTable {
public:
    BinomialTable(index_t max_n, int max_k) : stride_(max_n + 1), table_((max_k + 1) * (max_n + 1), 0) {
        for (index_t n = 0; n <= max_n; ++n) {
            at(n, 0) = 1;
            for (int k = 1; k <= std::min<index_t>(n, max_k); ++k)
                at(n, k) = (k == n) ? 1 : at(n - 1, k - 1) + at(n - 1, k);
        }
    }
    index_t operator()(index_t n, int k) const { return table_[k * stride_ + n]; }

private:
    index_t& at(index_t n, int k) { return table_[k * stride_ + n]; }
    index_t stride_;
    std::vector<index_t> table_;
};

struct Vertices {
    std::array<index_t, 4> v{};
    int count = 0;
    const index_t* begin() const { return v.data(); }
    const index_t* end() const { return v.data() + count; }
    index_t operator[](int i) const { return v[i]; }
};

class RipsReducer {
public:
    RipsReducer(const DistanceMatrix& dm, double threshold, int max_dim)
        : dm_(dm), n_(static_cast<index_t>(dm.size())), threshold_(threshold), max_dim_(max_dim),
          binom_(n_, max_dim + 2) {}

    std::vector<PersistenceDiagram> run() {
        std::vector<PersistenceDiagram> out(max_dim_ + 1);
        for (int d = 0; d <= max_dim_; ++d) out[d].dimension = d;

        std::vector<Entry> simplices, columns;
        compute_dim0(out[0], simplices, columns);
        for (int dim = 1; dim <= max_dim_; ++dim) {
            PivotMap pivots;
            pivots.reserve(columns.size());
            compute_pairs(columns, pivots, dim, out[dim]);
            if (dim < max_dim_) assemble_columns(simplices, columns, pivots, dim + 1, dim + 1 < max_dim_);
        }
        for (auto& dgm : out) std::sort(dgm.pairs.begin(), dgm.pairs.end());
        return out;
    }

private:
    index_t edge_index(index_t i, index_t j) const { return binom_(std::max(i, j), 2) + std::min(i, j); }

    // Vertices of a simplex in decreasing order.
    void vertices_of(index_t idx, int dim, Vertices& out) const {
        out.count = 0;
        index_t v = n_ - 1;
        for (int k = dim + 1; k > 0; --k) {
            // largest v with C(v, k) <= idx
            index_t lo = k - 1, hi = v;
            while (lo < hi) {
                const index_t mid = hi - (hi - lo) / 2;
                if (binom_(mid, k) <= idx) lo = mid;
                else hi = mid - 1;
            }
            v = lo;
            out.v[out.count++] = v;
            idx -= binom_(v, k);
            --v;
        }
    }

    // Enumerates cofacets of a simplex in decreasing index order.
    class Cofacets {
    public:
        Cofacets(const RipsReducer& r, Entry simplex, int dim)
            : r_(r), simplex_(simplex), idx_below_(simplex.index), idx_above_(0), v_(r.n_ - 1), k_(dim + 1) {
            r.vertices_of(simplex.index, dim, vertices_);
        }
        bool has_next(bool all_cofacets = true) const {
            return v_ >= k_ && (all_cofacets || r_.binom_(v_, k_) > idx_below_);
        }
        Entry next() {
            while (r_.binom_(v_, k_) <= idx_below_) {
                idx_below_ -= r_.binom_(v_, k_);
                idx_above_ += r_.binom_(v_, k_ + 1);
                --v_;
                --k_;
            }
            double diam = simplex_.diameter;
            const auto row = r_.dm_.row(v_);
            for (index_t w : vertices_) diam = std::max(diam, row[w]);
            const index_t idx = idx_above_ + r_.binom_(v_, k_ + 1) + idx_below_;
            --v_;
            return {diam, idx};
        }

    private:
        const RipsReducer& r_;
        Entry simplex_;
        index_t idx_below_, idx_above_, v_;
        int k_;
        Vertices vertices_;
    };

    void compute_dim0(PersistenceDiagram& dgm, std::vector<Entry>& edges, std::vector<Entry>& columns) {
        edges.clear();
        for (index_t i = 0; i < n_; ++i)
            for (index_t j = 0; j < i; ++j) {
                const double d = dm_(i, j);
                if (d <= threshold_) edges.push_back({d, edge_index(i, j)});
            }
        std::sort(edges.begin(), edges.end(), [](const Entry& a, const Entry& b) {
            return a.diameter < b.diameter || (a.diameter == b.diameter && a.index > b.index);
        });

        std::vector<index_t> parent(n_);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](index_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        columns.clear();
        Vertices verts;
        for (const auto& e : edges) {
            vertices_of(e.index, 1, verts);
            index_t a = find(verts[0]), b = find(verts[1]);
            if (a != b) {
                if (e.diameter > 0.0) dgm.pairs.push_back({0.0, e.diameter});
                if (a < b) std::swap(a, b);
                parent[a] = b;  // the older component keeps the smaller root
            } else {
                columns.push_back(e);
            }
        }
        std::reverse(columns.begin(), columns.end());
        for (index_t v = 0; v < n_; ++v)
            if (find(v) == v) dgm.pairs.push_back({0.0, std::numeric_limits<double>::infinity()});
    }

    static Entry pop_pivot(Column& col) {
        if (col.empty()) return {0.0, -1};
        Entry pivot = col.top();
        col.pop();
        while (!col.empty() && col.top().index == pivot.index) {
            col.pop();
            if (col.empty()) return {0.0, -1};
            pivot = col.top();
            col.pop();
        }
        return pivot;
    }

    static Entry get_pivot(Column& col) {
        Entry p = pop_pivot(col);
        if (p.index != -1) col.push(p);
        return p;
    }

    void push_coboundary(const Entry& simplex, int dim, Column& col) const {
        Cofacets cof(*this, simplex, dim);
        while (cof.has_next()) {
            const Entry c = cof.next();
            if (c.diameter <= threshold_) col.push(c);
        }
    }

    Entry init_coboundary_and_get_pivot(const Entry& simplex, int dim, Column& col,
                                        const PivotMap& pivots) {
        bool check_emergent = true;
        cofacet_buffer_.clear();
        Cofacets cof(*this, simplex, dim);
        while (cof.has_next()) {
            const Entry c = cof.next();
            if (c.diameter > threshold_) continue;
            cofacet_buffer_.push_back(c);
            if (check_emergent && c.diameter == simplex.diameter) {
                if (pivots.find(c.index) == pivots.end()) return c;
                check_emergent = false;
            }
        }
        for (const auto& c : cofacet_buffer_) col.push(c);
        return get_pivot(col);
    }

    void compute_pairs(const std::vector<Entry>& columns, PivotMap& pivots,
                       int dim, PersistenceDiagram& dgm) {
        // Reduction matrix: simplices whose coboundaries sum to each stored column.
        std::vector<std::vector<Entry>> reduction(columns.size());
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const Entry sigma = columns[i];
            Column& working = working_;
            Column& working_reduction = working_reduction_;
            working.clear();
            working_reduction.clear();
            working_reduction.push(sigma);
            Entry pivot = init_coboundary_and_get_pivot(sigma, dim, working, pivots);
            while (true) {
                if (pivot.index == -1) {
                    dgm.pairs.push_back({sigma.diameter, std::numeric_limits<double>::infinity()});
                    break;
                }
                const auto hit = pivots.find(pivot.index);
                if (hit == pivots.end()) {
                    if (pivot.diameter > sigma.diameter) dgm.pairs.push_back({sigma.diameter, pivot.diameter});
                    pivots.emplace(pivot.index, i);
                    auto& store = reduction[i];
                    for (Entry e = pop_pivot(working_reduction); e.index != -1; e = pop_pivot(working_reduction))
                        store.push_back(e);
                    break;
                }
                for (const auto& s : reduction[hit->second]) {
                    working_reduction.push(s);
                    push_coboundary(s, dim, working);
                }
                pivot = get_pivot(working);
            }
        }
    }

    void assemble_columns(std::vector<Entry>& simplices, std::vector<Entry>& columns,
                          const PivotMap& pivots, int dim, bool keep_simplices) {
        std::vector<Entry> next;
        columns.clear();
        columns.reserve(simplices.size() * 4);
        for (const auto& s : simplices) {
            Cofacets cof(*this, s, dim - 1);
            while (cof.has_next(false)) {
                const Entry c = cof.next();
                if (c.diameter > threshold_) continue;
                if (keep_simplices) next.push_back(c);
                if (pivots.find(c.index) == pivots.end()) columns.push_back(c);
            }
        }
        simplices.swap(next);
        std::sort(columns.begin(), columns.end(), LaterInFiltration{});
    }

    const DistanceMatrix& dm_;
    index_t n_;
    double threshold_;
    int max_dim_;
    BinomialTable binom_;
    std::vector<Entry> cofacet_buffer_;
    Column working_, working_reduction_;
};

}  // namespace

std::vector<PersistenceDiagram> rips_persistence(const DistanceMatrix& dm, const RipsOptions& opts) {
    if (opts.max_dim < 0 || opts.max_dim > 2) throw std::invalid_argument("max_dim must lie in {0,1,2}");
    if (dm.size() == 0) throw std::invalid_argument("empty distance matrix");
    if (dm.size() > opts.max_points)
        throw std::invalid_argument("point count " + std::to_string(dm.size()) + " exceeds cap " +
                                    std::to_string(opts.max_points) + "; subsample first");
    const double threshold = opts.threshold > 0.0 ? opts.threshold : enclosing_radius(dm);
    RipsReducer reducer(dm, threshold, opts.max_dim);
    return reducer.run();
}

std::vector<PersistenceDiagram> rips_persistence(const PointCloud& pc, const RipsOptions& opts) {
    return rips_persistence(distance_matrix(pc), opts);
}

std::vector<std::vector<PersistenceDiagram>> rips_persistence_batch(std::span<const PointCloud> clouds,
                                                                    const RipsOptions& opts, Exec exec) {
    std::vector<std::vector<PersistenceDiagram>> out(clouds.size());
    if (exec == Exec::serial) {
        for (std::size_t i = 0; i < clouds.size(); ++i) out[i] = rips_persistence(clouds[i], opts);
        return out;
    }
    std::vector<std::string> errors(clouds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(clouds.size()); ++i) {
        try {
            out[i] = rips_persistence(clouds[i], opts);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw std::runtime_error(clouds[i].source + ": " + errors[i]);
    return out;
}

void write_diagrams_csv(const std::string& series_id, std::span<const PersistenceDiagram> diagrams,
                        std::ostream& os, bool header) {
    if (header) os << "series_id,dim,birth,death\n";
    for (const auto& dgm : diagrams)
        for (const auto& p : dgm.pairs)
            os << series_id << ',' << dgm.dimension << ',' << fmt_double(p.birth) << ','
               << fmt_double(p.death) << '\n';
}

std::map<std::string, std::vector<PersistenceDiagram>> read_diagrams_csv(std::istream& is, int max_dim) {
    std::map<std::string, std::vector<PersistenceDiagram>> out;
    for (const auto& row : read_csv(is)) {
        if (row.size() != 4) throw std::runtime_error("diagram csv: expected 4 columns");
        if (row[0] == "series_id") continue;
        const int dim = std::stoi(row[1]);
        if (dim < 0 || dim > max_dim) continue;
        auto& dgms = out[row[0]];
        if (dgms.empty()) {
            dgms.resize(max_dim + 1);
            for (int d = 0; d <= max_dim; ++d) dgms[d].dimension = d;
        }
        dgms[dim].pairs.push_back({parse_double(row[2]), parse_double(row[3])});
    }
    for (auto& [id, dgms] : out)
        for (auto& d : dgms) std::sort(d.pairs.begin(), d.pairs.end());
    return out;
}

}  // namespace chatter
