#include "chatter/stability.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "chatter/csv_io.hpp"

namespace chatter {

namespace {

// Times in [0, tau) at which any tooth enters or leaves the cut.
std::vector<double> engagement_breakpoints(const ProcessParams& p, double spindle_speed, double tau) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double omega = two_pi * spindle_speed / 60.0;
    const CutArc arc = cut_arc(p.mode, p.radial_immersion);
    std::vector<double> times;
    for (int n = 1; n <= p.teeth; ++n) {
        for (double angle : {arc.entry, arc.exit}) {
            double a = std::fmod(angle - two_pi * (n - 1) / p.teeth, two_pi);
            if (a < 0.0) a += two_pi;
            const double t = a / omega;
            if (t > 0.0 && t < tau) times.push_back(t);
        }
    }
    std::sort(times.begin(), times.end());
    return times;
}

}  // namespace

MonodromyResult build_monodromy(const ProcessParams& p, const GridPoint& g, int order) {
    p.validate();
    if (order < 20) throw std::invalid_argument("monodromy order must be >= 20");
    if (!(g.spindle_speed > 0.0) || g.depth_of_cut < 0.0)
        throw std::invalid_argument("grid point needs positive speed and non-negative depth");

    const int k = order;
    const int dim = k + 2;
    const double tau = delay_period(g.spindle_speed, p.teeth);
    const double step = tau / k;
    const double wn2 = p.natural_frequency * p.natural_frequency;
    const double c1 = 2.0 * p.damping_ratio * p.natural_frequency;
    const double gain = g.depth_of_cut / p.modal_mass;
    const auto breaks = engagement_breakpoints(p, g.spindle_speed, tau);

    Eigen::MatrixXd U = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd next(dim, dim);
    for (int i = 0; i < k; ++i) {
        const double t0 = i * step, t1 = (i + 1) * step;
        // Augmented state (x, v, w, c): w is the interpolated delayed displacement, dw/dt = c.
        std::vector<double> cuts{t0};
        for (double b : breaks)
            if (b > t0 && b < t1) cuts.push_back(b);
        cuts.push_back(t1);

        Eigen::Matrix4d phi = Eigen::Matrix4d::Identity();
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const double len = cuts[s + 1] - cuts[s];
            if (len <= 0.0) continue;
            const double h = specific_force(0.5 * (cuts[s] + cuts[s + 1]), p, g.spindle_speed);
            Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
            m(0, 1) = 1.0;
            m(1, 0) = -wn2 - gain * h;
            m(1, 1) = -c1;
            m(1, 2) = gain * h;
            m(2, 3) = 1.0;
            const Eigen::Matrix4d e = (m * len).exp();
            phi = (e * phi).eval();
        }

        // x_{i+1}, v_{i+1} = P y_i + qw x_{i-k} + qc (x_{i-k+1} - x_{i-k}) / step
        const double inv = 1.0 / step;
        double row[2][4];
        for (int r = 0; r < 2; ++r) {
            row[r][0] = phi(r, 0);
            row[r][1] = phi(r, 1);
            row[r][2] = phi(r, 3) * inv;                  // coefficient of x_{i-k+1} (index k)
            row[r][3] = phi(r, 2) - phi(r, 3) * inv;      // coefficient of x_{i-k}   (index k+1)
        }
        for (int r = 0; r < 2; ++r)
            next.row(r) = row[r][0] * U.row(0) + row[r][1] * U.row(1) + row[r][2] * U.row(k) +
                          row[r][3] * U.row(k + 1);
        next.row(2) = U.row(0);
        for (int r = 3; r < dim; ++r) next.row(r) = U.row(r - 1);
        U.swap(next);
    }

    Eigen::EigenSolver<Eigen::MatrixXd> solver(U, false);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("monodromy eigenvalue solver did not converge");

    MonodromyResult res;
    res.discretization_order = order;
    const auto& ev = solver.eigenvalues();
    res.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    std::stable_sort(res.eigenvalues.begin(), res.eigenvalues.end(),
                     [](const auto& a, const auto& b) {
                         if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
                         return a.imag() > b.imag();
                     });
    res.dominant_eigenvalue = res.eigenvalues.front();
    // report the upper member of a conjugate pair
    if (res.dominant_eigenvalue.imag() < 0.0) res.dominant_eigenvalue = std::conj(res.dominant_eigenvalue);
    res.spectral_radius = std::abs(res.dominant_eigenvalue);
    return res;
}

std::optional<StabilityLabel> classify_eigenvalue(const MonodromyResult& mr, double tol) {
    if (tol < 0.0) throw std::invalid_argument("tolerance must be non-negative");
    const auto lambda = mr.dominant_eigenvalue;
    StabilityLabel label;
    label.dominant_eigenvalue = lambda;
    if (mr.spectral_radius <= 1.0) {
        label.class3 = Class3::stable;
        return label;
    }
    if (std::abs(lambda.imag()) > tol * std::abs(lambda)) {
        label.class3 = Class3::hopf;
        return label;
    }
    if (lambda.real() < 0.0) {
        label.class3 = Class3::period_doubling;
        return label;
    }
    return std::nullopt;
}

void GridSpec::validate() const {
    if (speed_count < 2 || depth_count < 2) throw std::invalid_argument("grid counts must be >= 2");
    if (!(speed_max > speed_min) || !(depth_max > depth_min))
        throw std::invalid_argument("grid ranges must be non-degenerate");
    if (!(speed_min > 0.0) || depth_min < 0.0)
        throw std::invalid_argument("grid needs positive speeds and non-negative depths");
}

GridPoint GridSpec::point(int speed_index, int depth_index) const {
    if (speed_index < 0 || speed_index >= speed_count || depth_index < 0 || depth_index >= depth_count)
        throw std::out_of_range("grid index out of range");
    GridPoint g;
    g.spindle_speed = speed_min + (speed_max - speed_min) * speed_index / (speed_count - 1);
    g.depth_of_cut = depth_min + (depth_max - depth_min) * depth_index / (depth_count - 1);
    return g;
}

namespace {

GridEntry label_point(const ProcessParams& p, const GridSpec& gs, std::size_t flat, int order,
                      double tol) {
    GridEntry e;
    e.speed_index = static_cast<int>(flat / gs.depth_count);
    e.depth_index = static_cast<int>(flat % gs.depth_count);
    e.point = gs.point(e.speed_index, e.depth_index);
    try {
        e.monodromy = build_monodromy(p, e.point, order);
        e.label = classify_eigenvalue(*e.monodromy, tol);
        e.undetermined = !e.label.has_value();
    } catch (const std::exception& ex) {
        e.error = ex.what();
    }
    return e;
}

}  // namespace

LabeledGrid label_grid(const ProcessParams& p, const GridSpec& gs, int order, double tol, Exec exec) {
    p.validate();
    gs.validate();
    LabeledGrid grid;
    grid.spec = gs;
    grid.entries.resize(gs.size());
    if (exec == Exec::serial) {
        for (std::size_t i = 0; i < gs.size(); ++i) grid.entries[i] = label_point(p, gs, i, order, tol);
        return grid;
    }
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(gs.size()); ++i)
        grid.entries[i] = label_point(p, gs, static_cast<std::size_t>(i), order, tol);
    return grid;
}

void write_grid_csv(const LabeledGrid& grid, std::ostream& os) {
    os << "speed_index,depth_index,spindle_speed,depth_of_cut,re,im,modulus,class3,class2\n";
    for (const auto& e : grid.entries) {
        os << e.speed_index << ',' << e.depth_index << ',' << fmt_double(e.point.spindle_speed) << ','
           << fmt_double(e.point.depth_of_cut) << ',';
        if (e.monodromy) {
            const auto l = e.monodromy->dominant_eigenvalue;
            os << fmt_double(l.real()) << ',' << fmt_double(l.imag()) << ','
               << fmt_double(e.monodromy->spectral_radius) << ',';
        } else {
            os << "nan,nan,nan,";
        }
        if (e.label)
            os << to_string(e.label->class3) << ',' << to_string(e.label->class2()) << '\n';
        else if (e.undetermined)
            os << "undetermined,undetermined\n";
        else
            os << "failed,failed\n";
    }
}

LabeledGrid read_grid_csv(std::istream& is, const GridSpec& spec) {
    LabeledGrid grid;
    grid.spec = spec;
    const auto rows = read_csv(is);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 9) throw std::runtime_error("grid csv: expected 9 columns");
        GridEntry e;
        e.speed_index = std::stoi(row[0]);
        e.depth_index = std::stoi(row[1]);
        e.point = {parse_double(row[2]), parse_double(row[3])};
        if (row[6] != "nan") {
            MonodromyResult m;
            m.dominant_eigenvalue = {parse_double(row[4]), parse_double(row[5])};
            m.spectral_radius = parse_double(row[6]);
            e.monodromy = m;
        }
        if (row[7] == "undetermined") {
            e.undetermined = true;
        } else if (row[7] == "failed") {
            e.error = "failed";
        } else {
            StabilityLabel l;
            l.class3 = class3_from_string(row[7]);
            l.dominant_eigenvalue = e.monodromy ? e.monodromy->dominant_eigenvalue : std::complex<double>{};
            e.label = l;
        }
        grid.entries.push_back(e);
    }
    return grid;
}

std::string to_string(Class3 c) {
    switch (c) {
        case Class3::stable: return "stable";
        case Class3::hopf: return "hopf";
        case Class3::period_doubling: return "period_doubling";
    }
    return "?";
}

std::string to_string(Class2 c) { return c == Class2::stable ? "stable" : "chatter"; }

Class3 class3_from_string(const std::string& s) {
    if (s == "stable") return Class3::stable;
    if (s == "hopf") return Class3::hopf;
    if (s == "period_doubling") return Class3::period_doubling;
    throw std::invalid_argument("unknown stability class '" + s + "'");
}

}  // namespace chatter
