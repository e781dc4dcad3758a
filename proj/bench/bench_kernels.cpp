// Serial vs OpenMP timings of the batch kernels; also checks both paths give identical output.
#include <chrono>
#include <cstdio>
#include <random>
#include <string>

#include "chatter/config.hpp"
#include "chatter/milling_model.hpp"
#include "chatter/parallel.hpp"
#include "chatter/persistence.hpp"
#include "chatter/stability.hpp"

using namespace chatter;

namespace {

template <class F>
double seconds(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void row(const char* name, double serial, double parallel, bool same) {
    std::printf("%-22s serial %8.3f s  parallel %8.3f s  speedup %5.2fx  identical %s\n", name, serial, parallel,
                serial / parallel, same ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
    const int grid_n = argc > 1 ? std::stoi(argv[1]) : 8;
    const std::size_t cloud_n = argc > 2 ? std::stoul(argv[2]) : 100;
    std::printf("threads: %d\n", thread_count());

    const ProcessParams p = default_process_params();
    GridSpec gs = default_grid();
    gs.speed_count = gs.depth_count = grid_n;

    {
        LabeledGrid a, b;
        const double ts = seconds([&] { a = label_grid(p, gs, 60, 1e-6, Exec::serial); });
        const double tp = seconds([&] { b = label_grid(p, gs, 60, 1e-6, Exec::parallel); });
        bool same = a.entries.size() == b.entries.size();
        for (std::size_t k = 0; same && k < a.entries.size(); ++k)
            same = a.entries[k].monodromy->spectral_radius == b.entries[k].monodromy->spectral_radius;
        row("label_grid", ts, tp, same);
    }
    {
        std::vector<GridPoint> pts;
        for (int i = 0; i < grid_n; ++i)
            for (int j = 0; j < grid_n; ++j) pts.push_back(gs.point(i, j));
        SimConfig sc;
        std::vector<TimeSeries> a, b;
        const double ts = seconds([&] { a = simulate_batch(p, pts, sc, Exec::serial); });
        const double tp = seconds([&] { b = simulate_batch(p, pts, sc, Exec::parallel); });
        bool same = true;
        for (std::size_t k = 0; k < a.size(); ++k) same = same && a[k].samples == b[k].samples;
        row("simulate_batch", ts, tp, same);
    }
    {
        std::mt19937_64 rng(7);
        std::normal_distribution<double> nd;
        std::vector<PointCloud> clouds(16);
        for (auto& c : clouds) {
            c.dimension = 3;
            for (std::size_t i = 0; i < 3 * cloud_n; ++i) c.coords.push_back(nd(rng));
        }
        RipsOptions opts;
        std::vector<std::vector<PersistenceDiagram>> a, b;
        const double ts = seconds([&] { a = rips_persistence_batch(clouds, opts, Exec::serial); });
        const double tp = seconds([&] { b = rips_persistence_batch(clouds, opts, Exec::parallel); });
        bool same = a.size() == b.size();
        for (std::size_t k = 0; same && k < a.size(); ++k)
            for (std::size_t d = 0; d < a[k].size(); ++d) same = same && a[k][d].pairs == b[k][d].pairs;
        row("rips_persistence_batch", ts, tp, same);
    }
    return 0;
}
