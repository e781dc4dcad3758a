#include "chatter/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "chatter/csv_io.hpp"
#include "chatter/featurize.hpp"
#include "chatter/milling_model.hpp"
#include "chatter/parallel.hpp"

namespace chatter {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {
// Bumped whenever a stage's on-disk format or semantics change.
constexpr int cache_version = 2;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t s = splitmix64(master);
    for (auto c : counters) s = splitmix64(s ^ (c + 0x9e3779b97f4a7c15ULL));
    return s;
}

std::string content_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string Variant::name() const {
    if (!snr_db) return "noiseless";
    return "snr" + fmt_double(*snr_db);
}

std::vector<Variant> variants(const ExperimentConfig& cfg) {
    std::vector<Variant> out;
    if (cfg.noise.include_noiseless) out.push_back({});
    for (double s : cfg.noise.snr_db) out.push_back({s});
    return out;
}

std::string to_string(DimsSet d) {
    switch (d) {
        case DimsSet::h0: return "H0";
        case DimsSet::h1: return "H1";
        case DimsSet::h2: return "H2";
        case DimsSet::h1_h2: return "H1+H2";
    }
    return "?";
}

namespace {
DimsSet dims_from_string(const std::string& s) {
    for (DimsSet d : {DimsSet::h0, DimsSet::h1, DimsSet::h2, DimsSet::h1_h2})
        if (to_string(d) == s) return d;
    throw std::invalid_argument("unknown dims set '" + s + "'");
}
}  // namespace

std::vector<int> dims_of(DimsSet d) {
    switch (d) {
        case DimsSet::h0: return {0};
        case DimsSet::h1: return {1};
        case DimsSet::h2: return {2};
        case DimsSet::h1_h2: return {1, 2};
    }
    return {};
}

std::vector<DimsSet> dims_columns(const ExperimentConfig& cfg) {
    std::vector<DimsSet> out{DimsSet::h1};
    if (cfg.persistence.max_dim >= 2) {
        out.push_back(DimsSet::h2);
        out.push_back(DimsSet::h1_h2);
    }
    if (cfg.features.include_h0) out.push_back(DimsSet::h0);
    return out;
}

// ---------------------------------------------------------------------------
// CC sweep

CcSweepResult cc_subset_sweep(const std::vector<std::vector<CarlssonFeatures>>& per_dim, std::span<const int> labels,
                              std::span<const int> grid_index, int n_classes, Algorithm algo,
                              const Hyperparameters& hp, const EvalProtocol& protocol) {
    if (per_dim.empty()) throw std::invalid_argument("cc sweep needs at least one dimension block");
    const std::size_t n = labels.size();
    for (const auto& block : per_dim)
        if (block.size() != n) throw std::invalid_argument("cc sweep: feature rows and labels disagree");
    CcSweepResult out;
    out.masks = enumerate_subsets();
    out.results.resize(out.masks.size());
    std::vector<std::string> errors(out.masks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(out.masks.size()); ++k) {
        try {
            const SubsetMask mask = out.masks[k];
            const int width = std::popcount(static_cast<unsigned>(mask));
            Dataset ds;
            ds.n_classes = n_classes;
            ds.y.assign(labels.begin(), labels.end());
            ds.grid_index.assign(grid_index.begin(), grid_index.end());
            ds.X.resize(static_cast<Eigen::Index>(n), width * static_cast<Eigen::Index>(per_dim.size()));
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t b = 0; b < per_dim.size(); ++b) {
                    const auto sel = per_dim[b][r].select(mask);
                    for (int c = 0; c < width; ++c) ds.X(static_cast<Eigen::Index>(r), b * width + c) = sel[c];
                }
            out.results[k] = evaluate(ds, algo, hp, protocol);
        } catch (const std::exception& e) {
            errors[k] = "mask " + mask_name(out.masks[k]) + ": " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.results.size(); ++k)
        if (out.results[k].mean_accuracy > out.results[best].mean_accuracy) best = k;
    out.best_position = best;
    out.best_mask = out.masks[best];
    return out;
}

// ---------------------------------------------------------------------------
// Results table

namespace {

ordered_json counts_json(const ExclusionCounts& c) {
    return {{"retained", c.retained},
            {"undetermined", c.undetermined},
            {"label_failed", c.label_failed},
            {"simulation_failed", c.simulation_failed},
            {"embedding_failed", c.embedding_failed},
            {"persistence_failed", c.persistence_failed}};
}

ExclusionCounts counts_from_json(const json& j) {
    ExclusionCounts c;
    c.retained = j.at("retained").get<int>();
    c.undetermined = j.at("undetermined").get<int>();
    c.label_failed = j.at("label_failed").get<int>();
    c.simulation_failed = j.at("simulation_failed").get<int>();
    c.embedding_failed = j.at("embedding_failed").get<int>();
    c.persistence_failed = j.at("persistence_failed").get<int>();
    return c;
}

ordered_json cell_json(const ResultCell& c) {
    ordered_json j;
    j["class_problem"] = c.class_problem;
    j["mode"] = c.mode;
    j["variant"] = c.variant;
    j["method"] = to_string(c.method);
    j["dims"] = to_string(c.dims);
    j["classifier"] = to_string(c.classifier);
    j["mean_accuracy"] = c.mean;
    j["std_accuracy"] = c.std;
    j["best_setting"] = c.best_setting;
    j["best_in_column"] = c.best_in_column;
    j["best_in_dataset"] = c.best_in_dataset;
    j["per_split_accuracies"] = c.eval.per_split_accuracies;
    ordered_json sweep = ordered_json::array();
    for (const auto& s : c.sweep) sweep.push_back({{"setting", s.setting}, {"mean", s.mean}, {"std", s.std}});
    j["sweep"] = sweep;
    j["grid_index"] = c.eval.grid_index;
    j["misclassified"] = c.eval.misclassified;
    j["tested"] = c.eval.tested;
    return j;
}

ResultCell cell_from_json(const json& j) {
    ResultCell c;
    c.class_problem = j.at("class_problem").get<int>();
    c.mode = j.at("mode").get<std::string>();
    c.variant = j.at("variant").get<std::string>();
    c.method = feature_method_from_string(j.at("method").get<std::string>());
    c.dims = dims_from_string(j.at("dims").get<std::string>());
    c.classifier = algorithm_from_string(j.at("classifier").get<std::string>());
    c.mean = j.at("mean_accuracy").get<double>();
    c.std = j.at("std_accuracy").get<double>();
    c.best_setting = j.at("best_setting").get<std::string>();
    c.best_in_column = j.at("best_in_column").get<bool>();
    c.best_in_dataset = j.at("best_in_dataset").get<bool>();
    c.eval.mean_accuracy = c.mean;
    c.eval.std_accuracy = c.std;
    c.eval.per_split_accuracies = j.at("per_split_accuracies").get<std::vector<double>>();
    for (const auto& s : j.at("sweep"))
        c.sweep.push_back({s.at("setting").get<std::string>(), s.at("mean").get<double>(), s.at("std").get<double>()});
    c.eval.grid_index = j.at("grid_index").get<std::vector<int>>();
    c.eval.misclassified = j.at("misclassified").get<std::vector<int>>();
    c.eval.tested = j.at("tested").get<std::vector<int>>();
    return c;
}

}  // namespace

ordered_json ResultsTable::to_json() const {
    ordered_json j;
    j["name"] = name;
    j["mode"] = mode;
    j["variants"] = variants;
    j["cloud_cap"] = cloud_cap;
    j["max_dim"] = max_dim;
    ordered_json ex = ordered_json::object();
    for (const auto& [v, c] : exclusions) ex[v] = counts_json(c);
    j["points"] = ex;
    ordered_json cells_j = ordered_json::array();
    for (const auto& c : cells) cells_j.push_back(cell_json(c));
    j["cells"] = cells_j;
    return j;
}

ResultsTable ResultsTable::from_json(const json& j) {
    ResultsTable t;
    t.name = j.at("name").get<std::string>();
    t.mode = j.at("mode").get<std::string>();
    t.variants = j.at("variants").get<std::vector<std::string>>();
    t.cloud_cap = j.at("cloud_cap").get<std::size_t>();
    t.max_dim = j.at("max_dim").get<int>();
    for (const auto& v : t.variants)
        if (j.at("points").contains(v)) t.exclusions.emplace_back(v, counts_from_json(j.at("points").at(v)));
    for (const auto& c : j.at("cells")) t.cells.push_back(cell_from_json(c));
    return t;
}

void ResultsTable::mark_best() {
    std::map<std::tuple<int, std::string, int, int>, std::size_t> column;
    std::map<std::pair<int, std::string>, std::size_t> dataset;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        auto& c = cells[k];
        c.best_in_column = c.best_in_dataset = false;
        const auto ck = std::make_tuple(c.class_problem, c.variant, static_cast<int>(c.method), static_cast<int>(c.dims));
        auto it = column.find(ck);
        if (it == column.end() || c.mean > cells[it->second].mean) column[ck] = k;
        const auto dk = std::make_pair(c.class_problem, c.variant);
        auto jt = dataset.find(dk);
        if (jt == dataset.end() || c.mean > cells[jt->second].mean) dataset[dk] = k;
    }
    for (const auto& [key, k] : column) cells[k].best_in_column = true;
    for (const auto& [key, k] : dataset) cells[k].best_in_dataset = true;
}

const ResultCell* ResultsTable::find(int problem, const std::string& variant, FeatureMethod m, DimsSet d,
                                     Algorithm a) const {
    for (const auto& c : cells)
        if (c.class_problem == problem && c.variant == variant && c.method == m && c.dims == d && c.classifier == a)
            return &c;
    return nullptr;
}

double ResultsTable::best_mean(int problem, const std::string& variant, std::optional<FeatureMethod> m,
                               std::optional<DimsSet> d) const {
    double best = -1.0;
    for (const auto& c : cells) {
        if (c.class_problem != problem || c.variant != variant) continue;
        if (m && c.method != *m) continue;
        if (d && c.dims != *d) continue;
        best = std::max(best, c.mean);
    }
    if (best < 0.0) throw std::out_of_range("no result cells for class problem " + std::to_string(problem) +
                                            " / " + variant);
    return best;
}

// ---------------------------------------------------------------------------
// Stage plumbing

namespace {

std::string series_id(int grid_index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "g%05d", grid_index);
    return buf;
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s.empty() ? "error" : s;
}

std::uint64_t snr_bits(const Variant& v) { return v.snr_db ? std::bit_cast<std::uint64_t>(*v.snr_db) : 0; }

template <class F>
void parallel_for_points(std::size_t n, F&& body) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) body(static_cast<std::size_t>(i));
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig cfg, fs::path out_dir) : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
    cfg_.validate();
}

ordered_json Pipeline::stage_inputs(const std::string& stage, const Variant& v) const {
    const ordered_json c = cfg_.to_json();
    ordered_json j;
    j["version"] = cache_version;
    j["stage"] = stage;
    if (stage == "simulate") {
        j["process"] = c["process"];
        j["milling_mode"] = c["milling_mode"];
        j["grid"] = c["grid"];
        j["simulation"] = c["simulation"];
        j["full_record"] = !cfg_.noise.after_transient;
    } else if (stage == "label") {
        j["process"] = c["process"];
        j["milling_mode"] = c["milling_mode"];
        j["grid"] = c["grid"];
        j["stability"] = c["stability"];
    } else if (stage == "prep") {
        j["simulate"] = stage_key("simulate");
        j["variant"] = v.name();
        if (v.snr_db) {
            j["snr_db"] = *v.snr_db;
            j["seed"] = cfg_.seed;
        }
        j["embedding"] = c["embedding"];
    } else if (stage == "persist") {
        j["prep"] = stage_key("prep", v);
        j["persistence"] = c["persistence"];
    } else if (stage == "featurize") {
        j["persist"] = stage_key("persist", v);
        j["features"] = c["features"];
    } else if (stage == "evaluate") {
        j["persist"] = stage_key("persist", v);
        j["label"] = stage_key("label");
        j["features"] = c["features"];
        j["classifiers"] = c["classifiers"];
        j["hyperparameters"] = c["hyperparameters"];
        j["evaluation"] = c["evaluation"];
        j["seed"] = cfg_.seed;
    } else {
        throw std::invalid_argument("unknown stage '" + stage + "'");
    }
    return j;
}

std::string Pipeline::stage_key(const std::string& stage, const Variant& v) const {
    return content_hash(stage_inputs(stage, v).dump());
}

fs::path Pipeline::stage_dir(const std::string& stage, const Variant& v) const {
    return out_ / "cache" / (stage + "-" + stage_key(stage, v));
}

bool Pipeline::cached(const std::string& stage, const Variant& v) {
    const bool hit = fs::exists(stage_dir(stage, v) / "DONE");
    log_.push_back({stage, (stage == "simulate" || stage == "label") ? std::string{} : v.name(), stage_key(stage, v), hit});
    if (!hit) fs::create_directories(stage_dir(stage, v));
    return hit;
}

void Pipeline::commit(const std::string& stage, const Variant& v) {
    const auto dir = stage_dir(stage, v);
    write_text_file(dir / "inputs.json", stage_inputs(stage, v).dump(2) + "\n");
    write_text_file(dir / "DONE", stage_key(stage, v) + "\n");
}

// --- simulate ---------------------------------------------------------------

namespace {

std::size_t retained_begin_of(const TimeSeries& full, const SimConfig& cfg) {
    const std::size_t spp = cfg.samples_per_delay_period;
    const std::size_t first_kept = static_cast<std::size_t>(cfg.transient_periods) * spp;
    const std::size_t retained = static_cast<std::size_t>(cfg.total_periods - cfg.transient_periods) * spp;
    if (full.samples.size() >= first_kept + 2) return first_kept;
    return full.samples.size() > retained ? full.samples.size() - retained : 0;
}

void write_series_csv(const std::vector<SeriesRecord>& recs, std::ostream& os) {
    os << "grid_index,series_id,status,sample_interval,blew_up,retained_begin,samples\n";
    for (const auto& r : recs) {
        os << r.grid_index << ',' << r.series.id << ',' << (r.ok() ? "ok" : sanitize(r.error)) << ','
           << fmt_double(r.series.sample_interval) << ',' << (r.series.blew_up ? 1 : 0) << ',' << r.retained_begin;
        for (double x : r.series.samples) os << ',' << fmt_double(x);
        os << '\n';
    }
}

std::vector<SeriesRecord> read_series_csv(const fs::path& path, const GridSpec& grid) {
    const auto rows = read_csv_file(path);
    std::vector<SeriesRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < 6) throw std::runtime_error("series csv: short row");
        SeriesRecord rec;
        rec.grid_index = std::stoi(row[0]);
        rec.series.id = row[1];
        if (row[2] != "ok") rec.error = row[2];
        rec.series.sample_interval = parse_double(row[3]);
        rec.series.blew_up = row[4] == "1";
        rec.retained_begin = std::stoul(row[5]);
        rec.series.grid_point = grid.point(rec.grid_index / grid.depth_count, rec.grid_index % grid.depth_count);
        for (std::size_t k = 6; k < row.size(); ++k) rec.series.samples.push_back(parse_double(row[k]));
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

std::vector<SeriesRecord> Pipeline::simulate() {
    const auto dir = stage_dir("simulate");
    if (cached("simulate", {})) return read_series_csv(dir / "series.csv", cfg_.grid);
    const auto& g = cfg_.grid;
    std::vector<SeriesRecord> recs(g.size());
    const bool full = !cfg_.noise.after_transient;
    parallel_for_points(recs.size(), [&](std::size_t k) {
        auto& r = recs[k];
        r.grid_index = static_cast<int>(k);
        const GridPoint gp = g.point(static_cast<int>(k) / g.depth_count, static_cast<int>(k) % g.depth_count);
        try {
            r.series = full ? chatter::simulate_full(cfg_.process, gp, cfg_.simulation)
                          : chatter::simulate(cfg_.process, gp, cfg_.simulation);
            r.retained_begin = full ? retained_begin_of(r.series, cfg_.simulation) : 0;
        } catch (const std::exception& e) {
            r.series = {};
            r.series.grid_point = gp;
            r.error = e.what();
        }
        r.series.id = series_id(r.grid_index);
    });
    std::ostringstream os;
    write_series_csv(recs, os);
    write_text_file(dir / "series.csv", os.str());
    commit("simulate", {});
    return recs;
}

// --- label ------------------------------------------------------------------

LabeledGrid Pipeline::label() {
    const auto dir = stage_dir("label");
    if (cached("label", {})) {
        std::ifstream in(dir / "grid.csv");
        return read_grid_csv(in, cfg_.grid);
    }
    LabeledGrid grid = label_grid(cfg_.process, cfg_.grid, cfg_.stability_order, cfg_.hopf_tol);
    std::ostringstream os;
    write_grid_csv(grid, os);
    write_text_file(dir / "grid.csv", os.str());
    commit("label", {});
    return grid;
}

// --- prep -------------------------------------------------------------------

namespace {

void write_clouds(const std::vector<CloudRecord>& recs, const fs::path& dir) {
    std::ostringstream meta, pts;
    meta << "grid_index,series_id,status,delay,dimension,embedded_points,points\n";
    pts << "series_id,coordinates\n";
    for (const auto& r : recs) {
        meta << r.grid_index << ',' << r.series_id << ',' << (r.ok() ? "ok" : sanitize(r.error)) << ','
             << r.embedding.delay << ',' << r.embedding.dimension << ',' << r.embedded_points << ',' << r.cloud.size()
             << '\n';
        for (std::size_t i = 0; i < r.cloud.size(); ++i) {
            pts << r.series_id;
            for (double x : r.cloud.point(i)) pts << ',' << fmt_double(x);
            pts << '\n';
        }
    }
    write_text_file(dir / "embedding.csv", meta.str());
    write_text_file(dir / "clouds.csv", pts.str());
}

std::vector<CloudRecord> read_clouds(const fs::path& dir) {
    std::vector<CloudRecord> recs;
    std::map<std::string, std::size_t> by_id;
    const auto meta = read_csv_file(dir / "embedding.csv");
    for (std::size_t r = 1; r < meta.size(); ++r) {
        const auto& row = meta[r];
        if (row.size() != 7) throw std::runtime_error("embedding csv: expected 7 columns");
        CloudRecord c;
        c.grid_index = std::stoi(row[0]);
        c.series_id = row[1];
        if (row[2] != "ok") c.error = row[2];
        c.embedding.delay = std::stoi(row[3]);
        c.embedding.dimension = std::stoi(row[4]);
        c.embedded_points = std::stoul(row[5]);
        c.cloud.dimension = c.embedding.dimension;
        c.cloud.source = c.series_id;
        by_id[c.series_id] = recs.size();
        recs.push_back(std::move(c));
    }
    const auto pts = read_csv_file(dir / "clouds.csv");
    for (std::size_t r = 1; r < pts.size(); ++r) {
        auto& c = recs.at(by_id.at(pts[r][0]));
        if (pts[r].size() != static_cast<std::size_t>(c.cloud.dimension) + 1)
            throw std::runtime_error("clouds csv: wrong coordinate count for " + c.series_id);
        for (std::size_t k = 1; k < pts[r].size(); ++k) c.cloud.coords.push_back(parse_double(pts[r][k]));
    }
    return recs;
}

}  // namespace

std::vector<CloudRecord> Pipeline::prep(const Variant& v) {
    const auto dir = stage_dir("prep", v);
    if (cached("prep", v)) return read_clouds(dir);
    if (!series_memo_) series_memo_ = simulate();
    const auto& sims = *series_memo_;

    const auto& ec = cfg_.embedding;
    std::vector<CloudRecord> recs(sims.size());
    std::vector<std::vector<double>> signal(sims.size());
    parallel_for_points(sims.size(), [&](std::size_t k) {
        const auto& s = sims[k];
        auto& r = recs[k];
        r.grid_index = s.grid_index;
        r.series_id = v.snr_db ? s.series.id + "@" + v.name() : s.series.id;
        if (!s.ok()) {
            r.error = "simulation failed: " + s.error;
            return;
        }
        try {
            TimeSeries ts = s.series;
            if (v.snr_db)
                ts = add_noise(ts, *v.snr_db,
                               derive_seed(cfg_.seed, {seed_tag::noise, snr_bits(v), static_cast<std::uint64_t>(k)}));
            signal[k].assign(ts.samples.begin() + static_cast<std::ptrdiff_t>(s.retained_begin), ts.samples.end());
            if (ec.policy == EmbeddingPolicy::fixed) {
                r.embedding = {ec.delay, ec.dimension};
            } else {
                r.embedding.delay = select_delay(signal[k], ec.max_delay);
                r.embedding.dimension = select_dimension(signal[k], r.embedding.delay);
            }
        } catch (const std::exception& e) {
            r.error = e.what();
        }
    });

    if (ec.policy == EmbeddingPolicy::dataset_median) {
        std::vector<int> delays, dims;
        for (const auto& r : recs)
            if (r.ok()) delays.push_back(r.embedding.delay), dims.push_back(r.embedding.dimension);
        if (!delays.empty()) {
            std::sort(delays.begin(), delays.end());
            std::sort(dims.begin(), dims.end());
            const EmbeddingParams med{delays[(delays.size() - 1) / 2], dims[(dims.size() - 1) / 2]};
            for (auto& r : recs)
                if (r.ok()) r.embedding = med;
        }
    }

    parallel_for_points(recs.size(), [&](std::size_t k) {
        auto& r = recs[k];
        if (!r.ok()) return;
        try {
            PointCloud pc = takens_embed(signal[k], r.embedding);
            r.embedded_points = pc.size();
            pc.source = r.series_id;
            r.cloud = farthest_point_subsample(pc, ec.cloud_cap);
            r.cloud.source = r.series_id;
        } catch (const std::exception& e) {
            r.error = e.what();
            r.cloud = {};
        }
    });
    write_clouds(recs, dir);
    commit("prep", v);
    return recs;
}

// --- persist ----------------------------------------------------------------

std::vector<DiagramRecord> Pipeline::persist(const Variant& v) {
    const auto dir = stage_dir("persist", v);
    const int max_dim = cfg_.persistence.max_dim;
    if (cached("persist", v)) {
        const auto status = read_csv_file(dir / "status.csv");
        std::ifstream in(dir / "diagrams.csv");
        auto dgms = read_diagrams_csv(in, max_dim);
        std::vector<DiagramRecord> recs;
        for (std::size_t r = 1; r < status.size(); ++r) {
            if (status[r].size() != 3) throw std::runtime_error("persist cache: expected 3 status columns");
            DiagramRecord rec;
            rec.grid_index = std::stoi(status[r][0]);
            rec.series_id = status[r][1];
            if (status[r][2] != "ok") {
                rec.error = status[r][2];
            } else if (auto it = dgms.find(rec.series_id); it != dgms.end()) {
                rec.diagrams = it->second;
            } else {
                rec.diagrams.resize(max_dim + 1);
                for (int i = 0; i <= max_dim; ++i) rec.diagrams[i].dimension = i;
            }
            recs.push_back(std::move(rec));
        }
        return recs;
    }

    const auto clouds = prep(v);
    std::vector<DiagramRecord> recs(clouds.size());
    for (std::size_t k = 0; k < clouds.size(); ++k) {
        recs[k].grid_index = clouds[k].grid_index;
        recs[k].series_id = clouds[k].series_id;
    }
    RipsOptions opts;
    opts.max_dim = max_dim;
    opts.threshold = cfg_.persistence.threshold;
    opts.max_points = cfg_.embedding.cloud_cap;
    parallel_for_points(clouds.size(), [&](std::size_t k) {
        if (!clouds[k].ok()) {
            recs[k].error = "embedding failed: " + clouds[k].error;
            return;
        }
        try {
            recs[k].diagrams = rips_persistence(clouds[k].cloud, opts);
        } catch (const std::exception& e) {
            recs[k].error = e.what();
        }
    });
    std::ostringstream dg, st;
    dg << "series_id,dim,birth,death\n";
    st << "grid_index,series_id,status\n";
    for (const auto& r : recs) {
        st << r.grid_index << ',' << r.series_id << ',' << (r.ok() ? "ok" : sanitize(r.error)) << '\n';
        if (r.ok()) write_diagrams_csv(r.series_id, r.diagrams, dg, false);
    }
    write_text_file(dir / "diagrams.csv", dg.str());
    write_text_file(dir / "status.csv", st.str());
    commit("persist", v);
    return recs;
}

// --- featurize --------------------------------------------------------------

namespace {

std::vector<PersistenceDiagram> finite_diagrams(const DiagramRecord& r, int max_dim) {
    std::vector<PersistenceDiagram> out(max_dim + 1);
    for (int d = 0; d <= max_dim; ++d) {
        out[d].dimension = d;
        if (d < static_cast<int>(r.diagrams.size())) out[d] = r.diagrams[d].finite();
    }
    return out;
}

TemplateMesh fit_mesh(const std::vector<std::vector<PersistenceDiagram>>& dgms, std::span<const std::size_t> rows,
                      int dim, std::pair<int, int> size, double padding) {
    std::vector<BirthLifetime> pts;
    for (auto r : rows) {
        const auto bl = to_birth_lifetime(dgms[r][dim]);
        pts.insert(pts.end(), bl.begin(), bl.end());
    }
    return build_template_mesh(pts, size.first, size.second, padding);
}

}  // namespace

fs::path Pipeline::featurize(const Variant& v) {
    const auto dir = stage_dir("featurize", v);
    if (cached("featurize", v)) return dir;
    const auto dgm_recs = persist(v);
    const int max_dim = cfg_.persistence.max_dim;
    std::vector<std::vector<PersistenceDiagram>> dgms;
    std::vector<const DiagramRecord*> ok;
    for (const auto& r : dgm_recs)
        if (r.ok()) ok.push_back(&r), dgms.push_back(finite_diagrams(r, max_dim));
    std::vector<std::size_t> all(ok.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const LabeledGrid grid = label();
    auto labels_of = [&](int g) {
        const auto& e = grid.entries.at(g);
        if (!e.label) return std::string(",,");
        return "," + to_string(e.label->class3) + "," + to_string(e.label->class2());
    };

    std::ostringstream cc;
    cc << "grid_index,series_id,class3,class2";
    for (int d = 0; d <= max_dim; ++d)
        for (int f = 1; f <= 5; ++f) cc << ",CC_f" << f << "_H" << d;
    cc << '\n';
    for (std::size_t i = 0; i < ok.size(); ++i) {
        cc << ok[i]->grid_index << ',' << ok[i]->series_id << labels_of(ok[i]->grid_index);
        for (int d = 0; d <= max_dim; ++d)
            for (double x : carlsson_coordinates(dgms[i][d]).f) cc << ',' << fmt_double(x);
        cc << '\n';
    }
    write_text_file(dir / "features_cc.csv", cc.str());

    for (auto size : cfg_.features.mesh_sizes) {
        std::ostringstream tf;
        std::vector<TemplateMesh> meshes;
        tf << "grid_index,series_id,class3,class2";
        for (int d = 0; d <= max_dim; ++d) {
            meshes.push_back(fit_mesh(dgms, all, d, size, cfg_.features.padding));
            for (const auto& n : template_vector(PersistenceDiagram{d, {}}, meshes.back()).names) tf << ',' << n;
        }
        tf << '\n';
        for (std::size_t i = 0; i < ok.size(); ++i) {
            tf << ok[i]->grid_index << ',' << ok[i]->series_id << labels_of(ok[i]->grid_index);
            for (int d = 0; d <= max_dim; ++d)
                for (double x : template_features(dgms[i][d], meshes[d])) tf << ',' << fmt_double(x);
            tf << '\n';
        }
        write_text_file(dir / ("features_tf_" + std::to_string(size.first) + "x" + std::to_string(size.second) + ".csv"),
                        tf.str());
    }
    commit("featurize", v);
    return dir;
}

// --- evaluate ---------------------------------------------------------------

namespace {

struct EvalTask {
    int problem;
    FeatureMethod method;
    DimsSet dims;
    Algorithm algo;
};

}  // namespace

std::vector<ResultCell> Pipeline::evaluate(const Variant& v, ExclusionCounts* counts_out) {
    const auto dir = stage_dir("evaluate", v);
    if (cached("evaluate", v)) {
        const json j = json::parse(read_text_file(dir / "cells.json"));
        if (counts_out) *counts_out = counts_from_json(j.at("points"));
        std::vector<ResultCell> cells;
        for (const auto& c : j.at("cells")) cells.push_back(cell_from_json(c));
        return cells;
    }

    const auto grid = label();
    const auto dgm_recs = persist(v);
    const int max_dim = cfg_.persistence.max_dim;
    ExclusionCounts counts;
    std::vector<int> grid_index, y2, y3;
    std::vector<std::vector<PersistenceDiagram>> dgms;
    for (const auto& r : dgm_recs) {
        const auto& e = grid.entries.at(r.grid_index);
        if (!e.label) {
            ++(e.undetermined ? counts.undetermined : counts.label_failed);
            continue;
        }
        if (!r.ok()) {
            if (r.error.rfind("embedding failed: simulation failed", 0) == 0) ++counts.simulation_failed;
            else if (r.error.rfind("embedding failed", 0) == 0) ++counts.embedding_failed;
            else ++counts.persistence_failed;
            continue;
        }
        grid_index.push_back(r.grid_index);
        y3.push_back(static_cast<int>(e.label->class3));
        y2.push_back(static_cast<int>(e.label->class2()));
        dgms.push_back(finite_diagrams(r, max_dim));
    }
    counts.retained = static_cast<int>(grid_index.size());
    if (grid_index.empty()) throw StageError("evaluate", "no usable grid points for variant " + v.name());

    std::vector<std::vector<CarlssonFeatures>> cc(max_dim + 1);
    for (int d = 0; d <= max_dim; ++d)
        for (const auto& g : dgms) cc[d].push_back(carlsson_coordinates(g[d]));

    EvalProtocol protocol;
    protocol.train_fraction = cfg_.evaluation.train_fraction;
    protocol.repeats = cfg_.evaluation.repeats;
    for (int r = 0; r < protocol.repeats; ++r)
        protocol.seeds.push_back(derive_seed(cfg_.seed, {seed_tag::split, static_cast<std::uint64_t>(r)}));

    std::vector<EvalTask> tasks;
    for (int p : cfg_.evaluation.class_problems)
        for (auto m : cfg_.features.methods)
            for (auto d : dims_columns(cfg_))
                for (auto a : cfg_.classifiers) tasks.push_back({p, m, d, a});

    std::vector<ResultCell> cells(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        auto& cell = cells[t];
        cell.class_problem = task.problem;
        cell.mode = to_string(cfg_.process.mode);
        cell.variant = v.name();
        cell.method = task.method;
        cell.dims = task.dims;
        cell.classifier = task.algo;
        const std::vector<int>& y = task.problem == 2 ? y2 : y3;
        const auto dims = dims_of(task.dims);
        const std::string context = "variant " + v.name() + ", " + std::to_string(task.problem) + "-class, " +
                                    to_string(task.method) + " " + to_string(task.dims) + ", " + to_string(task.algo);
        try {
            if (task.method == FeatureMethod::carlsson) {
                std::vector<std::vector<CarlssonFeatures>> blocks;
                for (int d : dims) blocks.push_back(cc[d]);
                const auto sweep = cc_subset_sweep(blocks, y, grid_index, task.problem, task.algo, cfg_.hyper, protocol);
                for (std::size_t k = 0; k < sweep.masks.size(); ++k)
                    cell.sweep.push_back({mask_name(sweep.masks[k]), sweep.results[k].mean_accuracy,
                                          sweep.results[k].std_accuracy});
                cell.eval = sweep.results[sweep.best_position];
                cell.best_setting = mask_name(sweep.best_mask);
            } else {
                const auto& sizes = cfg_.features.mesh_sizes;
                std::vector<EvalResult> results(sizes.size());
                std::vector<std::string> errors(sizes.size());
#pragma omp parallel for schedule(dynamic)
                for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(sizes.size()); ++s) {
                    try {
                        FeatureBuilder fb = [&](std::span<const std::size_t> train_rows) {
                            std::vector<TemplateMesh> meshes;
                            std::size_t width = 0;
                            for (int d : dims) {
                                meshes.push_back(fit_mesh(dgms, train_rows, d, sizes[s], cfg_.features.padding));
                                width += meshes.back().feature_count();
                            }
                            Eigen::MatrixXd X(static_cast<Eigen::Index>(dgms.size()), static_cast<Eigen::Index>(width));
                            for (std::size_t r = 0; r < dgms.size(); ++r) {
                                Eigen::Index c = 0;
                                for (std::size_t b = 0; b < dims.size(); ++b)
                                    for (double x : template_features(dgms[r][dims[b]], meshes[b]))
                                        X(static_cast<Eigen::Index>(r), c++) = x;
                            }
                            return X;
                        };
                        results[s] = chatter::evaluate(fb, y, grid_index, task.problem, task.algo, cfg_.hyper, protocol);
                    } catch (const std::exception& e) {
                        errors[s] = e.what();
                    }
                }
                for (const auto& e : errors)
                    if (!e.empty()) throw std::runtime_error(e);
                std::size_t best = 0;
                for (std::size_t s = 0; s < sizes.size(); ++s) {
                    const std::string name = std::to_string(sizes[s].first) + "x" + std::to_string(sizes[s].second);
                    cell.sweep.push_back({name, results[s].mean_accuracy, results[s].std_accuracy});
                    if (results[s].mean_accuracy > results[best].mean_accuracy) best = s;
                }
                cell.eval = results[best];
                cell.best_setting = cell.sweep[best].setting;
            }
        } catch (const std::exception& e) {
            throw StageError("evaluate", context + ": " + e.what());
        }
        cell.mean = cell.eval.mean_accuracy;
        cell.std = cell.eval.std_accuracy;
    }

    ordered_json j;
    j["points"] = counts_json(counts);
    ordered_json arr = ordered_json::array();
    for (const auto& c : cells) arr.push_back(cell_json(c));
    j["cells"] = arr;
    write_text_file(dir / "cells.json", j.dump(1) + "\n");
    commit("evaluate", v);
    if (counts_out) *counts_out = counts;
    return cells;
}

// --- run --------------------------------------------------------------------

ResultsTable Pipeline::run() {
    ResultsTable table;
    table.name = cfg_.name;
    table.mode = to_string(cfg_.process.mode);
    table.cloud_cap = cfg_.embedding.cloud_cap;
    table.max_dim = cfg_.persistence.max_dim;
    const LabeledGrid grid = label();
    for (const auto& v : variants(cfg_)) {
        table.variants.push_back(v.name());
        ExclusionCounts counts;
        featurize(v);
        auto cells = evaluate(v, &counts);
        table.exclusions.emplace_back(v.name(), counts);
        for (auto& c : cells) table.cells.push_back(std::move(c));
    }
    table.mark_best();

    std::ostringstream grid_csv;
    write_grid_csv(grid, grid_csv);
    write_text_file(out_ / "grid.csv", grid_csv.str());
    write_text_file(out_ / "results.json", table.to_json().dump(1) + "\n");

    ordered_json manifest;
    manifest["config"] = cfg_.to_json();
    manifest["cloud_cap"] = cfg_.embedding.cloud_cap;
    ordered_json stages = ordered_json::object();
    stages["simulate"] = stage_key("simulate");
    stages["label"] = stage_key("label");
    for (const auto& v : variants(cfg_))
        for (const char* s : {"prep", "persist", "featurize", "evaluate"}) stages[std::string(s) + ":" + v.name()] = stage_key(s, v);
    manifest["stages"] = stages;
    write_text_file(out_ / "manifest.json", manifest.dump(2) + "\n");

    report(out_, "markdown");
    report(out_, "csv");

    std::ostringstream log;
    for (const auto& r : log_)
        log << r.stage << (r.variant.empty() ? "" : ":" + r.variant) << ' ' << r.key << ' '
            << (r.cache_hit ? "hit" : "computed") << '\n';
    write_text_file(out_ / "run_log.txt", log.str());
    return table;
}

}  // namespace chatter
