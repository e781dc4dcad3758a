#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chatter/config.hpp"
#include "chatter/featurize.hpp"
#include "chatter/milling_model.hpp"
#include "chatter/pipeline.hpp"
#include "chatter/signal_prep.hpp"

using namespace chatter;
namespace fs = std::filesystem;

namespace {

fs::path config_dir() {
    const char* env = std::getenv("CHATTER_CONFIG_DIR");
    return env ? fs::path(env) : fs::path("configs");
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("chatter_pipeline_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return static_cast<int>(k);
        return -1;
    }
};

Csv read_csv(const fs::path& p) {
    std::ifstream in(p);
    Csv c;
    std::string line;
    if (std::getline(in, line)) c.header = split_csv_line(line);
    while (std::getline(in, line))
        if (!line.empty()) c.rows.push_back(split_csv_line(line));
    return c;
}

std::string collapse(const std::string& class3) {
    if (class3 == "stable") return "stable";
    if (class3 == "hopf" || class3 == "period_doubling") return "chatter";
    return class3;
}

ExperimentConfig smoke4() { return ExperimentConfig::load(config_dir() / "smoke_4x4.json"); }

// one full smoke run shared by the cases below
struct SmokeRun {
    fs::path dir;
    ResultsTable table;
    std::vector<StageRecord> log;
    std::string results_json;
};

const SmokeRun& smoke_run() {
    static const SmokeRun run = [] {
        SmokeRun r;
        r.dir = scratch("smoke4");
        Pipeline p(smoke4(), r.dir);
        r.table = p.run();
        r.log = p.log();
        r.results_json = slurp(r.dir / "results.json");
        return r;
    }();
    return run;
}

}  // namespace

TEST_CASE("content hash and seed derivation") {
    CHECK(content_hash("") == "cbf29ce484222325");
    CHECK(content_hash("a") == "af63dc4c8601ec8c");
    CHECK(content_hash("a").size() == 16);
    CHECK(derive_seed(7, {1, 2, 3}) == derive_seed(7, {1, 2, 3}));
    CHECK(derive_seed(7, {1, 2, 3}) != derive_seed(7, {1, 2, 4}));
    CHECK(derive_seed(7, {1, 2, 3}) != derive_seed(8, {1, 2, 3}));
    CHECK(derive_seed(7, {1, 2}) != derive_seed(7, {2, 1}));
    CHECK(derive_seed(7, {1}) != derive_seed(7, {1, 0}));
}

TEST_CASE("variant names and enumeration") {
    CHECK(Variant{}.name() == "noiseless");
    CHECK(Variant{25.0}.name() == "snr25");
    CHECK(Variant{22.5}.name() == "snr22.5");
    const auto cfg = smoke4();
    const auto vs = variants(cfg);
    REQUIRE(vs.size() == 4);
    CHECK(vs[0].name() == "noiseless");
    CHECK(vs[1].name() == "snr20");
    CHECK(vs[3].name() == "snr30");
}

TEST_CASE("config loading and validation") {
    for (const char* name : {"smoke_4x4.json", "smoke_6x6.json", "down_30x30.json", "up_30x30.json",
                             "acceptance_down_30x30.json"}) {
        CAPTURE(name);
        const auto cfg = ExperimentConfig::load(config_dir() / name);
        CHECK_NOTHROW(cfg.validate());
        // a dump reloads to the same config
        const auto again = ExperimentConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
        CHECK(again.to_json().dump() == cfg.to_json().dump());
    }
    const auto up = ExperimentConfig::load(config_dir() / "up_30x30.json");
    CHECK(to_string(up.process.mode) == "up");

    auto j = nlohmann::json::parse(smoke4().to_json().dump());
    j["grid"]["speed_cont"] = 3;
    CHECK_THROWS(ExperimentConfig::from_json(j));
    j = nlohmann::json::parse(smoke4().to_json().dump());
    j["unknown_section"] = 1;
    CHECK_THROWS(ExperimentConfig::from_json(j));
    j = nlohmann::json::parse(smoke4().to_json().dump());
    j["evaluation"]["train_fraction"] = 1.5;
    CHECK_THROWS(ExperimentConfig::from_json(j).validate());
    j = nlohmann::json::parse(smoke4().to_json().dump());
    j["persistence"]["max_dim"] = 7;
    CHECK_THROWS(ExperimentConfig::from_json(j).validate());
    CHECK_THROWS(ExperimentConfig::load(config_dir() / "does_not_exist.json"));
}

TEST_CASE("smoke run covers every factor combination") {
    const auto& run = smoke_run();
    const auto cfg = smoke4();
    CHECK(run.table.cells.size() == 96);
    std::set<std::string> seen;
    for (const auto& c : run.table.cells) {
        const std::string key = std::to_string(c.class_problem) + c.variant + to_string(c.method) + to_string(c.dims) +
                                to_string(c.classifier);
        CHECK(seen.insert(key).second);
        CHECK(c.mean >= 0.0);
        CHECK(c.mean <= 1.0);
        CHECK(c.eval.per_split_accuracies.size() == 10);
        CHECK(c.mode == "down");
    }
    for (const auto& v : variants(cfg))
        for (auto m : cfg.features.methods)
            for (auto d : dims_columns(cfg))
                for (auto a : cfg.classifiers) CHECK(run.table.find(2, v.name(), m, d, a) != nullptr);

    for (const char* f : {"results.json", "table.md", "table.csv", "manifest.json", "grid.csv", "run_log.txt"})
        CHECK(fs::exists(run.dir / f));
    int prep = 0, persist = 0, featurize = 0, evaluate = 0;
    for (const auto& e : fs::directory_iterator(run.dir / "cache")) {
        const std::string n = e.path().filename().string();
        CHECK(fs::exists(e.path() / "DONE"));
        CHECK(fs::exists(e.path() / "inputs.json"));
        prep += n.rfind("prep-", 0) == 0;
        persist += n.rfind("persist-", 0) == 0;
        featurize += n.rfind("featurize-", 0) == 0;
        evaluate += n.rfind("evaluate-", 0) == 0;
    }
    CHECK(prep == 4);
    CHECK(persist == 4);
    CHECK(featurize == 4);
    CHECK(evaluate == 4);
    for (const auto& r : run.log) CHECK_FALSE((r.cache_hit && r.stage == "simulate"));
}

TEST_CASE("rerun hits every stage and reproduces results") {
    const auto& run = smoke_run();
    Pipeline p(smoke4(), run.dir);
    const auto t = p.run();
    REQUIRE(!p.log().empty());
    for (const auto& r : p.log()) {
        CAPTURE(r.stage);
        CAPTURE(r.variant);
        CHECK(r.cache_hit);
    }
    CHECK(slurp(run.dir / "results.json") == run.results_json);
    CHECK(t.cells.size() == run.table.cells.size());
}

TEST_CASE("cache keys track only their inputs") {
    const auto base = smoke4();
    const fs::path dir = scratch("keys");
    const Pipeline a(base, dir);

    auto hyper = base;
    hyper.hyper.svm_c = 3.0;
    const Pipeline b(hyper, dir);
    for (const auto& v : variants(base)) {
        for (const char* s : {"prep", "persist", "featurize"}) CHECK(a.stage_key(s, v) == b.stage_key(s, v));
        CHECK(a.stage_key("evaluate", v) != b.stage_key("evaluate", v));
    }
    CHECK(a.stage_key("simulate") == b.stage_key("simulate"));
    CHECK(a.stage_key("label") == b.stage_key("label"));

    auto snr = base;
    snr.noise.snr_db = {25.0, 40.0};
    const Pipeline c(snr, dir);
    const Variant clean{}, s25{25.0};
    for (const char* s : {"prep", "persist", "featurize", "evaluate"}) {
        CHECK(a.stage_key(s, clean) == c.stage_key(s, clean));
        CHECK(a.stage_key(s, s25) == c.stage_key(s, s25));
    }

    auto seed = base;
    seed.seed = base.seed + 1;
    const Pipeline d(seed, dir);
    CHECK(a.stage_key("prep", clean) == d.stage_key("prep", clean));
    CHECK(a.stage_key("prep", s25) != d.stage_key("prep", s25));

    auto grid = base;
    grid.grid.depth_max = 2.5e-3;
    const Pipeline e(grid, dir);
    CHECK(a.stage_key("simulate") != e.stage_key("simulate"));
    CHECK(a.stage_key("label") != e.stage_key("label"));
    CHECK(a.stage_key("prep", clean) != e.stage_key("prep", clean));
}

TEST_CASE("changing a hyperparameter recomputes evaluation only") {
    const auto& run = smoke_run();
    auto cfg = smoke4();
    cfg.hyper.logistic_c = 2.0;
    Pipeline p(cfg, run.dir);
    p.run();
    int recomputed = 0;
    for (const auto& r : p.log()) {
        CAPTURE(r.stage);
        CAPTURE(r.variant);
        if (r.stage == "evaluate") {
            recomputed += !r.cache_hit;
        } else {
            CHECK(r.cache_hit);
        }
    }
    CHECK(recomputed == 4);
    // restore the shared run's top-level outputs for cases that read them
    Pipeline back(smoke4(), run.dir);
    back.run();
    CHECK(slurp(run.dir / "results.json") == run.results_json);
}

TEST_CASE("a noisy cloud regenerates from the seed and grid index") {
    const auto& run = smoke_run();
    const auto cfg = smoke4();
    Pipeline p(cfg, run.dir);
    const Variant v{25.0};
    const auto recs = p.prep(v);
    REQUIRE(recs.size() == cfg.grid.size());
    int compared = 0;
    for (std::size_t k : {std::size_t{0}, std::size_t{5}, std::size_t{10}}) {
        const auto& r = recs[k];
        if (!r.ok()) continue;
        const int si = static_cast<int>(k) / cfg.grid.depth_count, di = static_cast<int>(k) % cfg.grid.depth_count;
        const TimeSeries clean = simulate(cfg.process, cfg.grid.point(si, di), cfg.simulation);
        const TimeSeries noisy = add_noise(clean, 25.0,
                                           derive_seed(cfg.seed, {seed_tag::noise, std::bit_cast<std::uint64_t>(25.0), k}));
        const int delay = select_delay(noisy.samples, cfg.embedding.max_delay);
        const int dim = select_dimension(noisy.samples, delay);
        CHECK(r.embedding.delay == delay);
        CHECK(r.embedding.dimension == dim);
        const PointCloud pc = farthest_point_subsample(takens_embed(noisy.samples, {delay, dim}), cfg.embedding.cloud_cap);
        REQUIRE(pc.size() == r.cloud.size());
        REQUIRE(pc.dimension == r.cloud.dimension);
        double worst = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < pc.coords.size(); ++i) {
            worst = std::max(worst, std::abs(pc.coords[i] - r.cloud.coords[i]));
            scale = std::max(scale, std::abs(pc.coords[i]));
        }
        CHECK(worst <= 1e-12 * scale);
        ++compared;
    }
    CHECK(compared >= 2);
}

TEST_CASE("binary labels are the collapsed three-class labels") {
    const auto& run = smoke_run();
    const Csv grid = read_csv(run.dir / "grid.csv");
    REQUIRE(grid.col("class3") >= 0);
    REQUIRE(grid.col("class2") >= 0);
    REQUIRE(grid.rows.size() == 16);
    for (const auto& row : grid.rows) CHECK(row[grid.col("class2")] == collapse(row[grid.col("class3")]));

    int files = 0;
    for (const auto& e : fs::directory_iterator(run.dir / "cache")) {
        if (e.path().filename().string().rfind("featurize-", 0) != 0) continue;
        for (const auto& f : fs::directory_iterator(e.path())) {
            if (f.path().extension() != ".csv") continue;
            const Csv c = read_csv(f.path());
            CAPTURE(f.path().string());
            REQUIRE(c.header.size() > 4);
            CHECK(c.header[0] == "grid_index");
            CHECK(c.header[1] == "series_id");
            CHECK(c.header[2] == "class3");
            CHECK(c.header[3] == "class2");
            for (const auto& row : c.rows) {
                CHECK(row.size() == c.header.size());
                CHECK(row[3] == collapse(row[2]));
                const int gi = std::stoi(row[0]);
                CHECK(grid.rows[gi][grid.col("class3")] == row[2]);
            }
            ++files;
        }
    }
    CHECK(files == 8);
}

TEST_CASE("report reproduces the tables and markers") {
    const auto& run = smoke_run();
    const std::string md = slurp(run.dir / "table.md");
    const std::string csv = slurp(run.dir / "table.csv");
    fs::remove(run.dir / "table.md");
    fs::remove(run.dir / "table.csv");
    report(run.dir, "markdown");
    report(run.dir, "csv");
    CHECK(slurp(run.dir / "table.md") == md);
    CHECK(slurp(run.dir / "table.csv") == csv);
    CHECK_THROWS(report(run.dir, "html"));
    CHECK_THROWS(report(run.dir / "nowhere", "csv"));

    const auto t = ResultsTable::from_json(nlohmann::json::parse(run.results_json));
    const Csv c = read_csv(run.dir / "table.csv");
    REQUIRE(c.rows.size() == t.cells.size());
    const int im = c.col("mean_accuracy"), is = c.col("std_accuracy"), ib = c.col("best_in_column"),
              id = c.col("best_in_dataset");
    REQUIRE(im >= 0);
    REQUIRE(id >= 0);
    for (const auto& row : c.rows) {
        const ResultCell* cell =
            t.find(std::stoi(row[c.col("class_problem")]), row[c.col("variant")],
                   feature_method_from_string(row[c.col("method")]),
                   row[c.col("dims")] == "H0"   ? DimsSet::h0
                   : row[c.col("dims")] == "H1" ? DimsSet::h1
                   : row[c.col("dims")] == "H2" ? DimsSet::h2
                                                : DimsSet::h1_h2,
                   algorithm_from_string(row[c.col("classifier")]));
        REQUIRE(cell != nullptr);
        CHECK(std::stod(row[im]) == doctest::Approx(cell->mean).epsilon(1e-12));
        CHECK(std::stod(row[is]) == doctest::Approx(cell->std).epsilon(1e-12));
        CHECK((row[ib] == "1") == cell->best_in_column);
        CHECK((row[id] == "1") == cell->best_in_dataset);
        // the markdown shows the same number at one decimal
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f ± %.1f", 100.0 * cell->mean, 100.0 * cell->std);
        CHECK(md.find(buf) != std::string::npos);
    }

    // markers equal the maxima
    for (const auto& cell : t.cells) {
        const double col = t.best_mean(cell.class_problem, cell.variant, cell.method, cell.dims);
        const double all = t.best_mean(cell.class_problem, cell.variant);
        CHECK(cell.mean <= col);
        if (cell.best_in_column) CHECK(cell.mean == col);
        if (cell.best_in_dataset) CHECK(cell.mean == all);
    }
    std::map<std::string, int> col_marks, set_marks;
    for (const auto& cell : t.cells) {
        col_marks[std::to_string(cell.class_problem) + cell.variant + to_string(cell.method) + to_string(cell.dims)] +=
            cell.best_in_column;
        set_marks[std::to_string(cell.class_problem) + cell.variant] += cell.best_in_dataset;
    }
    for (const auto& [k, n] : col_marks) CHECK(n == 1);
    for (const auto& [k, n] : set_marks) CHECK(n == 1);
}

TEST_CASE("maps exist for every cell") {
    const auto& run = smoke_run();
    int n = 0;
    for (const auto& e : fs::directory_iterator(run.dir / "maps")) {
        const Csv c = read_csv(e.path());
        CHECK(c.header == std::vector<std::string>{"spindle_speed", "depth_of_cut", "true_label",
                                                   "misclassified_fraction"});
        for (const auto& row : c.rows) {
            if (row[3].empty()) continue;
            const double f = std::stod(row[3]);
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
        }
        ++n;
    }
    CHECK(n == static_cast<int>(run.table.cells.size()));
    CHECK(fs::exists(run.dir / "maps" / "2class_noiseless_CC_H1H2_logistic.csv"));
}

TEST_CASE("subset sweep evaluates all 31 masks") {
    const auto& run = smoke_run();
    const auto cfg = smoke4();
    Pipeline p(cfg, run.dir);
    const auto diagrams = p.persist(Variant{});
    const auto grid = p.label();
    std::vector<std::vector<CarlssonFeatures>> per_dim(2);
    std::vector<int> labels, index;
    for (const auto& d : diagrams) {
        if (!d.ok()) continue;
        const auto& e = grid.entries[d.grid_index];
        if (!e.label) continue;
        per_dim[0].push_back(carlsson_coordinates(d.diagrams[1]));
        per_dim[1].push_back(carlsson_coordinates(d.diagrams[2]));
        labels.push_back(e.label->class2() == Class2::chatter ? 1 : 0);
        index.push_back(d.grid_index);
    }
    REQUIRE(labels.size() >= 10);
    EvalProtocol protocol = default_protocol(cfg.seed);
    protocol.train_fraction = cfg.evaluation.train_fraction;
    const auto r = cc_subset_sweep(per_dim, labels, index, 2, Algorithm::random_forest, cfg.hyper, protocol);
    REQUIRE(r.masks.size() == 31);
    REQUIRE(r.results.size() == 31);
    CHECK(std::set<SubsetMask>(r.masks.begin(), r.masks.end()).size() == 31);
    CHECK(r.masks[r.best_position] == r.best_mask);
    std::size_t full = 0;
    for (std::size_t k = 0; k < r.masks.size(); ++k)
        if (r.masks[k] == 0x1f) full = k;
    for (const auto& e : r.results) CHECK(r.results[r.best_position].mean_accuracy >= e.mean_accuracy);
    CHECK(r.results[r.best_position].mean_accuracy >= r.results[full].mean_accuracy);
}

TEST_CASE("three-class smoke run") {
    const fs::path dir = scratch("smoke6");
    const auto cfg = ExperimentConfig::load(config_dir() / "smoke_6x6.json");
    Pipeline p(cfg, dir);
    const auto t = p.run();
    std::set<int> problems;
    for (const auto& c : t.cells) problems.insert(c.class_problem);
    CHECK(problems == std::set<int>{2, 3});
    // 2 problems x 2 variants x 2 methods x 3 dims x 4 classifiers
    CHECK(t.cells.size() == 96);
    const auto grid = p.label();
    std::set<Class3> classes;
    for (const auto& e : grid.entries)
        if (e.label) classes.insert(e.label->class3);
    CHECK(classes.size() == 3);
    for (const auto& c : t.cells)
        if (c.class_problem == 3) CHECK(c.best_setting.size() > 0);
    fs::remove_all(dir);
}
