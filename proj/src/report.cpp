#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "chatter/csv_io.hpp"
#include "chatter/pipeline.hpp"

namespace chatter {

namespace fs = std::filesystem;

namespace {

std::string pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * x);
    return buf;
}

std::string label_name(const GridEntry& e, int problem) {
    if (!e.label) return e.undetermined ? "undetermined" : "failed";
    return problem == 2 ? to_string(e.label->class2()) : to_string(e.label->class3);
}

}  // namespace

void render_markdown(const ResultsTable& t, std::ostream& os) {
    os << "# " << t.name << " (" << t.mode << " milling)\n\n";
    os << "Mean accuracy (%) ± std over repeated splits. **Bold**: best classifier in the column."
          " `*`: best cell of the dataset.\n";
    std::set<int> problems;
    for (const auto& c : t.cells) problems.insert(c.class_problem);
    for (int p : problems)
        for (const auto& v : t.variants) {
            std::vector<std::pair<FeatureMethod, DimsSet>> cols;
            std::vector<Algorithm> rows;
            for (const auto& c : t.cells) {
                if (c.class_problem != p || c.variant != v) continue;
                const auto col = std::make_pair(c.method, c.dims);
                if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
                if (std::find(rows.begin(), rows.end(), c.classifier) == rows.end()) rows.push_back(c.classifier);
            }
            os << "\n## " << p << "-class, " << v << "\n\n| Classifier |";
            for (auto [m, d] : cols) os << ' ' << to_string(m) << ' ' << to_string(d) << " |";
            os << "\n|---|";
            for (std::size_t k = 0; k < cols.size(); ++k) os << "---|";
            os << '\n';
            for (auto a : rows) {
                os << "| " << to_string(a) << " |";
                for (auto [m, d] : cols) {
                    const ResultCell* c = t.find(p, v, m, d, a);
                    if (!c) {
                        os << " missing |";
                        continue;
                    }
                    std::string s = pct(c->mean) + " ± " + pct(c->std);
                    if (c->best_in_column) s = "**" + s + "**";
                    if (c->best_in_dataset) s += " *";
                    os << ' ' << s << " |";
                }
                os << '\n';
            }
            for (const auto& [name, counts] : t.exclusions)
                if (name == v)
                    os << "\nPoints used: " << counts.retained << "; excluded: " << counts.undetermined
                       << " undetermined, " << counts.label_failed << " label failures, " << counts.simulation_failed
                       << " simulation failures, " << counts.embedding_failed << " embedding failures, "
                       << counts.persistence_failed << " persistence failures.\n";
        }
}

void render_csv(const ResultsTable& t, std::ostream& os) {
    os << "class_problem,mode,variant,method,dims,classifier,mean_accuracy,std_accuracy,best_setting,best_in_column,"
          "best_in_dataset\n";
    for (const auto& c : t.cells)
        os << c.class_problem << ',' << c.mode << ',' << c.variant << ',' << to_string(c.method) << ','
           << to_string(c.dims) << ',' << to_string(c.classifier) << ',' << fmt_double(c.mean) << ','
           << fmt_double(c.std) << ',' << c.best_setting << ',' << (c.best_in_column ? 1 : 0) << ','
           << (c.best_in_dataset ? 1 : 0) << '\n';
}

void write_map_csv(const LabeledGrid& grid, const ResultCell& cell, std::ostream& os) {
    std::map<int, std::pair<int, int>> tally;
    for (std::size_t r = 0; r < cell.eval.grid_index.size(); ++r)
        tally[cell.eval.grid_index[r]] = {cell.eval.misclassified.at(r), cell.eval.tested.at(r)};
    os << "spindle_speed,depth_of_cut,true_label,misclassified_fraction\n";
    for (std::size_t k = 0; k < grid.entries.size(); ++k) {
        const auto& e = grid.entries[k];
        os << fmt_double(e.point.spindle_speed) << ',' << fmt_double(e.point.depth_of_cut) << ','
           << label_name(e, cell.class_problem) << ',';
        auto it = tally.find(static_cast<int>(k));
        if (it != tally.end() && it->second.second > 0)
            os << fmt_double(static_cast<double>(it->second.first) / it->second.second);
        os << '\n';
    }
}

std::vector<fs::path> report(const fs::path& dir, const std::string& format) {
    if (format != "markdown" && format != "csv") throw std::invalid_argument("report format must be markdown or csv");
    const auto results = dir / "results.json";
    if (!fs::exists(results)) throw StageError("report", "no results at " + results.string());
    const ResultsTable t = ResultsTable::from_json(nlohmann::json::parse(read_text_file(results)));

    // Every factor combination present somewhere must be present everywhere.
    std::set<int> problems;
    std::set<std::pair<int, int>> cols;
    std::set<int> algos;
    for (const auto& c : t.cells) {
        problems.insert(c.class_problem);
        cols.insert({static_cast<int>(c.method), static_cast<int>(c.dims)});
        algos.insert(static_cast<int>(c.classifier));
    }
    std::vector<std::string> missing;
    for (int p : problems)
        for (const auto& v : t.variants)
            for (auto [m, d] : cols)
                for (int a : algos)
                    if (!t.find(p, v, static_cast<FeatureMethod>(m), static_cast<DimsSet>(d), static_cast<Algorithm>(a)))
                        missing.push_back(std::to_string(p) + "-class/" + v + "/" + to_string(static_cast<FeatureMethod>(m)) +
                                          "/" + to_string(static_cast<DimsSet>(d)) + "/" +
                                          to_string(static_cast<Algorithm>(a)));

    std::vector<fs::path> written;
    std::ostringstream os;
    if (format == "markdown") {
        render_markdown(t, os);
        if (!missing.empty()) {
            os << "\nMissing factor combinations:\n";
            for (const auto& m : missing) os << "- " << m << '\n';
        }
        written.push_back(dir / "table.md");
    } else {
        render_csv(t, os);
        written.push_back(dir / "table.csv");
    }
    write_text_file(written.back(), os.str());

    if (fs::exists(dir / "grid.csv")) {
        GridSpec spec;  // only entries are needed for the join
        std::ifstream in(dir / "grid.csv");
        const LabeledGrid grid = read_grid_csv(in, spec);
        for (const auto& c : t.cells) {
            std::string dims = to_string(c.dims);
            std::erase(dims, '+');
            const auto path = dir / "maps" /
                              (std::to_string(c.class_problem) + "class_" + c.variant + "_" + to_string(c.method) + "_" +
                               dims + "_" + to_string(c.classifier) + ".csv");
            std::ostringstream m;
            write_map_csv(grid, c, m);
            write_text_file(path, m.str());
            written.push_back(path);
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing factor combinations:";
        for (const auto& m : missing) msg += " " + m;
        throw StageError("report", msg);
    }
    return written;
}

}  // namespace chatter
