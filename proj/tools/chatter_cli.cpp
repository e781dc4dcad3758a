#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "chatter/parallel.hpp"
#include "chatter/pipeline.hpp"
#include "chatter/types.hpp"

using namespace chatter;

int main(int argc, char** argv) {
    CLI::App app{"Milling chatter detection from topological features"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", format = "markdown";
    std::optional<std::uint64_t> seed;
    int jobs = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "override the master seed");
        sub->add_option("--jobs", jobs, "worker threads (0: OpenMP default)");
    };
    std::vector<std::pair<std::string, CLI::App*>> stages;
    for (const char* name : {"simulate", "label", "prep", "persist", "featurize", "evaluate", "run"}) {
        auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage (and its prerequisites)");
        add_common(sub);
        stages.emplace_back(name, sub);
    }
    auto* rep = app.add_subcommand("report", "render results.json as a table plus maps");
    rep->add_option("--out", out_dir, "directory holding results.json");
    rep->add_option("--format", format, "markdown or csv")->check(CLI::IsMember({"markdown", "csv"}));

    CLI11_PARSE(app, argc, argv);

    std::string current = "cli";
    try {
        if (rep->parsed()) {
            current = "report";
            for (const auto& p : report(out_dir, format)) std::cout << p.string() << '\n';
            return 0;
        }
        current = "config";
        ExperimentConfig cfg = ExperimentConfig::load(config_path);
        if (seed) cfg.seed = *seed;
        set_thread_count(jobs);
        Pipeline pl(cfg, out_dir);
        for (const auto& [name, sub] : stages) {
            if (!sub->parsed()) continue;
            current = name;
            const auto vs = variants(cfg);
            if (name == "simulate") {
                pl.simulate();
            } else if (name == "label") {
                pl.label();
            } else if (name == "run") {
                const auto t = pl.run();
                std::cout << "wrote " << t.cells.size() << " result cells to " << out_dir << "/results.json\n";
            } else {
                for (const auto& v : vs) {
                    if (name == "prep") pl.prep(v);
                    else if (name == "persist") pl.persist(v);
                    else if (name == "featurize") pl.featurize(v);
                    else pl.evaluate(v);
                }
            }
            for (const auto& r : pl.log())
                std::cerr << r.stage << (r.variant.empty() ? "" : ":" + r.variant) << ' ' << r.key << ' '
                          << (r.cache_hit ? "hit" : "computed") << '\n';
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: [" << current << "] " << e.what() << '\n';
        return 2;
    }
    return 0;
}
