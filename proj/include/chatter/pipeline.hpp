#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chatter/classify.hpp"
#include "chatter/config.hpp"
#include "chatter/persistence.hpp"
#include "chatter/signal_prep.hpp"
#include "chatter/stability.hpp"

namespace chatter {

/// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seed: s0 = mix(master), s_{k+1} = mix(s_k ^ (c_k + golden)). Any single
/// series or split can be regenerated from (master, stage tag, counters) alone.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> counters);

namespace seed_tag {
inline constexpr std::uint64_t noise = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t model = 3;
}  // namespace seed_tag

/// 64-bit FNV-1a as 16 hex digits.
std::string content_hash(const std::string& text);

/// One dataset variant: noiseless or a given SNR.
struct Variant {
    std::optional<double> snr_db;
    std::string name() const;  // "noiseless", "snr25", "snr22.5"
};

std::vector<Variant> variants(const ExperimentConfig& cfg);

/// Cells of the homology-dimension axis of the results table.
enum class DimsSet { h0, h1, h2, h1_h2 };
std::string to_string(DimsSet d);
std::vector<int> dims_of(DimsSet d);
std::vector<DimsSet> dims_columns(const ExperimentConfig& cfg);

struct SeriesRecord {
    int grid_index = 0;
    TimeSeries series;         // as stored: retained window, or the full record when noise precedes truncation
    std::size_t retained_begin = 0;  // first retained sample within `series`
    std::string error;
    bool ok() const { return error.empty(); }
};

struct CloudRecord {
    int grid_index = 0;
    std::string series_id;
    EmbeddingParams embedding;
    std::size_t embedded_points = 0;  // before farthest-point subsampling
    PointCloud cloud;
    std::string error;
    bool ok() const { return error.empty(); }
};

struct DiagramRecord {
    int grid_index = 0;
    std::string series_id;
    std::vector<PersistenceDiagram> diagrams;  // dimensions 0..max_dim
    std::string error;
    bool ok() const { return error.empty(); }
};

struct SweepEntry {
    std::string setting;  // CC mask name or TF mesh "AxB"
    double mean = 0.0;
    double std = 0.0;
};

struct ResultCell {
    int class_problem = 2;
    std::string mode;
    std::string variant;
    FeatureMethod method = FeatureMethod::carlsson;
    DimsSet dims = DimsSet::h1;
    Algorithm classifier = Algorithm::svm;
    double mean = 0.0;
    double std = 0.0;
    std::string best_setting;
    std::vector<SweepEntry> sweep;
    EvalResult eval;  // of the best setting
    bool best_in_column = false;   // best classifier for (problem, variant, method, dims)
    bool best_in_dataset = false;  // best cell for (problem, variant)
};

struct ExclusionCounts {
    int undetermined = 0;
    int label_failed = 0;
    int simulation_failed = 0;
    int embedding_failed = 0;
    int persistence_failed = 0;
    int retained = 0;
};

struct ResultsTable {
    std::string name;
    std::string mode;
    std::vector<std::string> variants;
    std::vector<ResultCell> cells;
    std::vector<std::pair<std::string, ExclusionCounts>> exclusions;  // per variant
    std::size_t cloud_cap = 0;
    int max_dim = 2;

    nlohmann::ordered_json to_json() const;
    static ResultsTable from_json(const nlohmann::json& j);
    /// Recomputes both best-cell markers from the means.
    void mark_best();
    const ResultCell* find(int problem, const std::string& variant, FeatureMethod m, DimsSet d, Algorithm a) const;
    /// Best mean over all cells of (problem, variant), optionally restricted to one method / dims set.
    double best_mean(int problem, const std::string& variant, std::optional<FeatureMethod> m = {},
                     std::optional<DimsSet> d = {}) const;
};

struct CcSweepResult {
    SubsetMask best_mask = 0x1f;
    std::size_t best_position = 0;  // index into the enumerated masks
    std::vector<SubsetMask> masks;
    std::vector<EvalResult> results;  // aligned with masks
};

/// Evaluates every feature subset; for multi-dimension blocks the same mask applies to each.
/// Ties: fewer selected features first, then lower enumeration position.
CcSweepResult cc_subset_sweep(const std::vector<std::vector<CarlssonFeatures>>& per_dim, std::span<const int> labels,
                              std::span<const int> grid_index, int n_classes, Algorithm algo,
                              const Hyperparameters& hp, const EvalProtocol& protocol);

struct StageRecord {
    std::string stage;
    std::string variant;
    std::string key;
    bool cache_hit = false;
};

class Pipeline {
public:
    Pipeline(ExperimentConfig cfg, std::filesystem::path out_dir);

    const ExperimentConfig& config() const { return cfg_; }
    const std::filesystem::path& out_dir() const { return out_; }

    std::vector<SeriesRecord> simulate();
    LabeledGrid label();
    std::vector<CloudRecord> prep(const Variant& v);
    std::vector<DiagramRecord> persist(const Variant& v);
    /// Carlsson features of every diagram plus template features on a mesh fitted to all
    /// diagrams (evaluation refits meshes on each training split).
    std::filesystem::path featurize(const Variant& v);
    std::vector<ResultCell> evaluate(const Variant& v, ExclusionCounts* counts = nullptr);

    /// Full run; writes results.json, table.md, table.csv, maps/ and manifest.json.
    ResultsTable run();

    /// Cache key of a stage; equal keys mean equal stage outputs.
    std::string stage_key(const std::string& stage, const Variant& v = {}) const;
    std::filesystem::path stage_dir(const std::string& stage, const Variant& v = {}) const;
    const std::vector<StageRecord>& log() const { return log_; }

private:
    nlohmann::ordered_json stage_inputs(const std::string& stage, const Variant& v) const;
    bool cached(const std::string& stage, const Variant& v);
    void commit(const std::string& stage, const Variant& v);

    ExperimentConfig cfg_;
    std::filesystem::path out_;
    std::vector<StageRecord> log_;
    std::optional<std::vector<SeriesRecord>> series_memo_;
};

void render_markdown(const ResultsTable& t, std::ostream& os);
void render_csv(const ResultsTable& t, std::ostream& os);
/// Joins the labeled grid with misclassified fractions of one result cell:
/// spindle_speed, depth_of_cut, true_label, misclassified_fraction.
void write_map_csv(const LabeledGrid& grid, const ResultCell& cell, std::ostream& os);

/// Renders results.json found in `results_dir` into table.md / table.csv; returns the paths written.
std::vector<std::filesystem::path> report(const std::filesystem::path& results_dir, const std::string& format);

}  // namespace chatter
