#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lift/eval.hpp"

namespace lift {

// Whole-pipeline configuration, loaded from a single JSON file. Paths are
// excluded from hashing so runs are relocatable; everything else is part of
// the semantic configuration.
struct PipelineConfig {
    std::string data;
    std::string workdir;
    std::uint64_t seed = 1;

    SplitFractions fractions;
    int context_len = 8;
    int top_k = 8;

    EncoderConfig encoder;      // field_count is derived from the data
    PretrainOptions pretrain;
    PredictorConfig predictor;
    double val_fraction = 0.1;  // temporal tail of the train split

    SynthConfig synth;

    std::vector<int> topn_cutoffs = {1, 5, 10};
    int topn_negatives = 100;
    bool run_topn = false;

    std::vector<std::uint64_t> ablation_seeds = {1, 2, 3, 4, 5};
    std::vector<double> sweep_mask_rates = {0.25, 0.5, 0.75};
    std::vector<int> sweep_top_k = {1, 5, 10, 15};
    std::vector<int> sweep_context_len = {4, 8, 16};
    int timing_queries = 200;

    // Canonical semantic form (no paths); the basis of the config hash.
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);

    std::string config_hash() const;
    RunConfig run_config() const;
};

PipelineConfig load_config(const std::string& path);

// Applies a dotted-path override ("predictor.epochs=5") onto raw config JSON.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Workdir layout: manifests/, checkpoints/, stores/, reports/ under one
// root, guarded by a lock file for the lifetime of a command.
class Workdir {
public:
    explicit Workdir(const std::string& root);
    ~Workdir();
    Workdir(const Workdir&) = delete;
    Workdir& operator=(const Workdir&) = delete;

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path manifests() const { return root_ / "manifests"; }
    std::filesystem::path checkpoints() const { return root_ / "checkpoints"; }
    std::filesystem::path stores() const { return root_ / "stores"; }
    std::filesystem::path reports() const { return root_ / "reports"; }

private:
    std::filesystem::path root_;
    std::filesystem::path lock_path_;
};

// Stage outcome: the manifest that was written plus, for report-producing
// stages, the machine-readable report.
struct StageResult {
    std::string stage;
    std::string stage_key;
    std::filesystem::path manifest_path;
    nlohmann::json manifest;
    nlohmann::json report;  // empty for artifact-only stages
};

StageResult run_synth(const PipelineConfig& config);
StageResult run_split(const PipelineConfig& config);
StageResult run_pretrain(const PipelineConfig& config);
StageResult run_build_store(const PipelineConfig& config);
StageResult run_train(const PipelineConfig& config);
StageResult run_eval(const PipelineConfig& config);
StageResult run_ablate(const PipelineConfig& config);
StageResult run_sweep_mask(const PipelineConfig& config);
StageResult run_sweep_kl(const PipelineConfig& config);
StageResult run_audit(const PipelineConfig& config);  // report.passed tells the CLI to exit 4
StageResult run_time(const PipelineConfig& config);

struct KLSweepRow {
    int top_k = 0;
    int context_len = 0;
    double auc = 0.0;
    double logloss = 0.0;
};

// Retrieval-count / context-length grid. Pretrains once per context length
// and reuses the widest retrieval for every smaller top-k.
std::vector<KLSweepRow> kl_sweep(const Dataset& dataset, const RunConfig& base, const std::vector<int>& ks,
                                 const std::vector<int>& ls, std::uint64_t seed);

}  // namespace lift
