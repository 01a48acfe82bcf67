#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lift/domain.hpp"
#include "lift/encoder.hpp"
#include "lift/ingest.hpp"
#include "lift/predictor.hpp"
#include "lift/retriever.hpp"

namespace lift {

// Probability that a random positive outscores a random negative, ties
// counted half; computed by rank-sum. Both classes must be present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean binary cross-entropy with 1e-12 clamping.
double logloss(const std::vector<double>& scores, const std::vector<int>& labels);

struct ScoredCandidate {
    std::vector<FeatureValue> features;
    double score = 0.0;
};

// One top-N evaluation unit: a user's candidate list with exactly one
// held-out positive.
struct RankedCandidateSet {
    std::uint32_t user_id = 0;
    std::vector<ScoredCandidate> candidates;
    int positive_index = 0;
};

struct TopNReport {
    std::vector<int> cutoffs;
    std::vector<double> ndcg;  // per cutoff
    std::vector<double> hr;    // per cutoff
    double mrr = 0.0;
};

// Single-positive formulas: HR@N = 1 if rank <= N, NDCG@N = 1/log2(rank+1)
// if rank <= N else 0, MRR = 1/rank; score ties break on ascending item id.
TopNReport topn_metrics(const std::vector<RankedCandidateSet>& sets, const std::vector<int>& cutoffs);

struct LeakageReport {
    bool passed = true;
    std::size_t records_checked = 0;
    std::uint64_t violating_sample_id = 0;
    std::int64_t max_offending_timestamp = 0;
    std::string message = "ok";
};

// Verifies that every datastore record is anchored in the retrieval split
// and that its recomputed context windows never cross the retrieval
// boundary, which must itself precede the test split.
LeakageReport leakage_audit(const Datastore& datastore, const DatasetSplits& splits);

// Shared hyperparameters for the in-memory experiment runners.
struct RunConfig {
    SplitFractions fractions;
    int context_len = 8;
    int top_k = 8;
    EncoderConfig encoder;  // field_count is overwritten from the dataset
    PretrainOptions pretrain;
    PredictorConfig predictor;
    bool pretrain_encoder = true;
};

// Everything the predictor stages need, built once per seed and shared
// across ablation modes. Holds the storage the examples point into.
struct PipelineArtifacts {
    DatasetSplits splits;
    std::unique_ptr<Encoder> encoder;
    Datastore datastore;
    std::vector<PredictorExample> train_examples;
    std::vector<PredictorExample> test_examples;
    std::vector<double> pretrain_losses;
};

PipelineArtifacts prepare_pipeline(const Dataset& dataset, const RunConfig& config, std::uint64_t seed);

struct EvalMetrics {
    double auc = 0.0;
    double logloss = 0.0;
};

EvalMetrics evaluate_predictor(const Predictor& predictor, const std::vector<PredictorExample>& examples);

// Train one predictor on prepared artifacts and score it on the test split.
EvalMetrics train_and_evaluate(const PipelineArtifacts& artifacts, const RunConfig& config,
                               AblationMode mode, std::uint64_t seed);

struct AblationModeStats {
    AblationMode mode = AblationMode::full;
    std::vector<double> auc_per_seed;
    std::vector<double> logloss_per_seed;
    double auc_mean = 0.0;
    double auc_std = 0.0;
    double logloss_mean = 0.0;
    double logloss_std = 0.0;
    double wall_seconds = 0.0;
};

struct AblationReport {
    std::vector<std::uint64_t> seeds;
    std::vector<AblationModeStats> modes;  // FULL, HISTORY_ONLY, FUTURE_ONLY, NO_CONTEXT
    const AblationModeStats& stats(AblationMode mode) const;
};

// Trains all four ablation modes on identical splits and seeds and reports
// AUC/LogLoss mean and standard deviation per mode.
AblationReport run_ablation(const Dataset& dataset, const RunConfig& base, const std::vector<std::uint64_t>& seeds);

struct MaskRateRow {
    double rate = 0.0;
    double auc = 0.0;
    double logloss = 0.0;
    double final_pretrain_loss = 0.0;
};

// Pretrains one encoder per mask rate (same seed), rebuilds the datastore,
// trains a predictor, and reports downstream AUC per rate. Duplicate rates
// are dropped with a warning.
std::vector<MaskRateRow> mask_rate_sweep(const Dataset& dataset, const RunConfig& base,
                                         const std::vector<double>& rates, std::uint64_t seed);

struct TimingReport {
    int n_queries = 0;
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p95_ms = 0.0;
    double std_ms = 0.0;
    double retrieve_ms = 0.0;        // mean per query
    double encode_history_ms = 0.0;  // mean per query
    double forward_ms = 0.0;         // mean per query
};

// Wall-clock per-query latency over warmed-up runs, split into retrieval,
// history encoding, and predictor forward. Queries cycle through the given
// targets.
TimingReport inference_timing(const Encoder& encoder, const Datastore& datastore, const Predictor& predictor,
                              const std::vector<Interaction>& targets,
                              const std::vector<Interaction>& history_pool, int context_len, int n_queries);

// Build top-N candidate sets for every positive test interaction: the
// positive plus n_negatives items the user never interacted with, scored by
// the predictor. Negative item features come from the item's first observed
// feature tuple.
std::vector<RankedCandidateSet> build_topn_sets(const Dataset& dataset, const DatasetSplits& splits,
                                                const Predictor& predictor, const Encoder& encoder,
                                                const Datastore& datastore, int context_len, int top_k,
                                                int n_negatives, Rng& rng);

}  // namespace lift
