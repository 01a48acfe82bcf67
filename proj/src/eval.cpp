#include "lift/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace lift {

namespace {

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

// Population standard deviation; a single seed reports 0.
double std_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / double(xs.size()));
}

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += std::size_t(y == 1);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("auc: needs both classes, got " + std::to_string(n_pos) +
                                   " positives of " + std::to_string(labels.size()));

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Rank-sum with average ranks over ties.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (double(i + 1) + double(j));  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j;
    }
    return (pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

double logloss(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("logloss: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    constexpr double kEps = 1e-12;
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = std::clamp(scores[i], kEps, 1.0 - kEps);
        total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / double(scores.size());
}

TopNReport topn_metrics(const std::vector<RankedCandidateSet>& sets, const std::vector<int>& cutoffs) {
    if (sets.empty()) throw UndefinedMetricError("topn_metrics: no candidate sets");

    TopNReport report;
    report.cutoffs = cutoffs;
    report.ndcg.assign(cutoffs.size(), 0.0);
    report.hr.assign(cutoffs.size(), 0.0);

    for (const auto& set : sets) {
        if (set.candidates.size() < 2)
            throw Error("topn_metrics: candidate set needs at least 2 entries");
        if (set.positive_index < 0 || set.positive_index >= int(set.candidates.size()))
            throw Error("topn_metrics: positive index out of range");

        std::vector<std::size_t> order(set.candidates.size());
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& ca = set.candidates[a];
            const auto& cb = set.candidates[b];
            if (ca.score != cb.score) return ca.score > cb.score;
            return ca.features[1].value < cb.features[1].value;  // item id tie-break
        });
        int rank = 0;
        for (std::size_t i = 0; i < order.size(); ++i)
            if (int(order[i]) == set.positive_index) {
                rank = int(i) + 1;
                break;
            }

        report.mrr += 1.0 / double(rank);
        for (std::size_t c = 0; c < cutoffs.size(); ++c) {
            if (rank <= cutoffs[c]) {
                report.hr[c] += 1.0;
                report.ndcg[c] += 1.0 / std::log2(double(rank) + 1.0);
            }
        }
    }

    const double n = double(sets.size());
    report.mrr /= n;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        report.hr[c] /= n;
        report.ndcg[c] /= n;
    }
    return report;
}

LeakageReport leakage_audit(const Datastore& datastore, const DatasetSplits& splits) {
    LeakageReport report;
    report.records_checked = datastore.records.size();

    auto fail = [&](std::uint64_t sample_id, std::int64_t ts, const std::string& why) {
        if (report.passed) {
            report.passed = false;
            report.violating_sample_id = sample_id;
            report.message = "record " + std::to_string(sample_id) + ": " + why;
        }
        report.max_offending_timestamp = std::max(report.max_offending_timestamp, ts);
    };

    // The retrieval boundary must strictly precede the test split under the
    // (timestamp, interaction_id) order.
    if (!splits.test.empty() && !splits.retrieval.empty()) {
        const auto& last_r = *std::max_element(splits.retrieval.begin(), splits.retrieval.end(), event_order);
        const auto& first_t = *std::min_element(splits.test.begin(), splits.test.end(), event_order);
        if (!event_order(last_r, first_t))
            fail(last_r.interaction_id, last_r.timestamp, "retrieval split does not precede test split");
    }

    auto sequences = build_user_sequences(splits.retrieval);
    std::unordered_map<std::uint64_t, std::pair<const InteractionSequence*, int>> anchor_of;
    anchor_of.reserve(splits.retrieval.size());
    for (const auto& [user, seq] : sequences) {
        (void)user;
        for (int i = 0; i < int(seq.interactions.size()); ++i)
            anchor_of.emplace(seq.interactions[std::size_t(i)].interaction_id, std::make_pair(&seq, i));
    }

    for (const auto& rec : datastore.records) {
        auto found = anchor_of.find(rec.sample_id);
        if (found == anchor_of.end()) {
            fail(rec.sample_id, rec.anchor_timestamp, "anchor is not part of the retrieval split");
            continue;
        }
        if (rec.anchor_timestamp > splits.boundary_retrieval_end) {
            fail(rec.sample_id, rec.anchor_timestamp, "anchor timestamp crosses the retrieval boundary");
            continue;
        }
        // Recompute the widest possible context window around the anchor and
        // scan every event in it.
        const auto& [seq, index] = found->second;
        Context ctx = extract_context(*seq, index, int(seq->interactions.size()));
        for (const auto& event : ctx.history)
            if (event.timestamp > splits.boundary_retrieval_end)
                fail(rec.sample_id, event.timestamp, "history event crosses the retrieval boundary");
        for (const auto& event : ctx.future)
            if (event.timestamp > splits.boundary_retrieval_end)
                fail(rec.sample_id, event.timestamp, "future event crosses the retrieval boundary");
    }
    return report;
}

PipelineArtifacts prepare_pipeline(const Dataset& dataset, const RunConfig& config, std::uint64_t seed) {
    PipelineArtifacts artifacts;
    artifacts.splits = temporal_split(dataset.interactions, config.fractions);

    EncoderConfig enc_cfg = config.encoder;
    enc_cfg.field_count = dataset.field_count();
    enc_cfg.mask_ratio = config.pretrain.mask_ratio;
    artifacts.encoder = std::make_unique<Encoder>(enc_cfg, dataset.vocab_sizes(), seed);

    if (config.pretrain_encoder) {
        PretrainCorpus corpus = build_pretrain_corpus(artifacts.splits.retrieval, config.context_len);
        PretrainOptions options = config.pretrain;
        options.seed = seed;
        artifacts.pretrain_losses = pretrain(*artifacts.encoder, corpus, options);
    }

    artifacts.datastore = build_datastore(artifacts.splits.retrieval, *artifacts.encoder, config.context_len);

    std::vector<Interaction> pool = artifacts.splits.retrieval;
    pool.insert(pool.end(), artifacts.splits.train.begin(), artifacts.splits.train.end());
    artifacts.train_examples = build_predictor_examples(artifacts.splits.train, pool, artifacts.datastore,
                                                        *artifacts.encoder, config.context_len, config.top_k);
    artifacts.test_examples = build_predictor_examples(artifacts.splits.test, pool, artifacts.datastore,
                                                       *artifacts.encoder, config.context_len, config.top_k);
    return artifacts;
}

EvalMetrics evaluate_predictor(const Predictor& predictor, const std::vector<PredictorExample>& examples) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(examples.size());
    labels.reserve(examples.size());
    for (const auto& ex : examples) {
        scores.push_back(predictor.predict(ex));
        labels.push_back(ex.target->label);
    }
    return {auc(scores, labels), logloss(scores, labels)};
}

EvalMetrics train_and_evaluate(const PipelineArtifacts& artifacts, const RunConfig& config,
                               AblationMode mode, std::uint64_t seed) {
    PredictorConfig pred_cfg = config.predictor;
    pred_cfg.mode = mode;
    pred_cfg.top_k = config.top_k;
    pred_cfg.seed = seed;

    const auto& enc_cfg = artifacts.encoder->config();
    Predictor predictor(pred_cfg, enc_cfg.field_count, enc_cfg.embed_dim, enc_cfg.output_dim(),
                        artifacts.encoder->vocab_sizes(), seed);
    train_predictor(predictor, artifacts.train_examples);
    return evaluate_predictor(predictor, artifacts.test_examples);
}

const AblationModeStats& AblationReport::stats(AblationMode mode) const {
    for (const auto& m : modes)
        if (m.mode == mode) return m;
    throw Error("ablation report: mode not present");
}

AblationReport run_ablation(const Dataset& dataset, const RunConfig& base,
                            const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw Error("run_ablation: need at least one seed");

    const AblationMode kModes[] = {AblationMode::full, AblationMode::history_only,
                                   AblationMode::future_only, AblationMode::no_context};
    AblationReport report;
    report.seeds = seeds;
    for (auto mode : kModes) {
        AblationModeStats stats;
        stats.mode = mode;
        report.modes.push_back(stats);
    }

    for (std::uint64_t seed : seeds) {
        PipelineArtifacts artifacts = prepare_pipeline(dataset, base, seed);
        for (auto& stats : report.modes) {
            const auto t0 = Clock::now();
            EvalMetrics metrics = train_and_evaluate(artifacts, base, stats.mode, seed);
            stats.wall_seconds += ms_between(t0, Clock::now()) / 1000.0;
            stats.auc_per_seed.push_back(metrics.auc);
            stats.logloss_per_seed.push_back(metrics.logloss);
        }
    }

    for (auto& stats : report.modes) {
        stats.auc_mean = mean_of(stats.auc_per_seed);
        stats.auc_std = std_of(stats.auc_per_seed);
        stats.logloss_mean = mean_of(stats.logloss_per_seed);
        stats.logloss_std = std_of(stats.logloss_per_seed);
    }
    return report;
}

std::vector<MaskRateRow> mask_rate_sweep(const Dataset& dataset, const RunConfig& base,
                                         const std::vector<double>& rates, std::uint64_t seed) {
    std::vector<double> unique_rates;
    for (double r : rates) {
        if (std::find(unique_rates.begin(), unique_rates.end(), r) != unique_rates.end()) {
            std::cerr << "mask_rate_sweep: duplicate rate " << r << " dropped\n";
            continue;
        }
        unique_rates.push_back(r);
    }

    std::vector<MaskRateRow> rows;
    for (double rate : unique_rates) {
        RunConfig config = base;
        config.pretrain.mask_ratio = rate;
        config.encoder.mask_ratio = rate;
        PipelineArtifacts artifacts = prepare_pipeline(dataset, config, seed);
        EvalMetrics metrics = train_and_evaluate(artifacts, config, config.predictor.mode, seed);
        MaskRateRow row;
        row.rate = rate;
        row.auc = metrics.auc;
        row.logloss = metrics.logloss;
        row.final_pretrain_loss = artifacts.pretrain_losses.empty() ? 0.0 : artifacts.pretrain_losses.back();
        rows.push_back(row);
    }
    return rows;
}

TimingReport inference_timing(const Encoder& encoder, const Datastore& datastore, const Predictor& predictor,
                              const std::vector<Interaction>& targets,
                              const std::vector<Interaction>& history_pool, int context_len, int n_queries) {
    if (n_queries < 10) throw TooFewQueriesError("inference_timing: need at least 10 queries, got " +
                                                 std::to_string(n_queries));
    if (targets.empty()) throw EmptyDatasetError("inference_timing: no target queries");

    auto sequences = build_user_sequences(history_pool);
    const bool skip_retrieval = predictor.config().mode == AblationMode::no_context;

    auto run_query = [&](const Interaction& target, TimingReport* acc, std::vector<double>* totals) {
        PredictorExample ex;
        ex.target = &target;

        const auto t0 = Clock::now();
        if (!skip_retrieval)
            ex.retrieved = retrieve_topk(target.features, datastore, predictor.config().top_k).records;
        const auto t1 = Clock::now();

        std::vector<Interaction> history;
        auto it = sequences.find(target.user_id);
        if (it != sequences.end()) {
            const auto& events = it->second.interactions;
            auto end = std::lower_bound(events.begin(), events.end(), target.timestamp,
                                        [](const Interaction& e, std::int64_t ts) { return e.timestamp < ts; });
            auto begin = end - std::min<std::ptrdiff_t>(end - events.begin(), context_len);
            history.assign(begin, end);
        }
        ex.history_embedding = encoder.encode_values(history);
        const auto t2 = Clock::now();

        (void)predictor.predict(ex);
        const auto t3 = Clock::now();

        if (acc) {
            if (!skip_retrieval) acc->retrieve_ms += ms_between(t0, t1);
            acc->encode_history_ms += ms_between(t1, t2);
            acc->forward_ms += ms_between(t2, t3);
            totals->push_back(skip_retrieval ? ms_between(t1, t3) : ms_between(t0, t3));
        }
    };

    const int warmup = 10;
    for (int i = 0; i < warmup; ++i) run_query(targets[std::size_t(i) % targets.size()], nullptr, nullptr);

    TimingReport report;
    report.n_queries = n_queries;
    std::vector<double> totals;
    totals.reserve(std::size_t(n_queries));
    for (int i = 0; i < n_queries; ++i) run_query(targets[std::size_t(i) % targets.size()], &report, &totals);

    report.retrieve_ms /= double(n_queries);
    report.encode_history_ms /= double(n_queries);
    report.forward_ms /= double(n_queries);
    report.mean_ms = mean_of(totals);
    report.std_ms = std_of(totals);
    std::sort(totals.begin(), totals.end());
    report.median_ms = totals[totals.size() / 2];
    report.p95_ms = totals[std::min(totals.size() - 1, std::size_t(std::ceil(0.95 * double(totals.size()))) - 1)];
    return report;
}

std::vector<RankedCandidateSet> build_topn_sets(const Dataset& dataset, const DatasetSplits& splits,
                                                const Predictor& predictor, const Encoder& encoder,
                                                const Datastore& datastore, int context_len, int top_k,
                                                int n_negatives, Rng& rng) {
    // Item feature templates: first observed feature tuple per item id.
    std::unordered_map<std::uint32_t, const std::vector<FeatureValue>*> item_profile;
    for (const auto& it : dataset.interactions) item_profile.emplace(it.item_id, &it.features);

    std::unordered_map<std::uint32_t, std::unordered_set<std::uint32_t>> interacted;
    for (const auto& it : dataset.interactions) interacted[it.user_id].insert(it.item_id);

    std::vector<Interaction> pool = splits.retrieval;
    pool.insert(pool.end(), splits.train.begin(), splits.train.end());
    auto sequences = build_user_sequences(pool);

    std::vector<std::uint32_t> all_items;
    for (const auto& [item, profile] : item_profile) all_items.push_back(item);
    std::sort(all_items.begin(), all_items.end());

    std::vector<RankedCandidateSet> sets;
    for (const auto& target : splits.test) {
        if (target.label != 1) continue;

        std::vector<std::uint32_t> eligible;
        eligible.reserve(all_items.size());
        const auto& seen = interacted[target.user_id];
        for (std::uint32_t item : all_items)
            if (!seen.count(item)) eligible.push_back(item);
        if (eligible.empty()) continue;

        // Partial Fisher-Yates draw of distinct negatives.
        const int n_draw = std::min<int>(n_negatives, int(eligible.size()));
        for (int i = 0; i < n_draw; ++i) {
            const auto j = std::size_t(i) + rng.uniform_below(eligible.size() - std::size_t(i));
            std::swap(eligible[std::size_t(i)], eligible[j]);
        }

        std::vector<Interaction> history;
        auto it = sequences.find(target.user_id);
        if (it != sequences.end()) {
            const auto& events = it->second.interactions;
            auto end = std::lower_bound(events.begin(), events.end(), target.timestamp,
                                        [](const Interaction& e, std::int64_t ts) { return e.timestamp < ts; });
            auto begin = end - std::min<std::ptrdiff_t>(end - events.begin(), context_len);
            history.assign(begin, end);
        }
        const std::vector<double> history_embedding = encoder.encode_values(history);

        auto score_features = [&](const std::vector<FeatureValue>& features) {
            PredictorExample ex;
            Interaction probe = target;
            probe.features = features;
            ex.target = &probe;
            ex.history_embedding = history_embedding;
            if (predictor.config().mode != AblationMode::no_context)
                ex.retrieved = retrieve_topk(features, datastore, top_k).records;
            return predictor.predict(ex);
        };

        RankedCandidateSet set;
        set.user_id = target.user_id;
        set.positive_index = 0;
        set.candidates.push_back({target.features, score_features(target.features)});
        for (int i = 0; i < n_draw; ++i) {
            const std::uint32_t item = eligible[std::size_t(i)];
            std::vector<FeatureValue> features = *item_profile.at(item);
            features[0] = target.features[0];  // keep the query user
            set.candidates.push_back({features, score_features(features)});
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

}  // namespace lift
