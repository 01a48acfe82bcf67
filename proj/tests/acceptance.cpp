// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances and data configuration in
// code; everything is seeded and deterministic.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lift/bytes.hpp"
#include "lift/eval.hpp"
#include "lift/pipeline.hpp"

using namespace lift;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool passed = true;
    std::string detail;

    void expect(bool condition, const std::string& what) {
        if (!condition) {
            passed = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

// ---- frozen experiment configurations -------------------------------------

// criterion 5: two-genre stream whose masked labels are predictable from the
// causal prefix, and its coin-flip twin
SynthConfig pretrain_planted_config() {
    SynthConfig s;
    s.n_users = 250;
    s.n_items = 120;
    s.n_genres = 2;
    s.interest_transition_prob = 0.02;
    s.session_length_mean = 120;
    s.click_prob_match = 0.80;
    s.click_prob_nomatch = 0.10;
    s.seed = 20240601;
    return s;
}

// criteria 6/7: six-genre stream with slow interest drift and bursty sessions
SynthConfig ablation_planted_config() {
    SynthConfig s;
    s.n_users = 200;
    s.n_items = 100;
    s.n_genres = 6;
    s.interest_transition_prob = 0.01;
    s.session_length_mean = 120;
    s.click_prob_match = 0.85;
    s.click_prob_nomatch = 0.08;
    s.seed = 77001;
    return s;
}

RunConfig ablation_run_config() {
    RunConfig rc;
    rc.fractions = {0.7, 0.1, 0.2};
    rc.context_len = 8;
    rc.top_k = 10;
    rc.encoder.embed_dim = 8;
    rc.encoder.d_model = 32;
    rc.encoder.n_layers = 2;
    rc.encoder.n_heads = 2;
    rc.encoder.max_seq_len = 16;
    rc.pretrain.mask_ratio = 0.6;
    rc.pretrain.epochs = 6;
    rc.pretrain.batch_size = 16;
    rc.pretrain.adam.lr = 2e-3;
    rc.predictor.mlp_hidden = {64, 32};
    rc.predictor.epochs = 3;
    rc.predictor.batch_size = 32;
    rc.predictor.adam.lr = 2e-3;
    return rc;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

// ---- small shared helpers --------------------------------------------------

Interaction make_sample(std::uint64_t id, const std::vector<std::uint32_t>& values, std::int64_t ts = 0) {
    Interaction it;
    it.interaction_id = id;
    it.timestamp = ts;
    for (std::size_t f = 0; f < values.size(); ++f)
        it.features.push_back(FeatureValue{std::uint16_t(f), values[f]});
    it.user_id = values.empty() ? 0 : values[0];
    it.item_id = values.size() > 1 ? values[1] : 0;
    return it;
}

double pairwise_auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / double(pairs);
}

// ---- criteria ---------------------------------------------------------------

Outcome formula_oracles() {
    Outcome out;
    Rng rng(101);

    // IDF against direct evaluation on 1e3 random (N, N(x)) pairs
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t total = 1 + rng.uniform_below(1000000);
        const std::uint64_t df = rng.uniform_below(total + 1);
        const double direct = std::log((double(total) - double(df) + 0.5) / (double(df) + 0.5));
        if (std::fabs(idf_from_counts(total, df) - direct) > 1e-12) {
            out.expect(false, "idf mismatch at N=" + std::to_string(total) + " df=" + std::to_string(df));
            break;
        }
    }

    // RankScore against a per-field hand sum on random toy indexes
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Interaction> samples;
        for (int i = 0; i < 50; ++i)
            samples.push_back(make_sample(std::uint64_t(i),
                                          {std::uint32_t(1 + rng.uniform_below(7)),
                                           std::uint32_t(1 + rng.uniform_below(9)),
                                           std::uint32_t(1 + rng.uniform_below(5))}));
        InvertedIndex index = build_inverted_index(samples);
        for (int q = 0; q < 5; ++q) {
            const auto query = make_sample(1000, {std::uint32_t(1 + rng.uniform_below(7)),
                                                  std::uint32_t(1 + rng.uniform_below(9)),
                                                  std::uint32_t(1 + rng.uniform_below(5))})
                                   .features;
            for (const auto& s : samples) {
                double by_hand = 0.0;
                for (std::size_t f = 0; f < query.size(); ++f)
                    if (query[f].value == s.features[f].value)
                        by_hand += idf_from_counts(index.total_samples(), index.doc_frequency(query[f]));
                if (std::fabs(rank_score(query, s.features, index) - by_hand) > 1e-12)
                    out.expect(false, "rank_score mismatch");
            }
        }
    }

    // rank-sum AUC equals the O(n^2) pairwise oracle exactly on 100 instances
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + int(rng.uniform_below(999));
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            scores.push_back(double(rng.uniform_below(15)) / 10.0);  // forces ties
            labels.push_back(int(rng.uniform_below(2)));
        }
        labels[0] = 1;
        labels[std::size_t(n - 1)] = 0;
        if (auc(scores, labels) != pairwise_auc_oracle(scores, labels)) {
            out.expect(false, "auc mismatch on instance " + std::to_string(trial));
            break;
        }
    }
    return out;
}

Outcome retrieval_equivalence() {
    Outcome out;
    Rng rng(202);

    Datastore store;
    store.output_dim = 2;
    store.field_count = 4;
    std::vector<Interaction> samples;
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::uint32_t> values;
        for (int f = 0; f < 4; ++f) values.push_back(std::uint32_t(1 + rng.uniform_below(30)));
        samples.push_back(make_sample(std::uint64_t(i), values, i));
        DatastoreRecord rec;
        rec.sample_id = std::uint64_t(i);
        rec.anchor_timestamp = i;
        rec.key = samples.back().features;
        rec.history_embedding = {0.0, 0.0};
        rec.future_embedding = {0.0, 0.0};
        store.records.push_back(std::move(rec));
    }
    for (const auto& rec : store.records) store.index.insert(rec.sample_id, rec.key);
    store.index.finalize();
    store.rebuild_lookup();

    for (int q = 0; q < 50; ++q) {
        std::vector<std::uint32_t> values;
        for (int f = 0; f < 4; ++f) values.push_back(std::uint32_t(1 + rng.uniform_below(30)));
        const auto query = make_sample(5000, values).features;

        // exhaustive oracle under the documented contract
        std::vector<std::pair<std::uint64_t, double>> expected;
        for (const auto& s : samples) {
            const double score = rank_score(query, s.features, store.index);
            if (score > 0.0) expected.emplace_back(s.interaction_id, score);
        }
        std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (expected.size() > 10) expected.resize(10);

        RetrievalResult got = retrieve_topk(query, store, 10);
        bool same = got.records.size() == expected.size();
        for (std::size_t i = 0; same && i < expected.size(); ++i)
            same = got.records[i]->sample_id == expected[i].first && got.scores[i] == expected[i].second;
        out.expect(same, "query " + std::to_string(q) + " differs from exhaustive scoring");
        if (!same) break;
    }
    return out;
}

Outcome gradient_correctness() {
    Outcome out;

    // (a) the mask-behavior pretrain loss through a 1-layer causal transformer
    {
        EncoderConfig cfg;
        cfg.field_count = 2;
        cfg.embed_dim = 3;
        cfg.d_model = 8;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.max_seq_len = 6;
        Encoder encoder(cfg, {5, 7}, 303);

        Rng rng(304);
        std::vector<Interaction> chunk;
        for (int t = 0; t < 5; ++t) {
            Interaction it;
            it.interaction_id = std::uint64_t(t);
            it.timestamp = t;
            it.features = {FeatureValue{0, std::uint32_t(1 + rng.uniform_below(4))},
                           FeatureValue{1, std::uint32_t(1 + rng.uniform_below(6))}};
            it.label = int(rng.uniform_below(2));
            chunk.push_back(it);
        }
        Rng mask_rng(305);
        MaskedSequence masked = mask_behaviors(chunk, 0.5, mask_rng);
        auto forward = [&] { return encoder.masked_behavior_loss({masked}); };
        GradCheckReport report = grad_check(forward, encoder.params(), 1e-4);
        out.expect(report.passed, "encoder grad check worst " + report.worst_param + " err " +
                                      std::to_string(report.worst_err));
    }

    // (b) the FULL-mode predictor at K=2, M=2, w=2, v=4
    {
        PredictorConfig cfg;
        cfg.mode = AblationMode::full;
        cfg.top_k = 2;
        cfg.mlp_hidden = {5};
        Predictor predictor(cfg, 2, 2, 4, {5, 5}, 306);

        Interaction t0 = make_sample(0, {1, 2});
        t0.label = 1;
        Interaction t1 = make_sample(1, {2, 3});
        t1.label = 0;
        DatastoreRecord r0, r1;
        r0.sample_id = 10;
        r0.key = make_sample(10, {1, 3}).features;
        r0.history_embedding = {0.4, -0.2, 0.1, 0.9};
        r0.future_embedding = {-0.3, 0.5, 0.2, -0.8};
        r1.sample_id = 11;
        r1.key = make_sample(11, {4, 2}).features;
        r1.history_embedding = {-0.6, 0.8, -0.1, 0.2};
        r1.future_embedding = {0.7, -0.4, 0.3, 0.1};

        std::vector<PredictorExample> examples(2);
        examples[0] = {&t0, {0.1, -0.1, 0.2, 0.3}, {&r0, &r1}};
        examples[1] = {&t1, {0.5, 0.4, -0.3, 0.0}, {}};  // null-context path included

        auto forward = [&] {
            return bce_loss(predictor.forward_batch({&examples[0], &examples[1]}), {1.0, 0.0});
        };
        GradCheckReport report = grad_check(forward, predictor.params(), 1e-4);
        out.expect(report.passed, "predictor grad check worst " + report.worst_param + " err " +
                                      std::to_string(report.worst_err));

        bool covered_attention = false, covered_embedding = false, covered_mlp = false;
        for (const auto& entry : report.entries) {
            covered_attention |= entry.name == "attn.bilinear";
            covered_embedding |= entry.name.rfind("embed.", 0) == 0;
            covered_mlp |= entry.name.rfind("mlp.", 0) == 0;
        }
        out.expect(covered_attention && covered_embedding && covered_mlp,
                   "grad check did not cover attention/embedding/mlp parameters");
    }
    return out;
}

Outcome causality_and_masking() {
    Outcome out;

    EncoderConfig cfg;
    cfg.field_count = 3;
    cfg.embed_dim = 4;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_seq_len = 12;
    Encoder encoder(cfg, {9, 9, 5}, 404);

    Rng rng(405);
    auto random_sequence = [&rng](int len) {
        std::vector<Interaction> seq;
        for (int t = 0; t < len; ++t) {
            Interaction it;
            it.interaction_id = std::uint64_t(t);
            it.timestamp = t;
            it.features = {FeatureValue{0, std::uint32_t(1 + rng.uniform_below(8))},
                           FeatureValue{1, std::uint32_t(1 + rng.uniform_below(8))},
                           FeatureValue{2, std::uint32_t(1 + rng.uniform_below(4))}};
            it.label = int(rng.uniform_below(2));
            seq.push_back(it);
        }
        return seq;
    };

    // suffix perturbation never touches states at positions < p
    for (int trial = 0; trial < 20 && out.passed; ++trial) {
        auto seq = random_sequence(8);
        std::vector<LabelToken> tokens;
        for (const auto& it : seq) tokens.push_back(label_token_of(it));
        Tensor base = encoder.hidden_states(seq, tokens);

        const int p = 1 + int(rng.uniform_below(7));
        auto perturbed = seq;
        perturbed[std::size_t(p)].features[0].value = 1 + (perturbed[std::size_t(p)].features[0].value % 8);
        perturbed[std::size_t(p)].label ^= 1;
        auto ptokens = tokens;
        ptokens[std::size_t(p)] = label_token_of(perturbed[std::size_t(p)]);
        Tensor changed = encoder.hidden_states(perturbed, ptokens);

        for (int t = 0; t < p && out.passed; ++t)
            for (int j = 0; j < cfg.d_model; ++j)
                if (base.values()[std::size_t(t * cfg.d_model + j)] !=
                    changed.values()[std::size_t(t * cfg.d_model + j)]) {
                    out.expect(false, "prefix state changed at position " + std::to_string(t));
                    break;
                }
    }

    // masking alters label tokens only
    for (int trial = 0; trial < 50 && out.passed; ++trial) {
        auto seq = random_sequence(2 + int(rng.uniform_below(9)));
        MaskedSequence masked = mask_behaviors(seq, 0.4, rng);
        for (std::size_t t = 0; t < seq.size(); ++t)
            if (masked.interactions[t].features != seq[t].features)
                out.expect(false, "mask_behaviors altered feature tokens");
        for (int p : masked.masked_positions)
            if (masked.label_tokens[std::size_t(p)] != LabelToken::masked)
                out.expect(false, "masked position lacks the mask token");
    }

    // empirical mask rate within +-0.01 of the requested ratio over 1e5 draws
    {
        auto seq = random_sequence(8);
        const double ratio = 0.6;
        Rng draws(406);
        std::size_t masked = 0, total = 0;
        for (int i = 0; i < 100000; ++i) {
            MaskedSequence m = mask_behaviors(seq, ratio, draws);
            masked += m.masked_positions.size();
            total += seq.size();
        }
        const double rate = double(masked) / double(total);
        out.expect(std::fabs(rate - ratio) <= 0.01,
                   "empirical mask rate " + std::to_string(rate) + " off by more than 0.01");
        char buf[64];
        std::snprintf(buf, sizeof buf, "mask rate %.4f vs %.1f", rate, ratio);
        out.note(buf);
    }
    return out;
}

Outcome pretraining_signal() {
    Outcome out;

    RunConfig rc;
    rc.context_len = 12;
    rc.encoder.embed_dim = 8;
    rc.encoder.d_model = 32;
    rc.encoder.n_layers = 2;
    rc.encoder.n_heads = 2;
    rc.encoder.max_seq_len = 16;
    rc.pretrain.mask_ratio = 0.6;
    rc.pretrain.epochs = 20;
    rc.pretrain.batch_size = 16;
    rc.pretrain.adam.lr = 2.5e-3;

    auto run = [&](const SynthConfig& synth) {
        Dataset ds = generate_synthetic(synth);
        DatasetSplits splits = temporal_split(ds.interactions, rc.fractions);
        PretrainCorpus corpus = build_pretrain_corpus(splits.retrieval, rc.context_len);
        EncoderConfig ec = rc.encoder;
        ec.field_count = ds.field_count();
        ec.mask_ratio = rc.pretrain.mask_ratio;
        Encoder encoder(ec, ds.vocab_sizes(), 1);
        PretrainOptions options = rc.pretrain;
        options.seed = 1;
        return pretrain(encoder, corpus, options);
    };

    {
        auto losses = run(pretrain_planted_config());
        double lowest = losses[0];
        for (double l : losses) lowest = std::min(lowest, l);
        char buf[64];
        std::snprintf(buf, sizeof buf, "planted min %.4f", lowest);
        out.note(buf);
        out.expect(lowest < 0.55, "planted pretrain loss never dropped below 0.55");
    }
    {
        SynthConfig coin = pretrain_planted_config();
        coin.click_prob_match = 0.5;
        coin.click_prob_nomatch = 0.5;
        auto losses = run(coin);
        double lowest = losses[0], highest = losses[0];
        for (double l : losses) {
            lowest = std::min(lowest, l);
            highest = std::max(highest, l);
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "coin-flip range [%.4f, %.4f]", lowest, highest);
        out.note(buf);
        out.expect(lowest >= 0.67 && highest <= 0.72,
                   "coin-flip pretrain loss left the [0.67, 0.72] band");
    }
    return out;
}

struct AblationOutcome {
    Outcome planted;
    Outcome null_control;
    Outcome downstream;  // criterion 7 shares the planted runs
};

AblationOutcome ablation_criteria() {
    AblationOutcome out;
    RunConfig rc = ablation_run_config();

    // planted-signal direction, five paired seeds
    Dataset planted = generate_synthetic(ablation_planted_config());
    AblationReport report = run_ablation(planted, rc, kSeeds);
    const double full = report.stats(AblationMode::full).auc_mean;
    const double hist = report.stats(AblationMode::history_only).auc_mean;
    const double fut = report.stats(AblationMode::future_only).auc_mean;
    const double none = report.stats(AblationMode::no_context).auc_mean;
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, "full %.4f hist %.4f fut %.4f none %.4f", full, hist, fut, none);
        out.planted.note(buf);
    }
    out.planted.expect(full > hist, "FULL did not beat HISTORY_ONLY");
    out.planted.expect(full > fut, "FULL did not beat FUTURE_ONLY");
    out.planted.expect(std::min(hist, fut) > none, "a single-context mode fell below NO_CONTEXT");
    out.planted.expect(full - none >= 0.02, "FULL-NO_CONTEXT gap under 0.02");

    // null-signal control: all four modes within 0.01 of each other
    SynthConfig null_cfg = ablation_planted_config();
    null_cfg.click_prob_match = 0.3;
    null_cfg.click_prob_nomatch = 0.3;
    Dataset null_ds = generate_synthetic(null_cfg);
    AblationReport null_report = run_ablation(null_ds, rc, kSeeds);
    double lo = 1.0, hi = 0.0;
    for (const auto& stats : null_report.modes) {
        lo = std::min(lo, stats.auc_mean);
        hi = std::max(hi, stats.auc_mean);
    }
    {
        char buf[96];
        std::snprintf(buf, sizeof buf, "null spread %.4f (lo %.4f hi %.4f)", hi - lo, lo, hi);
        out.null_control.note(buf);
    }
    out.null_control.expect(hi - lo <= 0.01, "null-signal modes spread beyond 0.01 AUC");

    // criterion 7: pretrained vs randomly initialized frozen encoder
    RunConfig random_rc = rc;
    random_rc.pretrain_encoder = false;
    double random_sum = 0.0;
    for (std::uint64_t seed : kSeeds) {
        PipelineArtifacts artifacts = prepare_pipeline(planted, random_rc, seed);
        random_sum += train_and_evaluate(artifacts, random_rc, AblationMode::full, seed).auc;
    }
    const double random_mean = random_sum / double(kSeeds.size());
    {
        char buf[96];
        std::snprintf(buf, sizeof buf, "pretrained %.4f vs random %.4f", full, random_mean);
        out.downstream.note(buf);
    }
    out.downstream.expect(full - random_mean >= 0.01,
                          "pretrained encoder advantage under 0.01 AUC");
    return out;
}

Outcome leakage_gate() {
    Outcome out;

    Dataset ds = generate_synthetic(ablation_planted_config());
    RunConfig rc = ablation_run_config();
    DatasetSplits splits = temporal_split(ds.interactions, rc.fractions);

    EncoderConfig ec = rc.encoder;
    ec.field_count = ds.field_count();
    Encoder encoder(ec, ds.vocab_sizes(), 808);

    Datastore clean = build_datastore(splits.retrieval, encoder, rc.context_len);
    LeakageReport clean_report = leakage_audit(clean, splits);
    out.expect(clean_report.passed, "clean datastore failed the audit: " + clean_report.message);

    Datastore poisoned = build_datastore(ds.interactions, encoder, rc.context_len);
    LeakageReport poisoned_report = leakage_audit(poisoned, splits);
    out.expect(!poisoned_report.passed, "full-dataset datastore passed the audit");
    if (!poisoned_report.passed) {
        bool in_retrieval = false;
        for (const auto& it : splits.retrieval)
            if (it.interaction_id == poisoned_report.violating_sample_id) in_retrieval = true;
        out.expect(!in_retrieval, "audit named a record that is inside the retrieval split");
        out.expect(poisoned_report.message.find(std::to_string(poisoned_report.violating_sample_id)) !=
                       std::string::npos,
                   "audit message does not name the violating record");
        out.note("violating record " + std::to_string(poisoned_report.violating_sample_id));
    }
    return out;
}

Outcome serialization_roundtrips() {
    Outcome out;
    Rng rng(909);

    // datastore
    Datastore store;
    store.output_dim = 3;
    store.field_count = 2;
    for (int i = 0; i < 200; ++i) {
        DatastoreRecord rec;
        rec.sample_id = std::uint64_t(i);
        rec.anchor_timestamp = i;
        rec.key = make_sample(std::uint64_t(i), {std::uint32_t(1 + rng.uniform_below(9)),
                                                 std::uint32_t(1 + rng.uniform_below(9))})
                      .features;
        for (int j = 0; j < 3; ++j) {
            rec.history_embedding.push_back(rng.uniform(-2, 2));
            rec.future_embedding.push_back(rng.uniform(-2, 2));
        }
        store.records.push_back(std::move(rec));
    }
    for (const auto& rec : store.records) store.index.insert(rec.sample_id, rec.key);
    store.index.finalize();
    store.rebuild_lookup();

    const auto bytes = serialize_datastore(store);
    out.expect(serialize_datastore(deserialize_datastore(bytes)) == bytes,
               "datastore round trip is not byte-exact");
    {
        auto cut = bytes;
        cut.resize(cut.size() - 5);
        try {
            deserialize_datastore(cut);
            out.expect(false, "truncated datastore was accepted");
        } catch (const CorruptDatastoreError&) {
        }
        auto flipped = bytes;
        flipped[flipped.size() / 3] ^= 0x10;
        try {
            deserialize_datastore(flipped);
            out.expect(false, "checksum-broken datastore was accepted");
        } catch (const CorruptDatastoreError&) {
        }
    }

    // parameter checkpoint
    ParamStore params;
    params.add("a.table", Tensor::uniform({7, 4}, -1, 1, rng));
    params.add("z.bias", Tensor::from({3}, {0.0, -0.0, 1e-300}));
    const auto ckpt = params.serialize();
    out.expect(ParamStore::deserialize(ckpt).serialize() == ckpt, "checkpoint round trip is not byte-exact");
    {
        auto bad = ckpt;
        bad[1] = 'Z';
        try {
            ParamStore::deserialize(bad);
            out.expect(false, "bad-magic checkpoint was accepted");
        } catch (const CheckpointError&) {
        }
        auto cut = ckpt;
        cut.resize(cut.size() - 3);
        try {
            ParamStore::deserialize(cut);
            out.expect(false, "truncated checkpoint was accepted");
        } catch (const CheckpointError&) {
        }
    }
    return out;
}

Outcome pipeline_determinism() {
    Outcome out;

    auto run_once = [](const fs::path& root) {
        PipelineConfig cfg;
        cfg.data = (root / "data.csv").string();
        cfg.workdir = (root / "work").string();
        cfg.seed = 424242;
        cfg.fractions = {0.6, 0.2, 0.2};
        cfg.context_len = 4;
        cfg.top_k = 3;
        cfg.encoder.embed_dim = 3;
        cfg.encoder.d_model = 6;
        cfg.encoder.n_layers = 1;
        cfg.encoder.n_heads = 1;
        cfg.encoder.max_seq_len = 6;
        cfg.pretrain.mask_ratio = 0.5;
        cfg.pretrain.epochs = 2;
        cfg.pretrain.batch_size = 16;
        cfg.pretrain.adam.lr = 2e-3;
        cfg.predictor.mlp_hidden = {8};
        cfg.predictor.epochs = 2;
        cfg.predictor.batch_size = 16;
        cfg.predictor.adam.lr = 2e-3;
        cfg.val_fraction = 0.2;
        cfg.synth.n_users = 40;
        cfg.synth.n_items = 20;
        cfg.synth.n_genres = 3;
        cfg.synth.session_length_mean = 20;
        cfg.synth.seed = 11;

        run_synth(cfg);
        run_split(cfg);
        run_pretrain(cfg);
        run_build_store(cfg);
        run_train(cfg);
        return run_eval(cfg);
    };

    const fs::path root_a = fs::temp_directory_path() / "lift_accept_det_a";
    const fs::path root_b = fs::temp_directory_path() / "lift_accept_det_b";
    fs::remove_all(root_a);
    fs::remove_all(root_b);
    fs::create_directories(root_a);
    fs::create_directories(root_b);

    StageResult eval_a = run_once(root_a);
    StageResult eval_b = run_once(root_b);
    out.expect(eval_a.report.dump() == eval_b.report.dump(), "eval reports differ between identical runs");

    std::size_t manifests = 0;
    for (const auto& entry : fs::directory_iterator(root_a / "work" / "manifests")) {
        const fs::path other = root_b / "work" / "manifests" / entry.path().filename();
        if (!fs::exists(other)) {
            out.expect(false, "manifest " + entry.path().filename().string() + " missing in the second run");
            continue;
        }
        if (fnv1a64(read_file_bytes(entry.path().string())) != fnv1a64(read_file_bytes(other.string())))
            out.expect(false, "manifest " + entry.path().filename().string() + " differs");
        ++manifests;
    }
    out.expect(manifests == 6, "expected 6 manifests, saw " + std::to_string(manifests));
    return out;
}

Outcome metric_formulas() {
    Outcome out;

    auto set_with_rank = [](int rank, int n_candidates) {
        RankedCandidateSet set;
        set.user_id = 1;
        for (int i = 0; i < n_candidates; ++i) {
            ScoredCandidate c;
            c.features = {FeatureValue{0, 1}, FeatureValue{1, std::uint32_t(i + 1)}};
            c.score = 1.0 - 0.05 * double(i);
            set.candidates.push_back(c);
        }
        set.positive_index = rank - 1;
        return set;
    };

    TopNReport r1 = topn_metrics({set_with_rank(1, 10)}, {5});
    out.expect(r1.hr[0] == 1.0 && r1.ndcg[0] == 1.0 && r1.mrr == 1.0, "rank-1 metrics wrong");

    TopNReport r2 = topn_metrics({set_with_rank(2, 10)}, {5});
    out.expect(std::fabs(r2.ndcg[0] - 1.0 / std::log2(3.0)) < 1e-9, "rank-2 NDCG@5 is not 1/log2(3)");
    out.expect(std::fabs(r2.ndcg[0] - 0.6309) < 1e-3, "rank-2 NDCG@5 far from 0.6309");
    out.expect(r2.mrr == 0.5, "rank-2 MRR wrong");

    TopNReport rN = topn_metrics({set_with_rank(5, 10)}, {5});
    out.expect(rN.hr[0] == 1.0 && std::fabs(rN.ndcg[0] - 1.0 / std::log2(6.0)) < 1e-9,
               "rank-N metrics wrong");

    TopNReport rN1 = topn_metrics({set_with_rank(6, 10)}, {5});
    out.expect(rN1.hr[0] == 0.0 && rN1.ndcg[0] == 0.0 && std::fabs(rN1.mrr - 1.0 / 6.0) < 1e-12,
               "rank-N+1 metrics wrong");

    std::vector<double> half(64, 0.5);
    std::vector<int> labels;
    for (int i = 0; i < 64; ++i) labels.push_back(i % 2);
    out.expect(std::fabs(logloss(half, labels) - std::log(2.0)) < 1e-9,
               "logloss of uniform 0.5 is not ln 2");
    return out;
}

}  // namespace

int main() {
    struct Row {
        int id;
        std::string name;
        double limit_s;  // 0 = unbounded
        std::function<Outcome()> run;
    };

    AblationOutcome ablation;  // filled by criterion 6, reused by 7
    bool ablation_ran = false;
    auto ensure_ablation = [&] {
        if (!ablation_ran) {
            ablation = ablation_criteria();
            ablation_ran = true;
        }
    };

    const std::vector<Row> rows = {
        {1, "formula oracles: idf, rank score, rank-sum auc", 30.0, formula_oracles},
        {2, "retrieval equivalence vs exhaustive scoring", 10.0, retrieval_equivalence},
        {3, "gradient correctness vs finite differences", 60.0, gradient_correctness},
        {4, "causality and masking contracts", 0.0, causality_and_masking},
        {5, "pretraining signal: planted learns, coin flips do not", 0.0, pretraining_signal},
        {6, "ablation direction on planted and null data", 600.0,
         [&] {
             ensure_ablation();
             Outcome merged = ablation.planted;
             merged.passed = ablation.planted.passed && ablation.null_control.passed;
             if (!ablation.null_control.detail.empty()) merged.note(ablation.null_control.detail);
             return merged;
         }},
        {7, "pretrained encoder beats a random frozen encoder", 0.0,
         [&] {
             ensure_ablation();
             return ablation.downstream;
         }},
        {8, "leakage audit gate with poisoned negative control", 0.0, leakage_gate},
        {9, "byte-exact serialization, corruption rejected", 0.0, serialization_roundtrips},
        {10, "pipeline determinism: identical reports and manifests", 0.0, pipeline_determinism},
        {11, "metric formulas at pinned ranks", 0.0, metric_formulas},
    };

    int failures = 0;
    double total_s = 0.0;
    std::printf("acceptance suite: %zu criteria\n", rows.size());
    for (const auto& row : rows) {
        const auto t0 = Clock::now();
        Outcome outcome;
        try {
            outcome = row.run();
        } catch (const std::exception& e) {
            outcome.passed = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        total_s += seconds;
        if (row.limit_s > 0.0 && seconds > row.limit_s) {
            outcome.passed = false;
            outcome.note("exceeded the " + std::to_string(int(row.limit_s)) + "s budget");
        }
        failures += outcome.passed ? 0 : 1;
        std::printf("[%2d/11] %s  %-52s (%5.1fs)%s%s\n", row.id, outcome.passed ? "PASS" : "FAIL",
                    row.name.c_str(), seconds, outcome.detail.empty() ? "" : "  -- ",
                    outcome.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/11 criteria passed in %.1fs\n", 11 - failures, total_s);
    return failures == 0 ? 0 : 1;
}
