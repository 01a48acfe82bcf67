#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lift/encoder.hpp"

using namespace lift;

namespace {

Interaction make(std::uint64_t id, std::uint32_t user, std::uint32_t item, std::uint32_t genre, int label,
                 std::int64_t ts) {
    Interaction it;
    it.interaction_id = id;
    it.user_id = user;
    it.item_id = item;
    it.timestamp = ts;
    it.features = {FeatureValue{0, user}, FeatureValue{1, item}, FeatureValue{2, genre}};
    it.label = label;
    return it;
}

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.field_count = 3;
    cfg.embed_dim = 4;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_seq_len = 12;
    cfg.mask_ratio = 0.5;
    return cfg;
}

const std::vector<int> kVocabs = {6, 6, 4};

std::vector<Interaction> random_sequence(Rng& rng, int len) {
    std::vector<Interaction> seq;
    for (int t = 0; t < len; ++t)
        seq.push_back(make(std::uint64_t(t), std::uint32_t(1 + rng.uniform_below(5)),
                           std::uint32_t(1 + rng.uniform_below(5)), std::uint32_t(1 + rng.uniform_below(3)),
                           int(rng.uniform_below(2)), t));
    return seq;
}

}  // namespace

TEST_CASE("token embedding has width (M+1)*w") {
    EncoderConfig cfg = small_config();
    CHECK(cfg.token_width() == 16);  // (3+1)*4

    Encoder enc(cfg, kVocabs, 1);
    auto seq = std::vector<Interaction>{make(0, 1, 2, 1, 1, 0)};
    Tensor tokens = enc.embed_tokens(seq, {LabelToken::positive});
    CHECK(tokens.shape() == std::vector<int>{1, 16});
    CHECK(enc.embed_interaction(seq[0], LabelToken::positive).shape() == std::vector<int>{1, 8});
}

TEST_CASE("pad interactions embed to one canonical vector") {
    Encoder enc(small_config(), kVocabs, 2);
    Interaction pad = make(0, 0, 0, 0, 0, 0);
    std::vector<Interaction> seq = {pad, pad};
    Tensor tokens = enc.embed_tokens(seq, {LabelToken::padding, LabelToken::padding});
    for (int j = 0; j < tokens.cols(); ++j)
        CHECK(tokens.values()[std::size_t(j)] == tokens.values()[std::size_t(tokens.cols() + j)]);
}

TEST_CASE("labels differ only through the label embedding block") {
    Encoder enc(small_config(), kVocabs, 3);
    Interaction a = make(0, 1, 2, 1, 0, 0);
    Interaction b = a;
    b.label = 1;

    Tensor ta = enc.embed_tokens({a}, {label_token_of(a)});
    Tensor tb = enc.embed_tokens({b}, {label_token_of(b)});
    const int feature_width = 3 * 4;
    for (int j = 0; j < feature_width; ++j)
        CHECK(ta.values()[std::size_t(j)] == tb.values()[std::size_t(j)]);
    bool any_diff = false;
    for (int j = feature_width; j < ta.cols(); ++j)
        any_diff = any_diff || ta.values()[std::size_t(j)] != tb.values()[std::size_t(j)];
    CHECK(any_diff);
}

TEST_CASE("out-of-vocabulary feature ids are rejected") {
    Encoder enc(small_config(), kVocabs, 4);
    Interaction bad = make(0, 1, 2, 1, 0, 0);
    bad.features[1].value = 99;
    CHECK_THROWS_AS(enc.encode({bad}), VocabError);
}

TEST_CASE("at length one the causal and bidirectional variants coincide") {
    Encoder causal(small_config(), kVocabs, 5);

    EncoderConfig bi_cfg = small_config();
    bi_cfg.variant = EncoderVariant::bidirectional_transformer;
    // share the exact same parameters through a checkpoint round trip
    Encoder bidirectional(bi_cfg, kVocabs, ParamStore::deserialize(causal.params().serialize()));

    std::vector<Interaction> seq = {make(0, 2, 3, 1, 1, 0)};
    CHECK(causal.encode(seq).embedding.values() == bidirectional.encode(seq).embedding.values());
}

TEST_CASE("causality: appending a future token never changes earlier states") {
    Encoder enc(small_config(), kVocabs, 6);
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto seq = random_sequence(rng, 6);
        std::vector<LabelToken> tokens;
        for (const auto& it : seq) tokens.push_back(label_token_of(it));

        Tensor before = enc.hidden_states(seq, tokens);
        auto longer = seq;
        longer.push_back(make(99, 1, 1, 1, 1, 99));
        auto longer_tokens = tokens;
        longer_tokens.push_back(LabelToken::positive);
        Tensor after = enc.hidden_states(longer, longer_tokens);

        for (int t = 0; t < 6; ++t)
            for (int j = 0; j < 8; ++j)
                CHECK(before.values()[std::size_t(t * 8 + j)] == after.values()[std::size_t(t * 8 + j)]);
    }
}

TEST_CASE("suffix perturbation leaves prefix states bit-identical") {
    Encoder enc(small_config(), kVocabs, 7);
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        auto seq = random_sequence(rng, 8);
        std::vector<LabelToken> tokens;
        for (const auto& it : seq) tokens.push_back(label_token_of(it));
        Tensor base = enc.hidden_states(seq, tokens);

        const int p = 2 + int(rng.uniform_below(5));  // perturb a position past the prefix
        auto perturbed = seq;
        perturbed[std::size_t(p)].features[1].value = 1 + (perturbed[std::size_t(p)].features[1].value % 5);
        perturbed[std::size_t(p)].label ^= 1;
        auto perturbed_tokens = tokens;
        perturbed_tokens[std::size_t(p)] = label_token_of(perturbed[std::size_t(p)]);
        Tensor changed = enc.hidden_states(perturbed, perturbed_tokens);

        for (int t = 0; t < p; ++t)
            for (int j = 0; j < 8; ++j)
                CHECK(base.values()[std::size_t(t * 8 + j)] == changed.values()[std::size_t(t * 8 + j)]);
    }
}

TEST_CASE("the recurrent variant is causal too") {
    EncoderConfig cfg = small_config();
    cfg.variant = EncoderVariant::recurrent;
    Encoder enc(cfg, kVocabs, 8);
    Rng rng(29);
    auto seq = random_sequence(rng, 5);
    std::vector<LabelToken> tokens;
    for (const auto& it : seq) tokens.push_back(label_token_of(it));

    Tensor before = enc.hidden_states(seq, tokens);
    auto longer = seq;
    longer.push_back(make(50, 2, 2, 2, 0, 50));
    auto longer_tokens = tokens;
    longer_tokens.push_back(LabelToken::negative);
    Tensor after = enc.hidden_states(longer, longer_tokens);
    for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 8; ++j)
            CHECK(before.values()[std::size_t(t * 8 + j)] == after.values()[std::size_t(t * 8 + j)]);
    CHECK(enc.encode(seq).embedding.shape() == std::vector<int>{1, 8});
}

TEST_CASE("encoding is deterministic and always v-dimensional") {
    Encoder enc(small_config(), kVocabs, 9);
    Rng rng(31);
    for (int len = 1; len <= 6; ++len) {
        auto seq = random_sequence(rng, len);
        EncodeResult a = enc.encode(seq);
        EncodeResult b = enc.encode(seq);
        CHECK(a.embedding.shape() == std::vector<int>{1, 8});
        CHECK(a.embedding.values() == b.embedding.values());
        CHECK_FALSE(a.empty_input);
    }
}

TEST_CASE("empty input returns the learned null-sequence embedding, flagged") {
    Encoder enc(small_config(), kVocabs, 10);
    EncodeResult result = enc.encode({});
    CHECK(result.empty_input);
    CHECK(result.embedding.values() == enc.params().get("null_sequence").values());
}

TEST_CASE("sequences longer than max_seq_len are rejected") {
    EncoderConfig cfg = small_config();
    cfg.max_seq_len = 4;
    Encoder enc(cfg, kVocabs, 11);
    Rng rng(37);
    CHECK_THROWS_AS(enc.encode(random_sequence(rng, 5)), ShapeError);
}

TEST_CASE("mask_behaviors fallback and saturation") {
    Rng rng(41);
    auto seq = random_sequence(rng, 8);

    SUBCASE("vanishing ratio forcibly masks the last position") {
        Rng r(1);
        MaskedSequence masked = mask_behaviors(seq, 1e-12, r);
        REQUIRE(masked.masked_positions.size() == 1);
        CHECK(masked.masked_positions[0] == 7);
        CHECK(masked.label_tokens[7] == LabelToken::masked);
    }
    SUBCASE("ratio approaching one masks everything") {
        Rng r(2);
        MaskedSequence masked = mask_behaviors(seq, 1.0 - 1e-12, r);
        CHECK(masked.masked_positions.size() == seq.size());
    }
    SUBCASE("too-short input") {
        Rng r(3);
        std::vector<Interaction> one = {seq[0]};
        CHECK_THROWS_AS(mask_behaviors(one, 0.5, r), TooShortError);
    }
    SUBCASE("masking never alters feature tokens") {
        Rng r(4);
        MaskedSequence masked = mask_behaviors(seq, 0.5, r);
        REQUIRE(masked.interactions.size() == seq.size());
        for (std::size_t t = 0; t < seq.size(); ++t) CHECK(masked.interactions[t].features == seq[t].features);
    }
    SUBCASE("same seed, same mask") {
        Rng r1(5), r2(5);
        MaskedSequence a = mask_behaviors(seq, 0.5, r1);
        MaskedSequence b = mask_behaviors(seq, 0.5, r2);
        CHECK(a.masked_positions == b.masked_positions);
        CHECK(a.true_labels == b.true_labels);
    }
}

TEST_CASE("empirical mask rate tracks the requested ratio") {
    Rng rng(43);
    auto seq = random_sequence(rng, 8);
    const double ratio = 0.5;
    Rng draws(44);
    std::size_t masked = 0, total = 0;
    for (int i = 0; i < 100000; ++i) {
        MaskedSequence m = mask_behaviors(seq, ratio, draws);
        masked += m.masked_positions.size();
        total += seq.size();
    }
    const double rate = double(masked) / double(total);
    CHECK(std::fabs(rate - ratio) < 0.01);
}

TEST_CASE("a zeroed head yields the indifferent initial loss ln 2") {
    Encoder enc(small_config(), kVocabs, 12);
    std::fill(enc.params().get("head.w2").raw_values().begin(),
              enc.params().get("head.w2").raw_values().end(), 0.0);
    std::fill(enc.params().get("head.b2").raw_values().begin(),
              enc.params().get("head.b2").raw_values().end(), 0.0);

    PretrainCorpus corpus;
    Rng rng(47);
    for (int c = 0; c < 20; ++c) {
        InteractionSequence chunk;
        chunk.user_id = 1;
        chunk.interactions = random_sequence(rng, 6);
        corpus.chunks.push_back(chunk);
    }

    PretrainOptions options;
    options.mask_ratio = 0.5;
    options.epochs = 1;
    options.adam.lr = 0.0;  // evaluate without moving parameters
    options.seed = 48;
    Rng epoch_rng(options.seed);
    const double loss = pretrain_epoch(enc, corpus, options, epoch_rng);
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("pretrain loss is taken over exactly the masked set") {
    Encoder enc(small_config(), kVocabs, 13);
    std::fill(enc.params().get("head.w2").raw_values().begin(),
              enc.params().get("head.w2").raw_values().end(), 0.0);
    std::fill(enc.params().get("head.b2").raw_values().begin(),
              enc.params().get("head.b2").raw_values().end(), 0.0);

    Rng rng(53);
    auto seq = random_sequence(rng, 8);
    Rng mask_rng(54);
    MaskedSequence masked = mask_behaviors(seq, 0.5, mask_rng);

    enc.params().zero_grads();
    Tensor loss = enc.masked_behavior_loss({masked});
    backward(loss);

    // with sigma(0)=0.5 everywhere, d loss / d head.b2 = 0.5 - mean(true labels
    // over the masked set); any leakage from unmasked rows would shift it
    double mean_label = 0.0;
    for (double y : masked.true_labels) mean_label += y;
    mean_label /= double(masked.true_labels.size());
    CHECK(enc.params().get("head.b2").grad()[0] == doctest::Approx(0.5 - mean_label).epsilon(1e-9));
}

TEST_CASE("pretraining learns a feature-determined rule and refuses coin flips") {
    // label = 1 iff the genre field is 1: recoverable from the position's own
    // features, so the loss should collapse quickly
    PretrainCorpus learnable;
    Rng rng(59);
    for (int c = 0; c < 150; ++c) {
        InteractionSequence chunk;
        chunk.user_id = std::uint32_t(c);
        for (int t = 0; t < 6; ++t) {
            const std::uint32_t genre = std::uint32_t(1 + rng.uniform_below(3));
            chunk.interactions.push_back(make(std::uint64_t(c * 10 + t),
                                              1 + std::uint32_t(rng.uniform_below(5)),
                                              1 + std::uint32_t(rng.uniform_below(5)), genre,
                                              genre == 1 ? 1 : 0, c * 10 + t));
        }
        learnable.chunks.push_back(chunk);
    }

    Encoder enc(small_config(), kVocabs, 14);
    PretrainOptions options;
    options.mask_ratio = 0.5;
    options.epochs = 10;
    options.batch_size = 16;
    options.adam.lr = 5e-3;
    options.seed = 60;
    auto losses = pretrain(enc, learnable, options);
    CHECK(losses.back() < 0.3);

    // coin-flip labels: nothing to learn, loss pinned near ln 2
    PretrainCorpus coinflip;
    Rng coin_rng(61);
    for (int c = 0; c < 150; ++c) {
        InteractionSequence chunk;
        chunk.user_id = std::uint32_t(c);
        chunk.interactions = random_sequence(coin_rng, 6);
        for (auto& it : chunk.interactions) it.label = int(coin_rng.uniform_below(2));
        coinflip.chunks.push_back(chunk);
    }
    Encoder enc2(small_config(), kVocabs, 15);
    options.epochs = 5;
    auto coin_losses = pretrain(enc2, coinflip, options);
    CHECK(coin_losses.back() > 0.6);
}

TEST_CASE("the recurrent variant pretrains and its gradients check out") {
    EncoderConfig cfg = small_config();
    cfg.variant = EncoderVariant::recurrent;
    cfg.d_model = 6;
    cfg.n_heads = 1;
    Encoder enc(cfg, kVocabs, 71);

    Rng rng(72);
    auto seq = random_sequence(rng, 4);
    Rng mask_rng(73);
    MaskedSequence masked = mask_behaviors(seq, 0.5, mask_rng);
    auto forward = [&] { return enc.masked_behavior_loss({masked}); };
    GradCheckReport report = grad_check(forward, enc.params(), 1e-4);
    INFO("worst " << report.worst_param << " err " << report.worst_err);
    CHECK(report.passed);

    PretrainCorpus corpus;
    for (int c = 0; c < 8; ++c) {
        InteractionSequence chunk;
        chunk.user_id = std::uint32_t(c);
        chunk.interactions = random_sequence(rng, 5);
        corpus.chunks.push_back(chunk);
    }
    PretrainOptions options;
    options.mask_ratio = 0.5;
    options.epochs = 1;
    options.seed = 74;
    auto losses = pretrain(enc, corpus, options);
    CHECK(losses.size() == 1);
    CHECK(std::isfinite(losses[0]));
}

TEST_CASE("pretrain on an empty corpus fails loudly") {
    Encoder enc(small_config(), kVocabs, 16);
    PretrainOptions options;
    Rng rng(62);
    PretrainCorpus empty;
    CHECK_THROWS_AS(pretrain_epoch(enc, empty, options, rng), EmptyCorpusError);
}
