#include "lift/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace lift {

namespace {

constexpr double kMaskFill = -1e30;
constexpr double kNormEps = 1e-5;

Tensor linear_init(int fan_in, int fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    return Tensor::uniform({fan_in, fan_out}, -bound, bound, rng);
}

Tensor bias_init(int n) { return Tensor::zeros({n}); }

}  // namespace

std::string to_string(EncoderVariant variant) {
    switch (variant) {
        case EncoderVariant::causal_transformer: return "causal_transformer";
        case EncoderVariant::recurrent: return "recurrent";
        case EncoderVariant::bidirectional_transformer: return "bidirectional_transformer";
    }
    throw Error("unknown encoder variant");
}

EncoderVariant encoder_variant_from_string(const std::string& name) {
    if (name == "causal_transformer") return EncoderVariant::causal_transformer;
    if (name == "recurrent") return EncoderVariant::recurrent;
    if (name == "bidirectional_transformer") return EncoderVariant::bidirectional_transformer;
    throw Error("unknown encoder variant: " + name);
}

void EncoderConfig::validate() const {
    if (field_count < 1) throw Error("encoder config: field_count must be >= 1");
    if (embed_dim < 1 || d_model < 1 || n_layers < 1 || n_heads < 1)
        throw Error("encoder config: dimensions must be positive");
    if (d_model % n_heads != 0) throw Error("encoder config: d_model must be divisible by n_heads");
    if (max_seq_len < 1) throw Error("encoder config: max_seq_len must be >= 1");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw Error("encoder config: mask_ratio must lie in (0,1)");
}

MaskedSequence mask_behaviors(const std::vector<Interaction>& sequence, double mask_ratio, Rng& rng) {
    if (sequence.size() < 2)
        throw TooShortError("mask_behaviors: sequence of length " + std::to_string(sequence.size()) +
                            " is too short to mask");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw Error("mask_behaviors: mask ratio must lie in (0,1)");

    MaskedSequence out;
    out.interactions = sequence;
    out.label_tokens.resize(sequence.size());
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        if (rng.bernoulli(mask_ratio)) {
            out.label_tokens[t] = LabelToken::masked;
            out.masked_positions.push_back(int(t));
        } else {
            out.label_tokens[t] = label_token_of(sequence[t]);
        }
    }
    if (out.masked_positions.empty()) {
        const auto last = sequence.size() - 1;
        out.label_tokens[last] = LabelToken::masked;
        out.masked_positions.push_back(int(last));
    }
    for (int p : out.masked_positions) out.true_labels.push_back(double(sequence[std::size_t(p)].label));
    return out;
}

Encoder::Encoder(EncoderConfig config, std::vector<int> field_vocab_sizes, std::uint64_t seed)
    : config_(config), vocab_sizes_(std::move(field_vocab_sizes)) {
    config_.validate();
    if (int(vocab_sizes_.size()) != config_.field_count)
        throw Error("encoder: vocab sizes do not match field count");
    build_params(seed);
}

Encoder::Encoder(EncoderConfig config, std::vector<int> field_vocab_sizes, ParamStore params)
    : config_(config), vocab_sizes_(std::move(field_vocab_sizes)), params_(std::move(params)) {
    config_.validate();
    if (int(vocab_sizes_.size()) != config_.field_count)
        throw Error("encoder: vocab sizes do not match field count");
}

void Encoder::build_params(std::uint64_t seed) {
    Rng rng(seed);
    const int w = config_.embed_dim;
    const int d = config_.d_model;

    for (int f = 0; f < config_.field_count; ++f)
        params_.add("embed.field" + std::to_string(f),
                    Tensor::uniform({vocab_sizes_[std::size_t(f)], w}, -0.05, 0.05, rng));
    params_.add("embed.label", Tensor::uniform({4, w}, -0.05, 0.05, rng));
    params_.add("embed.position", Tensor::uniform({config_.max_seq_len, d}, -0.05, 0.05, rng));
    params_.add("proj.weight", linear_init(config_.token_width(), d, rng));
    params_.add("proj.bias", bias_init(d));

    if (config_.variant == EncoderVariant::recurrent) {
        for (const char* gate : {"update", "reset", "cand"}) {
            params_.add(std::string("gru.w_") + gate, linear_init(d, d, rng));
            params_.add(std::string("gru.u_") + gate, linear_init(d, d, rng));
            params_.add(std::string("gru.b_") + gate, bias_init(d));
        }
    } else {
        for (int l = 0; l < config_.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (const char* m : {"wq", "wk", "wv", "wo"}) params_.add(p + "attn." + m, linear_init(d, d, rng));
            for (const char* m : {"bq", "bk", "bv", "bo"}) params_.add(p + "attn." + m, bias_init(d));
            params_.add(p + "norm1.gain", Tensor::from({d}, std::vector<double>(std::size_t(d), 1.0)));
            params_.add(p + "norm1.bias", bias_init(d));
            params_.add(p + "ff.w1", linear_init(d, 4 * d, rng));
            params_.add(p + "ff.b1", bias_init(4 * d));
            params_.add(p + "ff.w2", linear_init(4 * d, d, rng));
            params_.add(p + "ff.b2", bias_init(d));
            params_.add(p + "norm2.gain", Tensor::from({d}, std::vector<double>(std::size_t(d), 1.0)));
            params_.add(p + "norm2.bias", bias_init(d));
        }
    }

    params_.add("head.w1", linear_init(d, d, rng));
    params_.add("head.b1", bias_init(d));
    params_.add("head.w2", linear_init(d, 1, rng));
    params_.add("head.b2", bias_init(1));
    params_.add("null_sequence", Tensor::uniform({1, d}, -0.05, 0.05, rng));
}

Tensor Encoder::embed_tokens(const std::vector<Interaction>& sequence,
                             const std::vector<LabelToken>& label_tokens) const {
    if (sequence.empty()) throw ShapeError("embed_tokens: empty sequence");
    if (sequence.size() != label_tokens.size())
        throw ShapeError("embed_tokens: " + std::to_string(sequence.size()) + " interactions vs " +
                         std::to_string(label_tokens.size()) + " label tokens");

    const int fields = config_.field_count;
    std::vector<Tensor> parts;
    parts.reserve(std::size_t(fields) + 1);
    for (int f = 0; f < fields; ++f) {
        std::vector<int> ids;
        ids.reserve(sequence.size());
        for (const auto& it : sequence) {
            if (int(it.features.size()) != fields)
                throw ShapeError("embed_tokens: interaction with " + std::to_string(it.features.size()) +
                                 " features, expected " + std::to_string(fields));
            ids.push_back(int(it.features[std::size_t(f)].value));
        }
        parts.push_back(embedding_lookup(params_.get("embed.field" + std::to_string(f)), ids));
    }
    std::vector<int> label_ids;
    label_ids.reserve(label_tokens.size());
    for (auto t : label_tokens) label_ids.push_back(int(t));
    parts.push_back(embedding_lookup(params_.get("embed.label"), label_ids));
    return concat(parts, 1);
}

Tensor Encoder::embed_interaction(const Interaction& interaction, LabelToken label_token) const {
    Tensor tokens = embed_tokens({interaction}, {label_token});
    return add_row_bias(matmul(tokens, params_.get("proj.weight")), params_.get("proj.bias"));
}

Tensor Encoder::transformer_states(const Tensor& projected, bool causal) const {
    const int seq_len = projected.dim(0);
    const int d = config_.d_model;
    const int head_dim = d / config_.n_heads;

    Tensor mask;
    if (causal) {
        std::vector<double> m(std::size_t(seq_len) * std::size_t(seq_len), 0.0);
        for (int i = 0; i < seq_len; ++i)
            for (int j = i + 1; j < seq_len; ++j)
                m[std::size_t(i) * std::size_t(seq_len) + std::size_t(j)] = kMaskFill;
        mask = Tensor::from({seq_len, seq_len}, std::move(m));
    }

    Tensor x = projected;
    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Tensor q = add_row_bias(matmul(x, params_.get(p + "attn.wq")), params_.get(p + "attn.bq"));
        Tensor k = add_row_bias(matmul(x, params_.get(p + "attn.wk")), params_.get(p + "attn.bk"));
        Tensor v = add_row_bias(matmul(x, params_.get(p + "attn.wv")), params_.get(p + "attn.bv"));

        std::vector<Tensor> heads;
        heads.reserve(std::size_t(config_.n_heads));
        for (int h = 0; h < config_.n_heads; ++h) {
            const int c0 = h * head_dim, c1 = (h + 1) * head_dim;
            Tensor qh = slice_cols(q, c0, c1);
            Tensor kh = slice_cols(k, c0, c1);
            Tensor vh = slice_cols(v, c0, c1);
            Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(head_dim)));
            if (causal) scores = add(scores, mask);
            heads.push_back(matmul(softmax_rows(scores), vh));
        }
        Tensor attn = add_row_bias(matmul(concat(heads, 1), params_.get(p + "attn.wo")),
                                   params_.get(p + "attn.bo"));
        x = add_row_bias(row_scale(layer_norm_rows(add(x, attn), kNormEps), params_.get(p + "norm1.gain")),
                         params_.get(p + "norm1.bias"));

        Tensor hidden = gelu(add_row_bias(matmul(x, params_.get(p + "ff.w1")), params_.get(p + "ff.b1")));
        Tensor ff = add_row_bias(matmul(hidden, params_.get(p + "ff.w2")), params_.get(p + "ff.b2"));
        x = add_row_bias(row_scale(layer_norm_rows(add(x, ff), kNormEps), params_.get(p + "norm2.gain")),
                         params_.get(p + "norm2.bias"));
    }
    return x;
}

Tensor Encoder::recurrent_states(const Tensor& projected) const {
    const int seq_len = projected.dim(0);
    const int d = config_.d_model;
    const Tensor ones = Tensor::from({1, d}, std::vector<double>(std::size_t(d), 1.0));

    Tensor state = Tensor::zeros({1, d});
    std::vector<Tensor> states;
    states.reserve(std::size_t(seq_len));
    for (int t = 0; t < seq_len; ++t) {
        Tensor x = gather_rows(projected, {t});
        Tensor update = sigmoid(add_row_bias(add(matmul(x, params_.get("gru.w_update")),
                                                 matmul(state, params_.get("gru.u_update"))),
                                             params_.get("gru.b_update")));
        Tensor reset = sigmoid(add_row_bias(add(matmul(x, params_.get("gru.w_reset")),
                                                matmul(state, params_.get("gru.u_reset"))),
                                            params_.get("gru.b_reset")));
        Tensor cand = tanh(add_row_bias(add(matmul(x, params_.get("gru.w_cand")),
                                            matmul(mul(reset, state), params_.get("gru.u_cand"))),
                                        params_.get("gru.b_cand")));
        state = add(mul(sub(ones, update), state), mul(update, cand));
        states.push_back(state);
    }
    return concat(states, 0);
}

Tensor Encoder::hidden_states(const std::vector<Interaction>& sequence,
                              const std::vector<LabelToken>& label_tokens) const {
    const int seq_len = int(sequence.size());
    if (seq_len < 1) throw ShapeError("hidden_states: empty sequence");
    if (seq_len > config_.max_seq_len)
        throw ShapeError("hidden_states: sequence of length " + std::to_string(seq_len) +
                         " exceeds max_seq_len " + std::to_string(config_.max_seq_len));

    Tensor tokens = embed_tokens(sequence, label_tokens);
    Tensor x = add_row_bias(matmul(tokens, params_.get("proj.weight")), params_.get("proj.bias"));

    if (config_.variant == EncoderVariant::recurrent) return recurrent_states(x);

    std::vector<int> positions(static_cast<std::size_t>(seq_len));
    for (int t = 0; t < seq_len; ++t) positions[std::size_t(t)] = t;
    x = add(x, gather_rows(params_.get("embed.position"), positions));
    return transformer_states(x, config_.variant == EncoderVariant::causal_transformer);
}

EncodeResult Encoder::encode(const std::vector<Interaction>& sequence) const {
    std::vector<LabelToken> tokens;
    tokens.reserve(sequence.size());
    for (const auto& it : sequence) tokens.push_back(label_token_of(it));
    return encode(sequence, tokens);
}

EncodeResult Encoder::encode(const std::vector<Interaction>& sequence,
                             const std::vector<LabelToken>& label_tokens) const {
    if (sequence.empty()) return {params_.get("null_sequence"), true};
    Tensor states = hidden_states(sequence, label_tokens);
    return {gather_rows(states, {states.dim(0) - 1}), false};
}

std::vector<double> Encoder::encode_values(const std::vector<Interaction>& sequence) const {
    NoGradGuard guard;
    return encode(sequence).embedding.values();
}

Tensor Encoder::masked_behavior_loss(const std::vector<MaskedSequence>& batch) const {
    if (batch.empty()) throw Error("masked_behavior_loss: empty batch");
    std::vector<Tensor> prob_parts;
    std::vector<double> targets;
    prob_parts.reserve(batch.size());
    for (const auto& masked : batch) {
        Tensor states = hidden_states(masked.interactions, masked.label_tokens);
        Tensor picked = gather_rows(states, masked.masked_positions);
        Tensor hidden = gelu(add_row_bias(matmul(picked, params_.get("head.w1")), params_.get("head.b1")));
        Tensor logits = add_row_bias(matmul(hidden, params_.get("head.w2")), params_.get("head.b2"));
        prob_parts.push_back(sigmoid(logits));
        targets.insert(targets.end(), masked.true_labels.begin(), masked.true_labels.end());
    }
    return bce_loss(concat(prob_parts, 0), targets);
}

double pretrain_epoch(Encoder& encoder, const PretrainCorpus& corpus, const PretrainOptions& options,
                      Rng& rng) {
    if (corpus.chunks.empty()) throw EmptyCorpusError("pretrain_epoch: empty corpus");
    if (options.batch_size < 1) throw Error("pretrain_epoch: batch_size must be >= 1");

    std::vector<std::size_t> order(corpus.chunks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_below(i)]);

    encoder.params().zero_grads();
    double loss_sum = 0.0;
    std::size_t masked_total = 0;

    std::size_t cursor = 0;
    while (cursor < order.size()) {
        const std::size_t batch_end = std::min(cursor + std::size_t(options.batch_size), order.size());
        std::vector<MaskedSequence> batch;
        batch.reserve(batch_end - cursor);
        std::size_t batch_masked = 0;
        for (std::size_t i = cursor; i < batch_end; ++i) {
            batch.push_back(mask_behaviors(corpus.chunks[order[i]].interactions, options.mask_ratio, rng));
            batch_masked += batch.back().masked_positions.size();
        }
        Tensor loss = encoder.masked_behavior_loss(batch);
        backward(loss);
        encoder.params().adam_step(options.adam);
        loss_sum += loss.item() * double(batch_masked);
        masked_total += batch_masked;
        cursor = batch_end;
    }
    return loss_sum / double(masked_total);
}

std::vector<double> pretrain(Encoder& encoder, const PretrainCorpus& corpus, const PretrainOptions& options) {
    Rng rng(options.seed);
    std::vector<double> losses;
    losses.reserve(std::size_t(options.epochs));
    for (int e = 0; e < options.epochs; ++e) losses.push_back(pretrain_epoch(encoder, corpus, options, rng));
    return losses;
}

}  // namespace lift
