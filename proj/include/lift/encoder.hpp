#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lift/domain.hpp"
#include "lift/ingest.hpp"
#include "lift/param_store.hpp"
#include "lift/rng.hpp"
#include "lift/tensor.hpp"

namespace lift {

// Per-position label channel fed to the encoder alongside the features.
enum class LabelToken : int { negative = 0, positive = 1, masked = 2, padding = 3 };

inline LabelToken label_token_of(const Interaction& it) {
    return it.label ? LabelToken::positive : LabelToken::negative;
}

enum class EncoderVariant { causal_transformer, recurrent, bidirectional_transformer };

std::string to_string(EncoderVariant variant);
EncoderVariant encoder_variant_from_string(const std::string& name);

struct EncoderConfig {
    int field_count = 0;   // features per interaction
    int embed_dim = 8;     // per-field embedding width
    int d_model = 64;      // transformer width == output embedding width
    int n_layers = 2;
    int n_heads = 2;
    int max_seq_len = 16;
    double mask_ratio = 0.6;
    EncoderVariant variant = EncoderVariant::causal_transformer;

    int output_dim() const { return d_model; }
    int token_width() const { return (field_count + 1) * embed_dim; }  // features + label channel
    void validate() const;
};

// A sequence prepared for mask-behavior pretraining: label tokens with the
// chosen positions replaced by the mask token. Feature tokens are never
// altered, only the label channel.
struct MaskedSequence {
    std::vector<Interaction> interactions;
    std::vector<LabelToken> label_tokens;
    std::vector<int> masked_positions;
    std::vector<double> true_labels;  // labels at masked positions, in position order
};

// Mask each position independently with probability mask_ratio; when the
// draw selects nothing, the last position is forcibly masked so the loss is
// never taken over an empty set.
MaskedSequence mask_behaviors(const std::vector<Interaction>& sequence, double mask_ratio, Rng& rng);

struct EncodeResult {
    Tensor embedding;         // 1 x d_model
    bool empty_input = false; // true => the learned null-sequence embedding
};

// Sequence encoder: per-field embeddings concatenated with a label-token
// embedding, projected to d_model, plus learned positions, then either a
// causal transformer (default), a bidirectional transformer, or a single
// GRU layer. The sequence representation is the hidden state at the last
// position.
class Encoder {
public:
    Encoder(EncoderConfig config, std::vector<int> field_vocab_sizes, std::uint64_t seed);
    Encoder(EncoderConfig config, std::vector<int> field_vocab_sizes, ParamStore params);

    const EncoderConfig& config() const { return config_; }
    const std::vector<int>& vocab_sizes() const { return vocab_sizes_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Pre-projection token matrix, T x (field_count+1)*embed_dim.
    Tensor embed_tokens(const std::vector<Interaction>& sequence,
                        const std::vector<LabelToken>& label_tokens) const;

    // One interaction projected to d_model (positional term not included).
    Tensor embed_interaction(const Interaction& interaction, LabelToken label_token) const;

    // All hidden states, T x d_model.
    Tensor hidden_states(const std::vector<Interaction>& sequence,
                         const std::vector<LabelToken>& label_tokens) const;

    // Final-state embedding; an empty sequence yields the learned
    // null-sequence parameter, flagged in the result.
    EncodeResult encode(const std::vector<Interaction>& sequence) const;
    EncodeResult encode(const std::vector<Interaction>& sequence,
                        const std::vector<LabelToken>& label_tokens) const;

    // Gradient-free convenience: encode and copy the values out.
    std::vector<double> encode_values(const std::vector<Interaction>& sequence) const;

    // Mean mask-behavior loss of a batch of masked chunks; the graph is live
    // so callers can backpropagate through it.
    Tensor masked_behavior_loss(const std::vector<MaskedSequence>& batch) const;

private:
    void build_params(std::uint64_t seed);
    Tensor transformer_states(const Tensor& projected, bool causal) const;
    Tensor recurrent_states(const Tensor& projected) const;

    EncoderConfig config_;
    std::vector<int> vocab_sizes_;
    ParamStore params_;
};

struct PretrainOptions {
    double mask_ratio = 0.6;
    int epochs = 20;
    int batch_size = 16;
    AdamConfig adam;
    std::uint64_t seed = 1;
};

// One pass over the corpus: mask, encode, score masked positions, Adam step
// per batch. Returns the epoch's mean loss per masked position.
double pretrain_epoch(Encoder& encoder, const PretrainCorpus& corpus, const PretrainOptions& options,
                      Rng& rng);

// Full pretraining loop; returns the per-epoch mean losses.
std::vector<double> pretrain(Encoder& encoder, const PretrainCorpus& corpus, const PretrainOptions& options);

}  // namespace lift
