#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lift/param_store.hpp"
#include "lift/retriever.hpp"
#include "lift/tensor.hpp"

namespace lift {

// Which context blocks feed the prediction MLP. Blocks are omitted, not
// zero-filled, so each mode has its own MLP input width.
enum class AblationMode { full, history_only, future_only, no_context };

std::string to_string(AblationMode mode);
AblationMode ablation_mode_from_string(const std::string& name);

enum class InteractionFn { inner_product };

struct PredictorConfig {
    AblationMode mode = AblationMode::full;
    int top_k = 8;
    InteractionFn interaction_fn = InteractionFn::inner_product;
    std::vector<int> mlp_hidden = {64, 32};
    AdamConfig adam;
    int batch_size = 32;
    int epochs = 3;
    std::uint64_t seed = 1;
    void validate() const;
};

// Softmax over bilinear key-target similarity, max-subtracted. Returns a
// 1 x K row of simplex weights.
Tensor key_attention(const Tensor& target_embedding, const Tensor& key_embeddings,
                     const Tensor& bilinear_weights);

struct AggregatedContext {
    Tensor keys;     // 1 x (M*w)
    Tensor history;  // 1 x v
    Tensor future;   // 1 x v
};

// Attention-weighted sums of the retrieved keys and their context halves.
AggregatedContext aggregate_retrieved(const Tensor& attention, const Tensor& key_embeddings,
                                      const Tensor& history_values, const Tensor& future_values);

// Inner products of all unordered field pairs, row-wise; M < 2 degenerates
// to a zero-width output (logged once to stderr).
Tensor interaction_layer(const Tensor& rows, int field_count, int embed_dim);

// One fully precomputed prediction input. The target user's encoded history
// and the retrieved records are fixed data as far as the predictor is
// concerned, which keeps the encoder verifiably frozen during training.
// Pointers must outlive the example (they point into the dataset splits and
// the datastore).
struct PredictorExample {
    const Interaction* target = nullptr;
    std::vector<double> history_embedding;          // v, from the frozen encoder
    std::vector<const DatastoreRecord*> retrieved;  // <= K, may be empty
};

// Label predictor: target feature embeddings, key-based attention over
// retrieved contexts, pairwise feature interactions, and an MLP head.
class Predictor {
public:
    Predictor(PredictorConfig config, int field_count, int embed_dim, int context_dim,
              std::vector<int> field_vocab_sizes, std::uint64_t seed);

    const PredictorConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    int field_count() const { return field_count_; }
    int embed_dim() const { return embed_dim_; }
    int context_dim() const { return context_dim_; }
    int mlp_input_width() const;

    // Probabilities for a batch of examples, batch x 1, graph alive.
    Tensor forward_batch(const std::vector<const PredictorExample*>& batch) const;

    // Gradient-free single prediction.
    double predict(const PredictorExample& example) const;

private:
    Tensor embed_feature_rows(const std::vector<const std::vector<FeatureValue>*>& rows) const;
    Tensor mlp(const Tensor& hidden) const;

    PredictorConfig config_;
    int field_count_;
    int embed_dim_;
    int context_dim_;
    std::vector<int> vocab_sizes_;
    ParamStore params_;
};

struct TrainLogRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;      // NaN when no validation callback
    double val_logloss = 0.0;  // NaN when no validation callback
};

struct TrainResult {
    std::vector<TrainLogRow> log;
};

// Per-epoch validation hook; returns (auc, logloss). Lets the pipeline log
// validation metrics without this module depending on the metric code.
using ValidationFn = std::function<std::pair<double, double>(const Predictor&)>;

// Mini-batch BCE training with Adam. Deterministic under the config seed;
// touches nothing but the predictor's own parameters.
TrainResult train_predictor(Predictor& predictor, const std::vector<PredictorExample>& train_examples,
                            const ValidationFn& validation = nullptr);

// Precompute history embeddings and retrieval results for a set of targets.
// The per-user history is drawn from history_pool (retrieval + train splits),
// truncated to the most recent context_len events strictly earlier than the
// target.
std::vector<PredictorExample> build_predictor_examples(const std::vector<Interaction>& targets,
                                                       const std::vector<Interaction>& history_pool,
                                                       const Datastore& datastore, const Encoder& encoder,
                                                       int context_len, int top_k);

}  // namespace lift
