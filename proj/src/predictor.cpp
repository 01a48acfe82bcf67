#include "lift/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

namespace lift {

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::full: return "FULL";
        case AblationMode::history_only: return "HISTORY_ONLY";
        case AblationMode::future_only: return "FUTURE_ONLY";
        case AblationMode::no_context: return "NO_CONTEXT";
    }
    throw Error("unknown ablation mode");
}

AblationMode ablation_mode_from_string(const std::string& name) {
    if (name == "FULL") return AblationMode::full;
    if (name == "HISTORY_ONLY") return AblationMode::history_only;
    if (name == "FUTURE_ONLY") return AblationMode::future_only;
    if (name == "NO_CONTEXT") return AblationMode::no_context;
    throw Error("unknown ablation mode: " + name);
}

void PredictorConfig::validate() const {
    if (mode != AblationMode::no_context && top_k < 1)
        throw Error("predictor config: top_k must be >= 1 unless mode is NO_CONTEXT");
    if (batch_size < 1 || epochs < 0) throw Error("predictor config: bad batch_size/epochs");
    for (int w : mlp_hidden)
        if (w < 1) throw Error("predictor config: mlp_hidden widths must be positive");
}

Tensor key_attention(const Tensor& target_embedding, const Tensor& key_embeddings,
                     const Tensor& bilinear_weights) {
    if (key_embeddings.rows() < 1) throw ShapeError("key_attention: no keys");
    // scores_i = x_i^T W x_t, computed as keys (K x Mw) times (W x_t) (Mw x 1)
    Tensor projected = matmul(target_embedding, transpose(bilinear_weights));  // 1 x Mw
    Tensor scores = matmul(key_embeddings, transpose(projected));              // K x 1
    return softmax_rows(transpose(scores));                                    // 1 x K
}

AggregatedContext aggregate_retrieved(const Tensor& attention, const Tensor& key_embeddings,
                                      const Tensor& history_values, const Tensor& future_values) {
    const int k = attention.cols();
    if (key_embeddings.rows() != k || history_values.rows() != k || future_values.rows() != k)
        throw ShapeError("aggregate_retrieved: attention over " + std::to_string(k) +
                         " records vs keys " + std::to_string(key_embeddings.rows()) + ", history " +
                         std::to_string(history_values.rows()) + ", future " +
                         std::to_string(future_values.rows()));
    return {matmul(attention, key_embeddings), matmul(attention, history_values),
            matmul(attention, future_values)};
}

Tensor interaction_layer(const Tensor& rows, int field_count, int embed_dim) {
    if (field_count < 2) {
        static bool warned = false;
        if (!warned) {
            std::cerr << "interaction_layer: field_count < 2, emitting zero-width interactions\n";
            warned = true;
        }
        return Tensor::zeros({rows.rows(), 0});
    }
    return pairwise_inner_products(rows, field_count, embed_dim);
}

Predictor::Predictor(PredictorConfig config, int field_count, int embed_dim, int context_dim,
                     std::vector<int> field_vocab_sizes, std::uint64_t seed)
    : config_(std::move(config)),
      field_count_(field_count),
      embed_dim_(embed_dim),
      context_dim_(context_dim),
      vocab_sizes_(std::move(field_vocab_sizes)) {
    config_.validate();
    if (int(vocab_sizes_.size()) != field_count_)
        throw Error("predictor: vocab sizes do not match field count");

    Rng rng(seed);
    const int key_width = field_count_ * embed_dim_;
    for (int f = 0; f < field_count_; ++f)
        params_.add("embed.field" + std::to_string(f),
                    Tensor::uniform({vocab_sizes_[std::size_t(f)], embed_dim_}, -0.05, 0.05, rng));

    // Bilinear attention starts near a scaled identity so early scores track
    // raw key-target similarity.
    {
        std::vector<double> w(std::size_t(key_width) * std::size_t(key_width));
        for (int i = 0; i < key_width; ++i)
            for (int j = 0; j < key_width; ++j)
                w[std::size_t(i) * std::size_t(key_width) + std::size_t(j)] =
                    (i == j ? 0.1 : 0.0) + rng.uniform(-0.01, 0.01);
        params_.add("attn.bilinear", Tensor::from({key_width, key_width}, std::move(w)));
    }

    params_.add("null.key", Tensor::uniform({1, key_width}, -0.05, 0.05, rng));
    params_.add("null.history", Tensor::uniform({1, context_dim_}, -0.05, 0.05, rng));
    params_.add("null.future", Tensor::uniform({1, context_dim_}, -0.05, 0.05, rng));

    int width = mlp_input_width();
    std::vector<int> widths = config_.mlp_hidden;
    widths.push_back(1);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const double bound = 1.0 / std::sqrt(double(width));
        params_.add("mlp.w" + std::to_string(l),
                    Tensor::uniform({width, widths[l]}, -bound, bound, rng));
        params_.add("mlp.b" + std::to_string(l), Tensor::zeros({widths[l]}));
        width = widths[l];
    }
}

int Predictor::mlp_input_width() const {
    const int pairs = field_count_ * (field_count_ - 1) / 2;
    switch (config_.mode) {
        case AblationMode::full: return pairs + pairs + 3 * context_dim_;
        case AblationMode::history_only: return pairs + pairs + 2 * context_dim_;
        case AblationMode::future_only: return pairs + pairs + 2 * context_dim_;
        case AblationMode::no_context: return pairs + context_dim_;
    }
    throw Error("unknown ablation mode");
}

Tensor Predictor::embed_feature_rows(const std::vector<const std::vector<FeatureValue>*>& rows) const {
    std::vector<Tensor> parts;
    parts.reserve(std::size_t(field_count_));
    for (int f = 0; f < field_count_; ++f) {
        std::vector<int> ids;
        ids.reserve(rows.size());
        for (const auto* features : rows) {
            if (int(features->size()) != field_count_)
                throw ShapeError("predictor: key with " + std::to_string(features->size()) +
                                 " fields, expected " + std::to_string(field_count_));
            ids.push_back(int((*features)[std::size_t(f)].value));
        }
        parts.push_back(embedding_lookup(params_.get("embed.field" + std::to_string(f)), ids));
    }
    return concat(parts, 1);
}

Tensor Predictor::mlp(const Tensor& hidden) const {
    Tensor x = hidden;
    const int n_layers = int(config_.mlp_hidden.size()) + 1;
    for (int l = 0; l < n_layers; ++l) {
        x = add_row_bias(matmul(x, params_.get("mlp.w" + std::to_string(l))),
                         params_.get("mlp.b" + std::to_string(l)));
        if (l + 1 < n_layers) x = gelu(x);
    }
    return x;
}

Tensor Predictor::forward_batch(const std::vector<const PredictorExample*>& batch) const {
    if (batch.empty()) throw Error("forward_batch: empty batch");

    std::vector<const std::vector<FeatureValue>*> target_rows;
    target_rows.reserve(batch.size());
    for (const auto* ex : batch) target_rows.push_back(&ex->target->features);
    Tensor targets = embed_feature_rows(target_rows);                        // B x Mw
    Tensor target_inter = interaction_layer(targets, field_count_, embed_dim_);  // B x P

    Tensor projected;
    if (config_.mode != AblationMode::no_context)
        projected = matmul(targets, transpose(params_.get("attn.bilinear")));  // B x Mw

    std::vector<Tensor> hidden_rows;
    hidden_rows.reserve(batch.size());
    for (std::size_t e = 0; e < batch.size(); ++e) {
        const auto& ex = *batch[e];
        Tensor history = Tensor::from({1, context_dim_}, ex.history_embedding);
        Tensor inter_t = gather_rows(target_inter, {int(e)});

        if (config_.mode == AblationMode::no_context) {
            hidden_rows.push_back(concat({inter_t, history}, 1));
            continue;
        }

        Tensor agg_keys, agg_history, agg_future;
        if (ex.retrieved.empty()) {
            agg_keys = params_.get("null.key");
            agg_history = params_.get("null.history");
            agg_future = params_.get("null.future");
        } else {
            const auto k = ex.retrieved.size();
            std::vector<const std::vector<FeatureValue>*> key_rows;
            key_rows.reserve(k);
            std::vector<double> h_values, f_values;
            h_values.reserve(k * std::size_t(context_dim_));
            f_values.reserve(k * std::size_t(context_dim_));
            for (const auto* rec : ex.retrieved) {
                key_rows.push_back(&rec->key);
                h_values.insert(h_values.end(), rec->history_embedding.begin(), rec->history_embedding.end());
                f_values.insert(f_values.end(), rec->future_embedding.begin(), rec->future_embedding.end());
            }
            Tensor keys = embed_feature_rows(key_rows);  // K x Mw
            Tensor scores = matmul(keys, transpose(gather_rows(projected, {int(e)})));
            Tensor attention = softmax_rows(transpose(scores));  // 1 x K
            AggregatedContext agg = aggregate_retrieved(
                attention, keys, Tensor::from({int(k), context_dim_}, std::move(h_values)),
                Tensor::from({int(k), context_dim_}, std::move(f_values)));
            agg_keys = agg.keys;
            agg_history = agg.history;
            agg_future = agg.future;
        }

        Tensor inter_r = interaction_layer(agg_keys, field_count_, embed_dim_);
        switch (config_.mode) {
            case AblationMode::full:
                hidden_rows.push_back(concat({inter_t, inter_r, agg_future, agg_history, history}, 1));
                break;
            case AblationMode::history_only:
                hidden_rows.push_back(concat({inter_t, inter_r, agg_history, history}, 1));
                break;
            case AblationMode::future_only:
                hidden_rows.push_back(concat({inter_t, inter_r, agg_future, history}, 1));
                break;
            case AblationMode::no_context:
                break;  // handled above
        }
    }

    Tensor hidden = hidden_rows.size() == 1 ? hidden_rows[0] : concat(hidden_rows, 0);
    return sigmoid(mlp(hidden));
}

double Predictor::predict(const PredictorExample& example) const {
    NoGradGuard guard;
    return forward_batch({&example}).values()[0];
}

TrainResult train_predictor(Predictor& predictor, const std::vector<PredictorExample>& train_examples,
                            const ValidationFn& validation) {
    if (train_examples.empty()) throw EmptyDatasetError("train_predictor: no training examples");
    const auto& cfg = predictor.config();

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    predictor.params().zero_grads();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_below(i)]);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t end = std::min(cursor + std::size_t(cfg.batch_size), order.size());
            std::vector<const PredictorExample*> batch;
            std::vector<double> labels;
            batch.reserve(end - cursor);
            for (std::size_t i = cursor; i < end; ++i) {
                batch.push_back(&train_examples[order[i]]);
                labels.push_back(double(train_examples[order[i]].target->label));
            }
            Tensor loss = bce_loss(predictor.forward_batch(batch), labels);
            backward(loss);
            predictor.params().adam_step(cfg.adam);
            loss_sum += loss.item() * double(batch.size());
            seen += batch.size();
            cursor = end;
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / double(seen);
        if (validation) {
            auto [auc, logloss] = validation(predictor);
            row.val_auc = auc;
            row.val_logloss = logloss;
        } else {
            row.val_auc = std::numeric_limits<double>::quiet_NaN();
            row.val_logloss = std::numeric_limits<double>::quiet_NaN();
        }
        result.log.push_back(row);
    }
    return result;
}

std::vector<PredictorExample> build_predictor_examples(const std::vector<Interaction>& targets,
                                                       const std::vector<Interaction>& history_pool,
                                                       const Datastore& datastore, const Encoder& encoder,
                                                       int context_len, int top_k) {
    auto sequences = build_user_sequences(history_pool);

    std::vector<PredictorExample> examples;
    examples.reserve(targets.size());
    for (const auto& target : targets) {
        PredictorExample ex;
        ex.target = &target;

        std::vector<Interaction> history;
        auto it = sequences.find(target.user_id);
        if (it != sequences.end()) {
            const auto& events = it->second.interactions;
            // most recent context_len events strictly earlier than the target
            auto end = std::lower_bound(events.begin(), events.end(), target.timestamp,
                                        [](const Interaction& e, std::int64_t ts) { return e.timestamp < ts; });
            auto begin = end - std::min<std::ptrdiff_t>(end - events.begin(), context_len);
            history.assign(begin, end);
        }
        ex.history_embedding = encoder.encode_values(history);
        ex.retrieved = retrieve_topk(target.features, datastore, top_k).records;
        examples.push_back(std::move(ex));
    }
    return examples;
}

}  // namespace lift
