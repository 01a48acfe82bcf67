#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "lift/errors.hpp"

namespace lift {

// One categorical feature value. Each sample carries exactly one value per
// field, and value id 0 is reserved for padding in every field's vocabulary.
struct FeatureValue {
    std::uint16_t field = 0;
    std::uint32_t value = 0;

    friend bool operator==(const FeatureValue&, const FeatureValue&) = default;
};

// A single user-item event with categorical features and a binary label.
struct Interaction {
    std::uint64_t interaction_id = 0;
    std::uint32_t user_id = 0;
    std::uint32_t item_id = 0;
    std::int64_t timestamp = 0;
    std::vector<FeatureValue> features;  // exactly one per field, in field order
    int label = 0;                       // 0 or 1

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Total, deterministic event order: timestamp ascending, interaction id as
// the tie-breaker. Used everywhere a dataset or sequence is ordered.
inline bool event_order(const Interaction& a, const Interaction& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.interaction_id < b.interaction_id;
}

// All interactions of one user, sorted by event_order.
struct InteractionSequence {
    std::uint32_t user_id = 0;
    std::vector<Interaction> interactions;
};

// The interactions immediately before and after an anchor, oldest first.
// No padding is stored here; short windows keep their true lengths.
struct Context {
    std::vector<Interaction> history;
    std::vector<Interaction> future;
    int history_true_len = 0;
    int future_true_len = 0;
};

// Temporal three-way partition. Boundaries record the last timestamp kept in
// the earlier part so leakage checks don't need the original dataset.
struct DatasetSplits {
    std::vector<Interaction> retrieval;
    std::vector<Interaction> train;
    std::vector<Interaction> test;
    std::int64_t boundary_retrieval_end = 0;
    std::int64_t boundary_train_end = 0;
};

struct SplitFractions {
    double retrieval = 0.6;
    double train = 0.2;
    double test = 0.2;
};

// Sort by (timestamp, interaction_id), then cut: the first floor(r*N) records
// form the retrieval part, the next floor(t*N) the train part, the remainder
// the test part.
DatasetSplits temporal_split(const std::vector<Interaction>& interactions, const SplitFractions& fractions);

// Group interactions per user, each sequence sorted by event_order.
std::map<std::uint32_t, InteractionSequence> build_user_sequences(const std::vector<Interaction>& interactions);

// History = the up-to-L interactions before the anchor, future = the up-to-L
// after it. The anchor itself belongs to neither window.
Context extract_context(const InteractionSequence& sequence, int anchor_index, int context_len);

}  // namespace lift
