#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lift/domain.hpp"

namespace lift {

// A parsed dataset: interactions plus the per-field categorical vocabularies
// that map raw strings to dense ids. Id 0 is reserved for padding in every
// field, so vocab[f][0] is always the pad token.
struct Dataset {
    std::vector<Interaction> interactions;
    std::vector<std::string> field_names;         // feature fields only, field order
    std::vector<std::vector<std::string>> vocab;  // vocab[field][value_id] -> raw string

    int field_count() const { return int(field_names.size()); }
    std::vector<int> vocab_sizes() const {
        std::vector<int> sizes;
        sizes.reserve(vocab.size());
        for (const auto& v : vocab) sizes.push_back(int(v.size()));
        return sizes;
    }
};

// Parse a CSV interaction log. The header must contain user_id, item_id,
// timestamp and label; every other column is a categorical feature field.
// user_id and item_id double as feature fields 0 and 1, remaining feature
// fields follow in header order. Vocabulary ids are minted first-seen,
// starting at 1. interaction_id is the data row index (0-based).
//
// When expected_schema is given, the header must match it exactly.
Dataset parse_interactions(const std::string& path,
                           const std::optional<std::vector<std::string>>& expected_schema = std::nullopt);

// Write a dataset back to CSV in the canonical column order
// (user_id, item_id, <extra fields...>, timestamp, label), one row per
// interaction in interaction_id order. Reparsing reproduces the dataset.
void write_csv(const Dataset& dataset, const std::string& path);

// Consecutive per-user chunks of the retrieval split, the encoder's
// pretraining inputs.
struct PretrainCorpus {
    std::vector<InteractionSequence> chunks;
    std::string source_split_tag = "retrieval";
};

// Cut every user's retrieval-split sequence into consecutive chunks of
// exactly context_len. A trailing remainder of length >= 2 is kept as a
// shorter chunk; remainders of length < 2 are dropped.
PretrainCorpus build_pretrain_corpus(const std::vector<Interaction>& retrieval, int context_len);

// Synthetic interaction log with a planted, controllable dependence between
// labels and the surrounding sequence.
struct SynthConfig {
    int n_users = 500;
    int n_items = 200;
    int n_genres = 8;
    double interest_transition_prob = 0.15;
    double session_length_mean = 100.0;  // mean events per user
    double click_prob_match = 0.8;
    double click_prob_nomatch = 0.2;
    std::uint64_t seed = 1;
};

// Simulate users whose latent interest (a genre) evolves as a Markov chain,
// browsing a feedback-biased item stream the way logged recommender traffic
// does: half of all impressions are drawn from the user's current interest
// genre, the rest uniformly from the catalog.
//
// The procedure is fixed, fully seeded, and draws randomness in five phases
// so it can be replayed independently:
//   1. item catalog: genre[i] = uniform_below(n_genres) for i = 0..n_items-1
//   2. event counts: events[u] = max(2, poisson(session_length_mean)) per user
//   3. schedule: each user's budget is cut into session blocks, user by user
//      (block length min(remaining, max(1, poisson(20)))), then the block
//      list is Fisher-Yates shuffled (descending index, swap with
//      uniform_below(i + 1)) and concatenated into the global stream
//   4. interest chains, user by user: chain[u][0] = uniform_below(n_genres);
//      each later step first draws b = bernoulli(interest_transition_prob),
//      then, if b, a uniform_below(n_genres) replacement genre
//   5. events along the schedule: first draw f = bernoulli(0.5); if f and the
//      current interest genre has items, item = pool[uniform_below(|pool|)]
//      over that genre's catalog (ascending item order), else
//      item = uniform_below(n_items); the label is
//      bernoulli(click_prob_match) when the item's genre equals the user's
//      interest at this step or the next, else bernoulli(click_prob_nomatch)
//
// Feature fields are (user_id, item_id, genre); timestamps are the global
// event index. Value ids are raw index + 1 (0 stays reserved for padding).
Dataset generate_synthetic(const SynthConfig& config);

}  // namespace lift
