#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lift/domain.hpp"
#include "lift/encoder.hpp"

namespace lift {

// Sparse index over categorical features: (field, value) -> ascending list
// of sample ids. Document frequency is the posting list length.
class InvertedIndex {
public:
    static std::uint64_t pack(FeatureValue f) {
        return (std::uint64_t(f.field) << 32) | std::uint64_t(f.value);
    }

    void insert(std::uint64_t sample_id, const std::vector<FeatureValue>& features);
    void finalize();  // sort posting lists

    std::uint64_t total_samples() const { return total_samples_; }
    std::uint64_t doc_frequency(FeatureValue f) const;
    const std::vector<std::uint64_t>* postings(FeatureValue f) const;
    std::size_t distinct_features() const { return postings_.size(); }

    // Entries sorted by (field, value); used for serialization and audits.
    std::vector<std::pair<std::uint64_t, const std::vector<std::uint64_t>*>> sorted_entries() const;

    void set_total_samples(std::uint64_t n) { total_samples_ = n; }
    void add_posting_list(FeatureValue f, std::vector<std::uint64_t> ids);

private:
    std::uint64_t total_samples_ = 0;
    std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> postings_;
};

// Index the given interactions under their interaction ids.
InvertedIndex build_inverted_index(const std::vector<Interaction>& samples);

// Smoothed IDF on raw document counts. Kept sign-exact: features present in
// more than half the samples get a negative weight, no flooring.
double idf_from_counts(std::uint64_t total, std::uint64_t doc_freq);

// IDF of one feature against an index; absent features count as frequency 0.
double idf(const InvertedIndex& index, FeatureValue feature);

// Sum of query-feature IDFs over exact per-field matches.
double rank_score(const std::vector<FeatureValue>& query, const std::vector<FeatureValue>& candidate,
                  const InvertedIndex& index);

// One datastore entry: the raw feature key plus the encoded history and
// future context embeddings of the anchor interaction.
struct DatastoreRecord {
    std::uint64_t sample_id = 0;
    std::int64_t anchor_timestamp = 0;
    std::vector<FeatureValue> key;
    std::vector<double> history_embedding;
    std::vector<double> future_embedding;

    friend bool operator==(const DatastoreRecord&, const DatastoreRecord&) = default;
};

// Immutable key-value store over the retrieval split: records sorted by
// sample id, plus the inverted index over their keys.
struct Datastore {
    int output_dim = 0;   // embedding width of both context halves
    int field_count = 0;  // key width
    std::vector<DatastoreRecord> records;
    InvertedIndex index;

    const DatastoreRecord* find(std::uint64_t sample_id) const;
    void rebuild_lookup();

private:
    std::unordered_map<std::uint64_t, std::size_t> by_id_;
};

struct RetrievalResult {
    std::vector<const DatastoreRecord*> records;  // <= K, score-descending
    std::vector<double> scores;                   // matching, non-increasing
};

// Top-K retrieval by accumulating IDF weights along the query's posting
// lists. Only candidates with a strictly positive aggregate score are
// returned; ties break on ascending sample id. Equivalent to exhaustively
// scoring every sample with rank_score under the same rules.
RetrievalResult retrieve_topk(const std::vector<FeatureValue>& query, const Datastore& datastore, int top_k);

// Encode every retrieval-split interaction's context (history and future
// windows from its user's retrieval-split sequence) with the given encoder
// and index the keys. Empty context halves store the encoder's
// null-sequence embedding.
Datastore build_datastore(const std::vector<Interaction>& retrieval, const Encoder& encoder, int context_len);

// Binary serialization, little-endian, CRC-32 tailed:
//   magic "LIFTSTOR", version u32, v u32, M u32, record count u64,
//   records (sample_id u64, timestamp i64, M x (field u16, value u32),
//   2*v float64), index (entry count u64, per entry field u16, value u32,
//   df u64, posting list u64[df]), crc32 u32 over all preceding bytes.
void save_datastore(const Datastore& datastore, const std::string& path);
std::vector<std::uint8_t> serialize_datastore(const Datastore& datastore);
Datastore load_datastore(const std::string& path);
Datastore deserialize_datastore(const std::vector<std::uint8_t>& bytes);

}  // namespace lift
