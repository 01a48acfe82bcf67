#include "lift/retriever.hpp"

#include <algorithm>
#include <cmath>

#include "lift/bytes.hpp"

namespace lift {

void InvertedIndex::insert(std::uint64_t sample_id, const std::vector<FeatureValue>& features) {
    for (const auto& f : features) postings_[pack(f)].push_back(sample_id);
    ++total_samples_;
}

void InvertedIndex::finalize() {
    for (auto& [key, list] : postings_) std::sort(list.begin(), list.end());
}

std::uint64_t InvertedIndex::doc_frequency(FeatureValue f) const {
    auto it = postings_.find(pack(f));
    return it == postings_.end() ? 0 : it->second.size();
}

const std::vector<std::uint64_t>* InvertedIndex::postings(FeatureValue f) const {
    auto it = postings_.find(pack(f));
    return it == postings_.end() ? nullptr : &it->second;
}

std::vector<std::pair<std::uint64_t, const std::vector<std::uint64_t>*>> InvertedIndex::sorted_entries() const {
    std::vector<std::pair<std::uint64_t, const std::vector<std::uint64_t>*>> entries;
    entries.reserve(postings_.size());
    for (const auto& [key, list] : postings_) entries.emplace_back(key, &list);
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return entries;
}

void InvertedIndex::add_posting_list(FeatureValue f, std::vector<std::uint64_t> ids) {
    postings_[pack(f)] = std::move(ids);
}

InvertedIndex build_inverted_index(const std::vector<Interaction>& samples) {
    InvertedIndex index;
    for (const auto& s : samples) index.insert(s.interaction_id, s.features);
    index.finalize();
    return index;
}

double idf_from_counts(std::uint64_t total, std::uint64_t doc_freq) {
    return std::log((double(total) - double(doc_freq) + 0.5) / (double(doc_freq) + 0.5));
}

double idf(const InvertedIndex& index, FeatureValue feature) {
    if (index.total_samples() == 0) throw IndexEmptyError("idf: index holds no samples");
    return idf_from_counts(index.total_samples(), index.doc_frequency(feature));
}

double rank_score(const std::vector<FeatureValue>& query, const std::vector<FeatureValue>& candidate,
                  const InvertedIndex& index) {
    if (query.size() != candidate.size())
        throw ShapeError("rank_score: query has " + std::to_string(query.size()) + " fields, candidate " +
                         std::to_string(candidate.size()));
    double score = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j)
        if (query[j].value == candidate[j].value) score += idf(index, query[j]);
    return score;
}

const DatastoreRecord* Datastore::find(std::uint64_t sample_id) const {
    auto it = by_id_.find(sample_id);
    return it == by_id_.end() ? nullptr : &records[it->second];
}

void Datastore::rebuild_lookup() {
    by_id_.clear();
    by_id_.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) by_id_.emplace(records[i].sample_id, i);
}

RetrievalResult retrieve_topk(const std::vector<FeatureValue>& query, const Datastore& datastore, int top_k) {
    if (top_k < 1) throw Error("retrieve_topk: top_k must be >= 1");

    // Accumulate in query-field order so per-candidate sums match an
    // exhaustive rank_score evaluation bit for bit.
    std::unordered_map<std::uint64_t, double> scores;
    for (const auto& feature : query) {
        const auto* list = datastore.index.postings(feature);
        if (!list) continue;
        const double weight = idf(datastore.index, feature);
        for (std::uint64_t id : *list) scores[id] += weight;
    }

    std::vector<std::pair<std::uint64_t, double>> ranked;
    ranked.reserve(scores.size());
    for (const auto& [id, score] : scores)
        if (score > 0.0) ranked.emplace_back(id, score);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (int(ranked.size()) > top_k) ranked.resize(std::size_t(top_k));

    RetrievalResult result;
    result.records.reserve(ranked.size());
    result.scores.reserve(ranked.size());
    for (const auto& [id, score] : ranked) {
        const auto* rec = datastore.find(id);
        if (!rec) throw Error("retrieve_topk: index references unknown sample " + std::to_string(id));
        result.records.push_back(rec);
        result.scores.push_back(score);
    }
    return result;
}

Datastore build_datastore(const std::vector<Interaction>& retrieval, const Encoder& encoder, int context_len) {
    if (context_len < 1) throw Error("build_datastore: context_len must be >= 1");

    Datastore store;
    store.output_dim = encoder.config().output_dim();
    store.field_count = encoder.config().field_count;
    store.records.reserve(retrieval.size());

    NoGradGuard guard;
    for (const auto& [user, seq] : build_user_sequences(retrieval)) {
        (void)user;
        for (int anchor = 0; anchor < int(seq.interactions.size()); ++anchor) {
            const auto& target = seq.interactions[std::size_t(anchor)];
            Context ctx = extract_context(seq, anchor, context_len);

            DatastoreRecord rec;
            rec.sample_id = target.interaction_id;
            rec.anchor_timestamp = target.timestamp;
            rec.key = target.features;
            rec.history_embedding = encoder.encode(ctx.history).embedding.values();
            rec.future_embedding = encoder.encode(ctx.future).embedding.values();
            store.records.push_back(std::move(rec));
        }
    }

    std::sort(store.records.begin(), store.records.end(),
              [](const DatastoreRecord& a, const DatastoreRecord& b) { return a.sample_id < b.sample_id; });
    for (const auto& rec : store.records) store.index.insert(rec.sample_id, rec.key);
    store.index.finalize();
    store.rebuild_lookup();
    return store;
}

std::vector<std::uint8_t> serialize_datastore(const Datastore& datastore) {
    ByteWriter w;
    w.put_str("LIFTSTOR");
    w.put_u32(1);  // version
    w.put_u32(std::uint32_t(datastore.output_dim));
    w.put_u32(std::uint32_t(datastore.field_count));
    w.put_u64(datastore.records.size());
    for (const auto& rec : datastore.records) {
        w.put_u64(rec.sample_id);
        w.put_i64(rec.anchor_timestamp);
        for (const auto& f : rec.key) {
            w.put_u16(f.field);
            w.put_u32(f.value);
        }
        for (double v : rec.history_embedding) w.put_f64(v);
        for (double v : rec.future_embedding) w.put_f64(v);
    }
    const auto entries = datastore.index.sorted_entries();
    w.put_u64(entries.size());
    for (const auto& [key, list] : entries) {
        w.put_u16(std::uint16_t(key >> 32));
        w.put_u32(std::uint32_t(key & 0xFFFFFFFFu));
        w.put_u64(list->size());
        for (std::uint64_t id : *list) w.put_u64(id);
    }
    w.put_u32(crc32(w.bytes()));
    return w.take();
}

void save_datastore(const Datastore& datastore, const std::string& path) {
    write_file_bytes(path, serialize_datastore(datastore));
}

Datastore deserialize_datastore(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw CorruptDatastoreError("datastore: file too small");
    const std::uint32_t stored_crc = std::uint32_t(bytes[bytes.size() - 4]) |
                                     std::uint32_t(bytes[bytes.size() - 3]) << 8 |
                                     std::uint32_t(bytes[bytes.size() - 2]) << 16 |
                                     std::uint32_t(bytes[bytes.size() - 1]) << 24;
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw CorruptDatastoreError("datastore: checksum mismatch");

    Datastore store;
    try {
        ByteReader r(bytes.data(), bytes.size() - 4);
        if (r.get_str(8) != "LIFTSTOR") throw CorruptDatastoreError("datastore: bad magic");
        const auto version = r.get_u32();
        if (version != 1) throw CorruptDatastoreError("datastore: unsupported version " + std::to_string(version));
        store.output_dim = int(r.get_u32());
        store.field_count = int(r.get_u32());
        const auto n_records = r.get_u64();
        store.records.reserve(n_records);
        for (std::uint64_t i = 0; i < n_records; ++i) {
            DatastoreRecord rec;
            rec.sample_id = r.get_u64();
            rec.anchor_timestamp = r.get_i64();
            rec.key.resize(std::size_t(store.field_count));
            for (auto& f : rec.key) {
                f.field = r.get_u16();
                f.value = r.get_u32();
            }
            rec.history_embedding.resize(std::size_t(store.output_dim));
            for (auto& v : rec.history_embedding) v = r.get_f64();
            rec.future_embedding.resize(std::size_t(store.output_dim));
            for (auto& v : rec.future_embedding) v = r.get_f64();
            store.records.push_back(std::move(rec));
        }
        store.index.set_total_samples(n_records);
        const auto n_entries = r.get_u64();
        for (std::uint64_t e = 0; e < n_entries; ++e) {
            FeatureValue f;
            f.field = r.get_u16();
            f.value = r.get_u32();
            const auto df = r.get_u64();
            std::vector<std::uint64_t> list(static_cast<std::size_t>(df));
            for (auto& id : list) id = r.get_u64();
            store.index.add_posting_list(f, std::move(list));
        }
        if (!r.exhausted()) throw CorruptDatastoreError("datastore: trailing bytes");
    } catch (const ByteReader::Truncated&) {
        throw CorruptDatastoreError("datastore: truncated file");
    }
    store.rebuild_lookup();
    return store;
}

Datastore load_datastore(const std::string& path) { return deserialize_datastore(read_file_bytes(path)); }

}  // namespace lift
