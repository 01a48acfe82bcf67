#include "lift/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "lift/rng.hpp"

namespace lift {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

std::int64_t parse_i64(const std::string& s, bool& ok) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    ok = ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
    return v;
}

}  // namespace

Dataset parse_interactions(const std::string& path,
                           const std::optional<std::vector<std::string>>& expected_schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": missing header row");
    const auto header = split_csv_line(line);

    if (expected_schema && header != *expected_schema) {
        std::string want;
        for (const auto& c : *expected_schema) want += (want.empty() ? "" : ",") + c;
        throw SchemaError(path + ": header does not match expected schema (" + want + ")");
    }

    auto column_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError(path + ": missing column " + name);
        return int(it - header.begin());
    };
    const int col_user = column_of("user_id");
    const int col_item = column_of("item_id");
    const int col_ts = column_of("timestamp");
    const int col_label = column_of("label");

    // Feature fields: user_id, item_id, then every other column in header order.
    std::vector<int> feature_cols = {col_user, col_item};
    Dataset ds;
    ds.field_names = {"user_id", "item_id"};
    for (int c = 0; c < int(header.size()); ++c) {
        if (c == col_user || c == col_item || c == col_ts || c == col_label) continue;
        feature_cols.push_back(c);
        ds.field_names.push_back(header[std::size_t(c)]);
    }

    const int n_fields = int(feature_cols.size());
    ds.vocab.assign(std::size_t(n_fields), {"<pad>"});
    std::vector<std::unordered_map<std::string, std::uint32_t>> vocab_index(static_cast<std::size_t>(n_fields));

    auto intern = [&](int field, const std::string& raw) -> std::uint32_t {
        auto& idx = vocab_index[std::size_t(field)];
        auto it = idx.find(raw);
        if (it != idx.end()) return it->second;
        const auto id = std::uint32_t(ds.vocab[std::size_t(field)].size());
        ds.vocab[std::size_t(field)].push_back(raw);
        idx.emplace(raw, id);
        return id;
    };

    std::uint64_t row = 0;
    int line_no = 1;  // header was line 1
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));

        Interaction it;
        it.interaction_id = row;
        bool ok = false;
        it.timestamp = parse_i64(cells[std::size_t(col_ts)], ok);
        if (!ok)
            throw ParseError(path + ": line " + std::to_string(line_no) + ": non-integer timestamp '" +
                             cells[std::size_t(col_ts)] + "'");
        const std::string& label = cells[std::size_t(col_label)];
        if (label == "0") {
            it.label = 0;
        } else if (label == "1") {
            it.label = 1;
        } else {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": label '" + label +
                             "' outside {0,1}");
        }

        it.features.resize(std::size_t(n_fields));
        for (int f = 0; f < n_fields; ++f) {
            it.features[std::size_t(f)] = FeatureValue{std::uint16_t(f),
                                                       intern(f, cells[std::size_t(feature_cols[std::size_t(f)])])};
        }
        it.user_id = it.features[0].value;
        it.item_id = it.features[1].value;
        ds.interactions.push_back(std::move(it));
        ++row;
    }
    return ds;
}

void write_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path);

    out << "user_id,item_id";
    for (std::size_t f = 2; f < dataset.field_names.size(); ++f) out << ',' << dataset.field_names[f];
    out << ",timestamp,label\n";

    std::vector<const Interaction*> ordered;
    ordered.reserve(dataset.interactions.size());
    for (const auto& it : dataset.interactions) ordered.push_back(&it);
    std::sort(ordered.begin(), ordered.end(),
              [](const Interaction* a, const Interaction* b) { return a->interaction_id < b->interaction_id; });

    for (const Interaction* it : ordered) {
        for (std::size_t f = 0; f < it->features.size(); ++f) {
            if (f > 0) out << ',';
            out << dataset.vocab[f][it->features[f].value];
        }
        out << ',' << it->timestamp << ',' << it->label << '\n';
    }
    if (!out) throw Error("cannot write file: " + path);
}

PretrainCorpus build_pretrain_corpus(const std::vector<Interaction>& retrieval, int context_len) {
    if (context_len < 2) throw Error("build_pretrain_corpus: context_len must be >= 2");

    PretrainCorpus corpus;
    for (const auto& [user, seq] : build_user_sequences(retrieval)) {
        const auto& events = seq.interactions;
        std::size_t begin = 0;
        while (begin < events.size()) {
            const std::size_t len = std::min(std::size_t(context_len), events.size() - begin);
            if (len < 2) break;  // drop a trailing remainder of length 1
            InteractionSequence chunk;
            chunk.user_id = user;
            chunk.interactions.assign(events.begin() + std::ptrdiff_t(begin),
                                      events.begin() + std::ptrdiff_t(begin + len));
            corpus.chunks.push_back(std::move(chunk));
            begin += len;
        }
    }
    return corpus;
}

Dataset generate_synthetic(const SynthConfig& config) {
    if (config.n_users < 1 || config.n_items < 1 || config.n_genres < 1)
        throw Error("generate_synthetic: counts must be positive");
    if (config.click_prob_match < 0 || config.click_prob_match > 1 ||
        config.click_prob_nomatch < 0 || config.click_prob_nomatch > 1 ||
        config.interest_transition_prob < 0 || config.interest_transition_prob > 1)
        throw Error("generate_synthetic: probabilities must lie in [0,1]");
    if (config.session_length_mean <= 0) throw Error("generate_synthetic: session_length_mean must be positive");

    Rng rng(config.seed);

    // Phase 1: item catalog.
    std::vector<int> item_genre(static_cast<std::size_t>(config.n_items));
    std::vector<std::vector<int>> items_of_genre(std::size_t(config.n_genres));
    for (std::size_t i = 0; i < item_genre.size(); ++i) {
        item_genre[i] = int(rng.uniform_below(std::uint64_t(config.n_genres)));
        items_of_genre[std::size_t(item_genre[i])].push_back(int(i));
    }

    // Phase 2: events per user.
    std::vector<int> events_per_user(static_cast<std::size_t>(config.n_users));
    for (auto& n : events_per_user) n = std::max(2, rng.poisson(config.session_length_mean));

    // Phase 3: session blocks. Each user's event budget is cut into sessions
    // of mean length 20 and the sessions are shuffled into one global
    // stream, so users come and go in bursts the way logged traffic does.
    constexpr double kSessionLen = 20.0;
    std::vector<std::pair<int, int>> sessions;  // (user, length)
    for (int u = 0; u < config.n_users; ++u) {
        int remaining = events_per_user[std::size_t(u)];
        while (remaining > 0) {
            const int len = std::min(remaining, std::max(1, rng.poisson(kSessionLen)));
            sessions.emplace_back(u, len);
            remaining -= len;
        }
    }
    for (std::size_t i = sessions.size(); i > 1; --i)
        std::swap(sessions[i - 1], sessions[rng.uniform_below(i)]);
    std::vector<int> schedule;
    for (const auto& [user, len] : sessions) schedule.insert(schedule.end(), std::size_t(len), user);

    // Phase 4: interest chains (one extra state so each event can look one
    // step ahead).
    std::vector<std::vector<int>> chain(std::size_t(config.n_users));
    for (int u = 0; u < config.n_users; ++u) {
        auto& c = chain[std::size_t(u)];
        c.resize(std::size_t(events_per_user[std::size_t(u)]) + 1);
        c[0] = int(rng.uniform_below(std::uint64_t(config.n_genres)));
        for (std::size_t k = 1; k < c.size(); ++k) {
            if (rng.bernoulli(config.interest_transition_prob))
                c[k] = int(rng.uniform_below(std::uint64_t(config.n_genres)));
            else
                c[k] = c[k - 1];
        }
    }

    // Phase 5: walk the schedule and emit events.
    Dataset ds;
    ds.field_names = {"user_id", "item_id", "genre"};
    ds.vocab.resize(3);
    ds.vocab[0].push_back("<pad>");
    for (int u = 0; u < config.n_users; ++u) ds.vocab[0].push_back("u" + std::to_string(u));
    ds.vocab[1].push_back("<pad>");
    for (int i = 0; i < config.n_items; ++i) ds.vocab[1].push_back("i" + std::to_string(i));
    ds.vocab[2].push_back("<pad>");
    for (int g = 0; g < config.n_genres; ++g) ds.vocab[2].push_back("g" + std::to_string(g));

    std::vector<int> step(std::size_t(config.n_users), 0);
    ds.interactions.reserve(schedule.size());
    for (std::size_t t = 0; t < schedule.size(); ++t) {
        const int u = schedule[t];
        const int k = step[std::size_t(u)]++;
        // Feedback-biased impression: half the time an item of the user's
        // current interest genre, otherwise any item.
        int item;
        const auto& pool = items_of_genre[std::size_t(chain[std::size_t(u)][std::size_t(k)])];
        if (rng.bernoulli(0.5) && !pool.empty())
            item = pool[rng.uniform_below(pool.size())];
        else
            item = int(rng.uniform_below(std::uint64_t(config.n_items)));
        const int genre = item_genre[std::size_t(item)];
        const bool match = genre == chain[std::size_t(u)][std::size_t(k)] ||
                           genre == chain[std::size_t(u)][std::size_t(k) + 1];
        const int label = rng.bernoulli(match ? config.click_prob_match : config.click_prob_nomatch) ? 1 : 0;

        Interaction it;
        it.interaction_id = t;
        it.timestamp = std::int64_t(t);
        it.user_id = std::uint32_t(u + 1);
        it.item_id = std::uint32_t(item + 1);
        it.label = label;
        it.features = {FeatureValue{0, std::uint32_t(u + 1)},
                       FeatureValue{1, std::uint32_t(item + 1)},
                       FeatureValue{2, std::uint32_t(genre + 1)}};
        ds.interactions.push_back(std::move(it));
    }
    return ds;
}

}  // namespace lift
