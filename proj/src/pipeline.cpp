#include "lift/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <unistd.h>

#include "lift/bytes.hpp"

namespace lift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- config parsing helpers --------------------------------------------

[[noreturn]] void config_fail(const std::string& path, const std::string& why) {
    throw ConfigError("config: " + path + ": " + why);
}

const json* find_key(const json& j, const std::string& key) {
    if (!j.is_object()) return nullptr;
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

struct Section {
    const json& j;
    std::string path;

    Section sub(const std::string& key) const {
        const json* v = find_key(j, key);
        if (!v) {
            static const json empty = json::object();
            return {empty, path.empty() ? key : path + "." + key};
        }
        if (!v->is_object()) config_fail(path + "." + key, "expected an object");
        return {*v, path.empty() ? key : path + "." + key};
    }

    std::string where(const std::string& key) const { return path.empty() ? key : path + "." + key; }

    double number(const std::string& key, double def) const {
        const json* v = find_key(j, key);
        if (!v) return def;
        if (!v->is_number()) config_fail(where(key), "expected a number");
        return v->get<double>();
    }

    int integer(const std::string& key, int def) const {
        const json* v = find_key(j, key);
        if (!v) return def;
        if (!v->is_number_integer()) config_fail(where(key), "expected an integer");
        return v->get<int>();
    }

    std::uint64_t u64(const std::string& key, std::uint64_t def) const {
        const json* v = find_key(j, key);
        if (!v) return def;
        if (!v->is_number_unsigned() && !v->is_number_integer()) config_fail(where(key), "expected an integer");
        return v->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) const {
        const json* v = find_key(j, key);
        if (!v) return def;
        if (!v->is_boolean()) config_fail(where(key), "expected a boolean");
        return v->get<bool>();
    }

    std::string str(const std::string& key, const std::string& def, bool required = false) const {
        const json* v = find_key(j, key);
        if (!v) {
            if (required) config_fail(where(key), "missing required field");
            return def;
        }
        if (!v->is_string()) config_fail(where(key), "expected a string");
        return v->get<std::string>();
    }

    template <typename T>
    std::vector<T> array(const std::string& key, std::vector<T> def) const {
        const json* v = find_key(j, key);
        if (!v) return def;
        if (!v->is_array()) config_fail(where(key), "expected an array");
        std::vector<T> out;
        for (const auto& e : *v) {
            if (!e.is_number()) config_fail(where(key), "expected numeric entries");
            out.push_back(e.get<T>());
        }
        return out;
    }
};

std::string key_of(const json& j) { return hash_hex(fnv1a64(j.dump())); }

std::string file_hash(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config: data: path not resolvable: " + path);
    return hash_hex(fnv1a64(read_file_bytes(path)));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path.string());
    out << text;
    if (!out) throw Error("cannot write file: " + path.string());
}

void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

// --- stage keys ----------------------------------------------------------

json split_section(const PipelineConfig& c) {
    return json{{"retrieval", c.fractions.retrieval}, {"train", c.fractions.train}, {"test", c.fractions.test}};
}

json encoder_section(const PipelineConfig& c) {
    return json{{"embed_dim", c.encoder.embed_dim},   {"d_model", c.encoder.d_model},
                {"n_layers", c.encoder.n_layers},     {"n_heads", c.encoder.n_heads},
                {"max_seq_len", c.encoder.max_seq_len}, {"variant", to_string(c.encoder.variant)}};
}

json pretrain_section(const PipelineConfig& c) {
    return json{{"mask_ratio", c.pretrain.mask_ratio},
                {"epochs", c.pretrain.epochs},
                {"batch_size", c.pretrain.batch_size},
                {"lr", c.pretrain.adam.lr}};
}

json predictor_section(const PipelineConfig& c) {
    return json{{"mode", to_string(c.predictor.mode)}, {"mlp_hidden", c.predictor.mlp_hidden},
                {"epochs", c.predictor.epochs},        {"batch_size", c.predictor.batch_size},
                {"lr", c.predictor.adam.lr},           {"val_fraction", c.val_fraction}};
}

json synth_section(const PipelineConfig& c) {
    return json{{"n_users", c.synth.n_users},
                {"n_items", c.synth.n_items},
                {"n_genres", c.synth.n_genres},
                {"interest_transition_prob", c.synth.interest_transition_prob},
                {"session_length_mean", c.synth.session_length_mean},
                {"click_prob_match", c.synth.click_prob_match},
                {"click_prob_nomatch", c.synth.click_prob_nomatch},
                {"seed", c.synth.seed}};
}

std::string synth_key(const PipelineConfig& c) {
    return key_of(json{{"stage", "synth"}, {"synth", synth_section(c)}});
}

std::string split_key(const PipelineConfig& c, const std::string& data_hash) {
    return key_of(json{{"stage", "split"}, {"data", data_hash}, {"split", split_section(c)}});
}

std::string pretrain_key(const PipelineConfig& c, const std::string& data_hash) {
    return key_of(json{{"stage", "pretrain"},
                       {"upstream", split_key(c, data_hash)},
                       {"context_len", c.context_len},
                       {"encoder", encoder_section(c)},
                       {"pretrain", pretrain_section(c)},
                       {"seed", c.seed}});
}

std::string store_key(const PipelineConfig& c, const std::string& data_hash) {
    return key_of(json{{"stage", "build-store"}, {"upstream", pretrain_key(c, data_hash)},
                       {"context_len", c.context_len}});
}

std::string train_key(const PipelineConfig& c, const std::string& data_hash) {
    return key_of(json{{"stage", "train"},
                       {"upstream", store_key(c, data_hash)},
                       {"predictor", predictor_section(c)},
                       {"top_k", c.top_k},
                       {"seed", c.seed}});
}

// --- manifests -----------------------------------------------------------

fs::path manifest_path(const Workdir& wd, const std::string& stage, const std::string& key) {
    return wd.manifests() / (stage + "-" + key + ".json");
}

json require_manifest(const Workdir& wd, const std::string& stage, const std::string& key) {
    const fs::path path = manifest_path(wd, stage, key);
    if (!fs::exists(path))
        throw StageOrderError("stage '" + stage + "' has not produced its artifacts for this config; missing " +
                              path.string());
    return read_json_file(path);
}

StageResult finish_stage(const Workdir& wd, const PipelineConfig& config, const std::string& stage,
                         const std::string& key, json inputs, json outputs, json report = json()) {
    StageResult result;
    result.stage = stage;
    result.stage_key = key;
    result.manifest = json{{"version", 1},
                           {"stage", stage},
                           {"stage_key", key},
                           {"config_hash", config.config_hash()},
                           {"inputs", std::move(inputs)},
                           {"outputs", std::move(outputs)}};
    result.manifest_path = manifest_path(wd, stage, key);
    write_json_file(result.manifest_path, result.manifest);
    result.report = std::move(report);
    return result;
}

// Verify that a manifest-recorded artifact still exists with the recorded
// content hash; returns its absolute path.
fs::path verified_artifact(const Workdir& wd, const json& manifest, const std::string& output_name) {
    const json& outputs = manifest.at("outputs");
    if (!outputs.contains(output_name))
        throw StageOrderError("manifest for stage '" + manifest.at("stage").get<std::string>() +
                              "' lacks output '" + output_name + "'");
    const json& entry = outputs.at(output_name);
    const fs::path path = wd.root() / entry.at("path").get<std::string>();
    if (!fs::exists(path))
        throw StageOrderError("artifact missing: " + path.string());
    if (entry.contains("hash")) {
        const std::string actual = hash_hex(fnv1a64(read_file_bytes(path.string())));
        if (actual != entry.at("hash").get<std::string>())
            throw StageOrderError("artifact hash mismatch for " + path.string() +
                                  "; rerun the producing stage");
    }
    return path;
}

// --- shared stage plumbing ------------------------------------------------

struct DataContext {
    Dataset dataset;
    DatasetSplits splits;
    std::string data_hash;
};

DataContext load_data(const PipelineConfig& config) {
    DataContext ctx;
    ctx.data_hash = file_hash(config.data);
    ctx.dataset = parse_interactions(config.data);
    ctx.splits = temporal_split(ctx.dataset.interactions, config.fractions);
    return ctx;
}

EncoderConfig encoder_config_for(const PipelineConfig& config, const Dataset& dataset) {
    EncoderConfig cfg = config.encoder;
    cfg.field_count = dataset.field_count();
    cfg.mask_ratio = config.pretrain.mask_ratio;
    if (cfg.max_seq_len < config.context_len)
        throw ConfigError("config: encoder.max_seq_len: must be >= context_len");
    return cfg;
}

Encoder load_encoder(const Workdir& wd, const PipelineConfig& config, const Dataset& dataset,
                     const json& pretrain_manifest) {
    const fs::path ckpt = verified_artifact(wd, pretrain_manifest, "checkpoint");
    return Encoder(encoder_config_for(config, dataset), dataset.vocab_sizes(),
                   ParamStore::load(ckpt.string()));
}

std::string loss_curve_csv(const std::vector<double>& losses) {
    std::string text = "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
        text += std::to_string(i) + "," + format_double(losses[i]) + "\n";
    return text;
}

std::string training_log_csv(const TrainResult& result) {
    std::string text = "epoch,train_loss,val_auc,val_logloss\n";
    for (const auto& row : result.log)
        text += std::to_string(row.epoch) + "," + format_double(row.train_loss) + "," +
                format_double(row.val_auc) + "," + format_double(row.val_logloss) + "\n";
    return text;
}

json timing_to_json(const TimingReport& t) {
    return json{{"n_queries", t.n_queries},   {"mean_ms", t.mean_ms},
                {"median_ms", t.median_ms},   {"p95_ms", t.p95_ms},
                {"std_ms", t.std_ms},         {"retrieve_ms", t.retrieve_ms},
                {"encode_history_ms", t.encode_history_ms}, {"forward_ms", t.forward_ms}};
}

}  // namespace

// --- PipelineConfig -------------------------------------------------------

json PipelineConfig::to_json() const {
    PipelineConfig defaults;
    (void)defaults;
    json j;
    j["seed"] = seed;
    j["split"] = split_section(*this);
    j["context_len"] = context_len;
    j["top_k"] = top_k;
    j["encoder"] = encoder_section(*this);
    j["pretrain"] = pretrain_section(*this);
    j["predictor"] = predictor_section(*this);
    j["synth"] = synth_section(*this);
    j["eval"] = json{{"topn_cutoffs", topn_cutoffs}, {"topn_negatives", topn_negatives}, {"run_topn", run_topn}};
    j["ablate"] = json{{"seeds", ablation_seeds}};
    j["sweep"] = json{{"mask_rates", sweep_mask_rates},
                      {"top_k_values", sweep_top_k},
                      {"context_lens", sweep_context_len}};
    j["timing"] = json{{"n_queries", timing_queries}};
    return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    PipelineConfig c;
    Section root{j, ""};

    c.data = root.str("data", "", true);
    c.workdir = root.str("workdir", "", true);
    c.seed = root.u64("seed", c.seed);

    Section split = root.sub("split");
    c.fractions.retrieval = split.number("retrieval", c.fractions.retrieval);
    c.fractions.train = split.number("train", c.fractions.train);
    c.fractions.test = split.number("test", c.fractions.test);
    const double total = c.fractions.retrieval + c.fractions.train + c.fractions.test;
    if (std::abs(total - 1.0) > 1e-9) config_fail("split", "fractions must sum to 1");

    c.context_len = root.integer("context_len", c.context_len);
    if (c.context_len < 1) config_fail("context_len", "must be >= 1");
    c.top_k = root.integer("top_k", c.top_k);
    if (c.top_k < 1) config_fail("top_k", "must be >= 1");

    Section enc = root.sub("encoder");
    c.encoder.embed_dim = enc.integer("embed_dim", c.encoder.embed_dim);
    c.encoder.d_model = enc.integer("d_model", c.encoder.d_model);
    c.encoder.n_layers = enc.integer("n_layers", c.encoder.n_layers);
    c.encoder.n_heads = enc.integer("n_heads", c.encoder.n_heads);
    c.encoder.max_seq_len = enc.integer("max_seq_len", c.encoder.max_seq_len);
    try {
        c.encoder.variant = encoder_variant_from_string(enc.str("variant", to_string(c.encoder.variant)));
    } catch (const Error& e) {
        config_fail("encoder.variant", e.what());
    }

    Section pre = root.sub("pretrain");
    c.pretrain.mask_ratio = pre.number("mask_ratio", c.pretrain.mask_ratio);
    c.pretrain.epochs = pre.integer("epochs", c.pretrain.epochs);
    c.pretrain.batch_size = pre.integer("batch_size", c.pretrain.batch_size);
    c.pretrain.adam.lr = pre.number("lr", c.pretrain.adam.lr);
    if (c.pretrain.mask_ratio <= 0.0 || c.pretrain.mask_ratio >= 1.0)
        config_fail("pretrain.mask_ratio", "must lie in (0,1)");
    c.encoder.mask_ratio = c.pretrain.mask_ratio;

    Section prd = root.sub("predictor");
    try {
        c.predictor.mode = ablation_mode_from_string(prd.str("mode", to_string(c.predictor.mode)));
    } catch (const Error& e) {
        config_fail("predictor.mode", e.what());
    }
    c.predictor.mlp_hidden = prd.array<int>("mlp_hidden", c.predictor.mlp_hidden);
    c.predictor.epochs = prd.integer("epochs", c.predictor.epochs);
    c.predictor.batch_size = prd.integer("batch_size", c.predictor.batch_size);
    c.predictor.adam.lr = prd.number("lr", c.predictor.adam.lr);
    c.val_fraction = prd.number("val_fraction", c.val_fraction);
    if (c.val_fraction < 0.0 || c.val_fraction >= 1.0) config_fail("predictor.val_fraction", "must lie in [0,1)");
    c.predictor.top_k = c.top_k;

    Section syn = root.sub("synth");
    c.synth.n_users = syn.integer("n_users", c.synth.n_users);
    c.synth.n_items = syn.integer("n_items", c.synth.n_items);
    c.synth.n_genres = syn.integer("n_genres", c.synth.n_genres);
    c.synth.interest_transition_prob = syn.number("interest_transition_prob", c.synth.interest_transition_prob);
    c.synth.session_length_mean = syn.number("session_length_mean", c.synth.session_length_mean);
    c.synth.click_prob_match = syn.number("click_prob_match", c.synth.click_prob_match);
    c.synth.click_prob_nomatch = syn.number("click_prob_nomatch", c.synth.click_prob_nomatch);
    c.synth.seed = syn.u64("seed", c.synth.seed);

    Section ev = root.sub("eval");
    c.topn_cutoffs = ev.array<int>("topn_cutoffs", c.topn_cutoffs);
    c.topn_negatives = ev.integer("topn_negatives", c.topn_negatives);
    c.run_topn = ev.boolean("run_topn", c.run_topn);

    Section ab = root.sub("ablate");
    c.ablation_seeds = ab.array<std::uint64_t>("seeds", c.ablation_seeds);
    if (c.ablation_seeds.empty()) config_fail("ablate.seeds", "must not be empty");

    Section sw = root.sub("sweep");
    c.sweep_mask_rates = sw.array<double>("mask_rates", c.sweep_mask_rates);
    c.sweep_top_k = sw.array<int>("top_k_values", c.sweep_top_k);
    c.sweep_context_len = sw.array<int>("context_lens", c.sweep_context_len);

    Section tm = root.sub("timing");
    c.timing_queries = tm.integer("n_queries", c.timing_queries);

    // surface obviously broken numerology early, with field paths
    if (c.encoder.d_model % c.encoder.n_heads != 0)
        config_fail("encoder.d_model", "must be divisible by encoder.n_heads");
    return c;
}

std::string PipelineConfig::config_hash() const { return key_of(to_json()); }

RunConfig PipelineConfig::run_config() const {
    RunConfig rc;
    rc.fractions = fractions;
    rc.context_len = context_len;
    rc.top_k = top_k;
    rc.encoder = encoder;
    rc.pretrain = pretrain;
    rc.pretrain.seed = seed;
    rc.predictor = predictor;
    rc.predictor.seed = seed;
    return rc;
}

PipelineConfig load_config(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config: file not found: " + path);
    return PipelineConfig::from_json(read_json_file(path));
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // unquoted strings are strings
    }

    json* cursor = &config;
    std::size_t begin = 0;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
        if (key.empty()) throw ConfigError("config: bad override path: " + path);
        if (dot == std::string::npos) {
            (*cursor)[key] = value;
            break;
        }
        cursor = &(*cursor)[key];
        begin = dot + 1;
    }
}

// --- Workdir ---------------------------------------------------------------

Workdir::Workdir(const std::string& root) : root_(root) {
    if (root.empty()) throw ConfigError("config: workdir: must not be empty");
    fs::create_directories(root_);
    for (const char* sub : {"manifests", "checkpoints", "stores", "reports"})
        fs::create_directories(root_ / sub);

    lock_path_ = root_ / ".lock";
    const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw Error("workdir is locked by another run (remove " + lock_path_.string() +
                    " if that run is dead)");
    ::close(fd);
}

Workdir::~Workdir() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
}

// --- stages ----------------------------------------------------------------

StageResult run_synth(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    Dataset dataset = generate_synthetic(config.synth);
    write_csv(dataset, config.data);
    const std::string data_hash = file_hash(config.data);

    json report{{"rows", dataset.interactions.size()},
                {"fields", dataset.field_names},
                {"data_hash", data_hash}};
    return finish_stage(wd, config, "synth", synth_key(config), json{{"synth", synth_section(config)}},
                        json{{"data", json{{"hash", data_hash}}}}, report);
}

StageResult run_split(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);

    json report{{"counts",
                 json{{"retrieval", ctx.splits.retrieval.size()},
                      {"train", ctx.splits.train.size()},
                      {"test", ctx.splits.test.size()}}},
                {"boundary_retrieval_end", ctx.splits.boundary_retrieval_end},
                {"boundary_train_end", ctx.splits.boundary_train_end}};
    return finish_stage(wd, config, "split", split_key(config, ctx.data_hash),
                        json{{"data_hash", ctx.data_hash}, {"split", split_section(config)}},
                        json{{"boundaries", report}}, report);
}

StageResult run_pretrain(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);
    require_manifest(wd, "split", split_key(config, ctx.data_hash));

    PretrainCorpus corpus = build_pretrain_corpus(ctx.splits.retrieval, config.context_len);
    Encoder encoder(encoder_config_for(config, ctx.dataset), ctx.dataset.vocab_sizes(), config.seed);
    PretrainOptions options = config.pretrain;
    options.seed = config.seed;
    const std::vector<double> losses = pretrain(encoder, corpus, options);

    const auto bytes = encoder.params().serialize();
    const std::string ckpt_hash = hash_hex(fnv1a64(bytes));
    const std::string ckpt_name = "checkpoints/encoder-" + ckpt_hash + ".ckpt";
    write_file_bytes((wd.root() / ckpt_name).string(), bytes);

    // sidecar echoing the encoder configuration
    json sidecar{{"M", encoder.config().field_count},
                 {"w", encoder.config().embed_dim},
                 {"d_model", encoder.config().d_model},
                 {"n_layers", encoder.config().n_layers},
                 {"n_heads", encoder.config().n_heads},
                 {"L_max", encoder.config().max_seq_len},
                 {"v", encoder.config().output_dim()},
                 {"mask_ratio", encoder.config().mask_ratio},
                 {"variant", to_string(encoder.config().variant)},
                 {"vocab_sizes", ctx.dataset.vocab_sizes()},
                 {"config_hash", config.config_hash()},
                 {"pretrained", true}};
    write_json_file(wd.root() / (ckpt_name + ".meta.json"), sidecar);

    const std::string key = pretrain_key(config, ctx.data_hash);
    const std::string curve_name = "reports/pretrain-loss-" + key + ".csv";
    const std::string curve = loss_curve_csv(losses);
    write_text_file(wd.root() / curve_name, curve);

    json report{{"epochs", losses.size()}, {"losses", losses}, {"chunks", corpus.chunks.size()}};
    return finish_stage(
        wd, config, "pretrain", key,
        json{{"upstream", split_key(config, ctx.data_hash)}, {"pretrain", pretrain_section(config)}},
        json{{"checkpoint", json{{"path", ckpt_name}, {"hash", ckpt_hash}}},
             {"loss_curve", json{{"path", curve_name}, {"hash", hash_hex(fnv1a64(curve))}}}},
        report);
}

StageResult run_build_store(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);
    const json pretrain_manifest = require_manifest(wd, "pretrain", pretrain_key(config, ctx.data_hash));
    Encoder encoder = load_encoder(wd, config, ctx.dataset, pretrain_manifest);

    Datastore store = build_datastore(ctx.splits.retrieval, encoder, config.context_len);
    const auto bytes = serialize_datastore(store);
    const std::string store_hash = hash_hex(fnv1a64(bytes));
    const std::string store_name = "stores/datastore-" + store_hash + ".bin";
    write_file_bytes((wd.root() / store_name).string(), bytes);

    json sidecar{{"records", store.records.size()},
                 {"v", store.output_dim},
                 {"M", store.field_count},
                 {"distinct_keys", store.index.distinct_features()},
                 {"encoder_checkpoint_hash",
                  pretrain_manifest.at("outputs").at("checkpoint").at("hash").get<std::string>()},
                 {"config_hash", config.config_hash()}};
    write_json_file(wd.root() / (store_name + ".meta.json"), sidecar);

    json report{{"records", store.records.size()}, {"distinct_keys", store.index.distinct_features()}};
    return finish_stage(wd, config, "build-store", store_key(config, ctx.data_hash),
                        json{{"upstream", pretrain_key(config, ctx.data_hash)},
                             {"encoder_checkpoint_hash", sidecar.at("encoder_checkpoint_hash")}},
                        json{{"datastore", json{{"path", store_name}, {"hash", store_hash}}}}, report);
}

StageResult run_train(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);
    const json pretrain_manifest = require_manifest(wd, "pretrain", pretrain_key(config, ctx.data_hash));
    const json store_manifest = require_manifest(wd, "build-store", store_key(config, ctx.data_hash));
    Encoder encoder = load_encoder(wd, config, ctx.dataset, pretrain_manifest);
    Datastore store = load_datastore(verified_artifact(wd, store_manifest, "datastore").string());

    std::vector<Interaction> pool = ctx.splits.retrieval;
    pool.insert(pool.end(), ctx.splits.train.begin(), ctx.splits.train.end());
    std::vector<PredictorExample> examples = build_predictor_examples(
        ctx.splits.train, pool, store, encoder, config.context_len, config.top_k);

    // temporal tail of the train split held out for the epoch log
    const std::size_t n_val = std::size_t(config.val_fraction * double(examples.size()));
    std::vector<PredictorExample> val_examples(examples.end() - std::ptrdiff_t(n_val), examples.end());
    examples.resize(examples.size() - n_val);
    if (examples.empty()) throw EmptyDatasetError("train: no training examples left after validation split");

    PredictorConfig pred_cfg = config.predictor;
    pred_cfg.top_k = config.top_k;
    pred_cfg.seed = config.seed;
    Predictor predictor(pred_cfg, ctx.dataset.field_count(), config.encoder.embed_dim,
                        config.encoder.d_model, ctx.dataset.vocab_sizes(), config.seed);

    ValidationFn validation;
    if (!val_examples.empty()) {
        bool has_pos = false, has_neg = false;
        for (const auto& ex : val_examples) (ex.target->label ? has_pos : has_neg) = true;
        if (has_pos && has_neg)
            validation = [&val_examples](const Predictor& p) {
                EvalMetrics m = evaluate_predictor(p, val_examples);
                return std::make_pair(m.auc, m.logloss);
            };
    }
    const std::uint64_t encoder_checksum = encoder.params().value_checksum();
    TrainResult trained = train_predictor(predictor, examples, validation);
    if (encoder.params().value_checksum() != encoder_checksum)
        throw Error("train: frozen encoder parameters changed during predictor training");

    const auto bytes = predictor.params().serialize();
    const std::string ckpt_hash = hash_hex(fnv1a64(bytes));
    const std::string ckpt_name = "checkpoints/predictor-" + ckpt_hash + ".ckpt";
    write_file_bytes((wd.root() / ckpt_name).string(), bytes);

    json sidecar{{"mode", to_string(pred_cfg.mode)},
                 {"top_k", pred_cfg.top_k},
                 {"mlp_hidden", pred_cfg.mlp_hidden},
                 {"field_count", ctx.dataset.field_count()},
                 {"embed_dim", config.encoder.embed_dim},
                 {"context_dim", config.encoder.d_model},
                 {"datastore_hash", store_manifest.at("outputs").at("datastore").at("hash")},
                 {"encoder_checkpoint_hash",
                  pretrain_manifest.at("outputs").at("checkpoint").at("hash")},
                 {"config_hash", config.config_hash()}};
    write_json_file(wd.root() / (ckpt_name + ".meta.json"), sidecar);

    const std::string key = train_key(config, ctx.data_hash);
    const std::string log_name = "reports/train-log-" + key + ".csv";
    const std::string log_csv = training_log_csv(trained);
    write_text_file(wd.root() / log_name, log_csv);

    json log_rows = json::array();
    for (const auto& row : trained.log)
        log_rows.push_back(json{{"epoch", row.epoch},
                                {"train_loss", row.train_loss},
                                {"val_auc", row.val_auc},
                                {"val_logloss", row.val_logloss}});
    json report{{"epochs", trained.log.size()}, {"log", log_rows}};
    return finish_stage(
        wd, config, "train", key,
        json{{"upstream", store_key(config, ctx.data_hash)},
             {"datastore_hash", sidecar.at("datastore_hash")},
             {"encoder_checkpoint_hash", sidecar.at("encoder_checkpoint_hash")}},
        json{{"checkpoint", json{{"path", ckpt_name}, {"hash", ckpt_hash}}},
             {"training_log", json{{"path", log_name}, {"hash", hash_hex(fnv1a64(log_csv))}}}},
        report);
}

namespace {

struct LoadedChain {
    DataContext ctx;
    Encoder encoder;
    Datastore store;
    Predictor predictor;
};

LoadedChain load_chain(const Workdir& wd, const PipelineConfig& config) {
    DataContext ctx = load_data(config);
    const json pretrain_manifest = require_manifest(wd, "pretrain", pretrain_key(config, ctx.data_hash));
    const json store_manifest = require_manifest(wd, "build-store", store_key(config, ctx.data_hash));
    const json train_manifest = require_manifest(wd, "train", train_key(config, ctx.data_hash));

    // chain consistency: the trained predictor must reference exactly the
    // datastore and encoder checkpoints we are about to load
    const std::string encoder_hash =
        pretrain_manifest.at("outputs").at("checkpoint").at("hash").get<std::string>();
    const std::string store_hash =
        store_manifest.at("outputs").at("datastore").at("hash").get<std::string>();
    if (train_manifest.at("inputs").at("encoder_checkpoint_hash").get<std::string>() != encoder_hash)
        throw StageOrderError("train artifacts reference a different encoder checkpoint; rerun train");
    if (train_manifest.at("inputs").at("datastore_hash").get<std::string>() != store_hash)
        throw StageOrderError("train artifacts reference a different datastore; rerun train");

    Encoder encoder = load_encoder(wd, config, ctx.dataset, pretrain_manifest);
    Datastore store = load_datastore(verified_artifact(wd, store_manifest, "datastore").string());

    PredictorConfig pred_cfg = config.predictor;
    pred_cfg.top_k = config.top_k;
    pred_cfg.seed = config.seed;
    Predictor predictor(pred_cfg, ctx.dataset.field_count(), config.encoder.embed_dim,
                        config.encoder.d_model, ctx.dataset.vocab_sizes(), config.seed);
    ParamStore loaded = ParamStore::load(verified_artifact(wd, train_manifest, "checkpoint").string());
    for (const auto& name : predictor.params().names()) {
        Tensor& dst = predictor.params().get(name);
        const Tensor& src = loaded.get(name);
        if (src.shape() != dst.shape())
            throw CheckpointError("predictor checkpoint: shape mismatch for " + name);
        dst.raw_values() = src.values();
    }
    return LoadedChain{std::move(ctx), std::move(encoder), std::move(store), std::move(predictor)};
}

}  // namespace

StageResult run_eval(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    LoadedChain chain = load_chain(wd, config);

    std::vector<Interaction> pool = chain.ctx.splits.retrieval;
    pool.insert(pool.end(), chain.ctx.splits.train.begin(), chain.ctx.splits.train.end());
    std::vector<PredictorExample> test_examples =
        build_predictor_examples(chain.ctx.splits.test, pool, chain.store, chain.encoder,
                                 config.context_len, config.top_k);
    EvalMetrics metrics = evaluate_predictor(chain.predictor, test_examples);

    json report{{"version", 1},
                {"config_hash", config.config_hash()},
                {"seed", config.seed},
                {"mode", to_string(config.predictor.mode)},
                {"counts",
                 json{{"retrieval", chain.ctx.splits.retrieval.size()},
                      {"train", chain.ctx.splits.train.size()},
                      {"test", chain.ctx.splits.test.size()}}},
                {"metrics", json{{"auc", metrics.auc}, {"logloss", metrics.logloss}}}};

    if (config.run_topn) {
        Rng rng = Rng(config.seed).fork(0xD00D);
        auto sets = build_topn_sets(chain.ctx.dataset, chain.ctx.splits, chain.predictor, chain.encoder,
                                    chain.store, config.context_len, config.top_k, config.topn_negatives, rng);
        if (!sets.empty()) {
            TopNReport topn = topn_metrics(sets, config.topn_cutoffs);
            json tj{{"sets", sets.size()}, {"negatives", config.topn_negatives}, {"mrr", topn.mrr}};
            for (std::size_t c = 0; c < topn.cutoffs.size(); ++c) {
                tj["ndcg@" + std::to_string(topn.cutoffs[c])] = topn.ndcg[c];
                tj["hr@" + std::to_string(topn.cutoffs[c])] = topn.hr[c];
            }
            report["topn"] = tj;
        }
    }

    const std::string key = key_of(json{{"stage", "eval"},
                                        {"upstream", train_key(config, chain.ctx.data_hash)},
                                        {"run_topn", config.run_topn},
                                        {"topn_cutoffs", config.topn_cutoffs},
                                        {"topn_negatives", config.topn_negatives}});
    const std::string report_name = "reports/eval-" + key + ".json";
    write_json_file(wd.root() / report_name, report);

    return finish_stage(wd, config, "eval", key,
                        json{{"upstream", train_key(config, chain.ctx.data_hash)}},
                        json{{"report", json{{"path", report_name},
                                             {"hash", hash_hex(fnv1a64(report.dump(2) + "\n"))}}}},
                        report);
}

StageResult run_ablate(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);

    AblationReport ablation = run_ablation(ctx.dataset, config.run_config(), config.ablation_seeds);

    json modes = json::array();
    for (const auto& stats : ablation.modes)
        modes.push_back(json{{"mode", to_string(stats.mode)},
                             {"auc_per_seed", stats.auc_per_seed},
                             {"logloss_per_seed", stats.logloss_per_seed},
                             {"auc_mean", stats.auc_mean},
                             {"auc_std", stats.auc_std},
                             {"logloss_mean", stats.logloss_mean},
                             {"logloss_std", stats.logloss_std},
                             {"wall_seconds", stats.wall_seconds}});
    json report{{"version", 1},
                {"config", config.to_json()},
                {"config_hash", config.config_hash()},
                {"seeds", config.ablation_seeds},
                {"modes", modes}};
    // measurement timings make this report non-reproducible byte-for-byte,
    // so the manifest records only its path
    const std::string key = key_of(json{{"stage", "ablate"},
                                        {"data", ctx.data_hash},
                                        {"config", config.to_json()},
                                        {"seeds", config.ablation_seeds}});
    const std::string report_name = "reports/ablation-" + key + ".json";
    write_json_file(wd.root() / report_name, report);
    return finish_stage(wd, config, "ablate", key, json{{"data_hash", ctx.data_hash}},
                        json{{"report", json{{"path", report_name}}}}, report);
}

StageResult run_sweep_mask(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);

    auto rows = mask_rate_sweep(ctx.dataset, config.run_config(), config.sweep_mask_rates, config.seed);
    json rows_json = json::array();
    for (const auto& row : rows)
        rows_json.push_back(json{{"rate", row.rate},
                                 {"auc", row.auc},
                                 {"logloss", row.logloss},
                                 {"final_pretrain_loss", row.final_pretrain_loss}});
    json report{{"version", 1}, {"config_hash", config.config_hash()}, {"rows", rows_json}};

    const std::string key = key_of(json{{"stage", "sweep-mask"},
                                        {"data", ctx.data_hash},
                                        {"config", config.to_json()},
                                        {"rates", config.sweep_mask_rates}});
    const std::string report_name = "reports/sweep-mask-" + key + ".json";
    write_json_file(wd.root() / report_name, report);
    return finish_stage(wd, config, "sweep-mask", key, json{{"data_hash", ctx.data_hash}},
                        json{{"report", json{{"path", report_name}}}}, report);
}

StageResult run_sweep_kl(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);

    auto rows = kl_sweep(ctx.dataset, config.run_config(), config.sweep_top_k, config.sweep_context_len,
                         config.seed);
    json rows_json = json::array();
    for (const auto& row : rows)
        rows_json.push_back(json{{"top_k", row.top_k},
                                 {"context_len", row.context_len},
                                 {"auc", row.auc},
                                 {"logloss", row.logloss}});
    json report{{"version", 1}, {"config_hash", config.config_hash()}, {"rows", rows_json}};

    const std::string key = key_of(json{{"stage", "sweep-kl"},
                                        {"data", ctx.data_hash},
                                        {"config", config.to_json()},
                                        {"ks", config.sweep_top_k},
                                        {"ls", config.sweep_context_len}});
    const std::string report_name = "reports/sweep-kl-" + key + ".json";
    write_json_file(wd.root() / report_name, report);
    return finish_stage(wd, config, "sweep-kl", key, json{{"data_hash", ctx.data_hash}},
                        json{{"report", json{{"path", report_name}}}}, report);
}

StageResult run_audit(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    DataContext ctx = load_data(config);
    const json store_manifest = require_manifest(wd, "build-store", store_key(config, ctx.data_hash));
    Datastore store = load_datastore(verified_artifact(wd, store_manifest, "datastore").string());

    LeakageReport audit = leakage_audit(store, ctx.splits);
    json report{{"version", 1},
                {"passed", audit.passed},
                {"records_checked", audit.records_checked},
                {"message", audit.message},
                {"violating_sample_id", audit.violating_sample_id},
                {"max_offending_timestamp", audit.max_offending_timestamp}};

    const std::string key = key_of(json{{"stage", "audit"},
                                        {"data", ctx.data_hash},
                                        {"upstream", store_key(config, ctx.data_hash)}});
    const std::string report_name = "reports/audit-" + key + ".json";
    write_json_file(wd.root() / report_name, report);
    return finish_stage(wd, config, "audit", key,
                        json{{"upstream", store_key(config, ctx.data_hash)}},
                        json{{"report", json{{"path", report_name},
                                             {"hash", hash_hex(fnv1a64(report.dump(2) + "\n"))}}}},
                        report);
}

StageResult run_time(const PipelineConfig& config) {
    Workdir wd(config.workdir);
    LoadedChain chain = load_chain(wd, config);

    std::vector<Interaction> pool = chain.ctx.splits.retrieval;
    pool.insert(pool.end(), chain.ctx.splits.train.begin(), chain.ctx.splits.train.end());
    TimingReport timing = inference_timing(chain.encoder, chain.store, chain.predictor,
                                           chain.ctx.splits.test, pool, config.context_len,
                                           config.timing_queries);

    json report{{"version", 1}, {"config_hash", config.config_hash()}, {"timing", timing_to_json(timing)}};
    const std::string key = key_of(json{{"stage", "time"},
                                        {"upstream", train_key(config, chain.ctx.data_hash)},
                                        {"n_queries", config.timing_queries}});
    const std::string report_name = "reports/time-" + key + ".json";
    write_json_file(wd.root() / report_name, report);
    // timings are measurements; the manifest records the path only
    return finish_stage(wd, config, "time", key,
                        json{{"upstream", train_key(config, chain.ctx.data_hash)}},
                        json{{"report", json{{"path", report_name}}}}, report);
}

std::vector<KLSweepRow> kl_sweep(const Dataset& dataset, const RunConfig& base, const std::vector<int>& ks,
                                 const std::vector<int>& ls, std::uint64_t seed) {
    if (ks.empty() || ls.empty()) throw Error("kl_sweep: need at least one K and one L");
    const int max_k = *std::max_element(ks.begin(), ks.end());

    std::vector<KLSweepRow> rows;
    for (int context_len : ls) {
        RunConfig config = base;
        config.context_len = context_len;
        config.encoder.max_seq_len = std::max(config.encoder.max_seq_len, context_len);
        config.top_k = max_k;
        PipelineArtifacts artifacts = prepare_pipeline(dataset, config, seed);

        for (int top_k : ks) {
            // retrieval results are score-ordered, so the top-k prefix of the
            // widest retrieval equals retrieving with k directly
            RunConfig run = config;
            run.top_k = top_k;

            auto truncate = [&](const std::vector<PredictorExample>& in) {
                std::vector<PredictorExample> out = in;
                for (auto& ex : out)
                    if (int(ex.retrieved.size()) > top_k) ex.retrieved.resize(std::size_t(top_k));
                return out;
            };
            std::vector<PredictorExample> train_examples = truncate(artifacts.train_examples);
            std::vector<PredictorExample> test_examples = truncate(artifacts.test_examples);

            PredictorConfig pred_cfg = run.predictor;
            pred_cfg.top_k = top_k;
            pred_cfg.seed = seed;
            const auto& enc_cfg = artifacts.encoder->config();
            Predictor predictor(pred_cfg, enc_cfg.field_count, enc_cfg.embed_dim, enc_cfg.output_dim(),
                                artifacts.encoder->vocab_sizes(), seed);
            train_predictor(predictor, train_examples);
            EvalMetrics metrics = evaluate_predictor(predictor, test_examples);
            rows.push_back({top_k, context_len, metrics.auc, metrics.logloss});
        }
    }
    return rows;
}

}  // namespace lift
