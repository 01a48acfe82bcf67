// Command-line front end: one subcommand per pipeline stage, a single JSON
// config, and deterministic artifacts under the workdir.
//
// Exit codes: 0 success, 2 config error, 3 stage-order error,
// 4 audit failure, 5 internal error.

#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lift/pipeline.hpp"

namespace {

using lift::PipelineConfig;
using lift::StageResult;

struct CommonArgs {
    std::string config_path;
    std::string workdir_override;
    std::int64_t seed_override = -1;
    std::vector<std::string> overrides;
};

PipelineConfig resolve_config(const CommonArgs& args) {
    if (!std::filesystem::exists(args.config_path))
        throw lift::ConfigError("config: file not found: " + args.config_path);
    nlohmann::json raw;
    {
        std::ifstream in(args.config_path);
        try {
            in >> raw;
        } catch (const nlohmann::json::exception& e) {
            throw lift::ConfigError("config: bad JSON in " + args.config_path + ": " + e.what());
        }
    }
    for (const auto& assignment : args.overrides) lift::apply_override(raw, assignment);
    if (!args.workdir_override.empty()) raw["workdir"] = args.workdir_override;
    if (args.seed_override >= 0) raw["seed"] = std::uint64_t(args.seed_override);
    return PipelineConfig::from_json(raw);
}

void print_kv(const std::string& key, const std::string& value) {
    std::printf("  %-28s %s\n", key.c_str(), value.c_str());
}

void print_report(const StageResult& result) {
    std::printf("[%s] done (manifest %s)\n", result.stage.c_str(),
                result.manifest_path.filename().string().c_str());
    if (result.report.is_null() || result.report.empty()) return;

    if (result.stage == "ablate") {
        std::printf("  %-14s %10s %10s %10s %10s\n", "mode", "auc", "auc_std", "logloss", "wall_s");
        for (const auto& mode : result.report.at("modes"))
            std::printf("  %-14s %10.4f %10.4f %10.4f %10.2f\n",
                        mode.at("mode").get<std::string>().c_str(), mode.at("auc_mean").get<double>(),
                        mode.at("auc_std").get<double>(), mode.at("logloss_mean").get<double>(),
                        mode.at("wall_seconds").get<double>());
        return;
    }
    if (result.stage == "sweep-mask") {
        std::printf("  %-10s %10s %10s %16s\n", "rate", "auc", "logloss", "pretrain_loss");
        for (const auto& row : result.report.at("rows"))
            std::printf("  %-10.3f %10.4f %10.4f %16.4f\n", row.at("rate").get<double>(),
                        row.at("auc").get<double>(), row.at("logloss").get<double>(),
                        row.at("final_pretrain_loss").get<double>());
        return;
    }
    if (result.stage == "sweep-kl") {
        std::printf("  %-6s %-6s %10s %10s\n", "K", "L", "auc", "logloss");
        for (const auto& row : result.report.at("rows"))
            std::printf("  %-6d %-6d %10.4f %10.4f\n", row.at("top_k").get<int>(),
                        row.at("context_len").get<int>(), row.at("auc").get<double>(),
                        row.at("logloss").get<double>());
        return;
    }
    for (const auto& [key, value] : result.report.items())
        print_kv(key, value.dump());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lift: retrieval-enhanced sequential recommendation pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::vector<std::pair<std::string, std::function<StageResult(const PipelineConfig&)>>> stages = {
        {"synth", lift::run_synth},         {"split", lift::run_split},
        {"pretrain", lift::run_pretrain},   {"build-store", lift::run_build_store},
        {"train", lift::run_train},         {"eval", lift::run_eval},
        {"ablate", lift::run_ablate},       {"sweep-mask", lift::run_sweep_mask},
        {"sweep-kl", lift::run_sweep_kl},   {"audit", lift::run_audit},
        {"time", lift::run_time},
    };
    const std::vector<std::string> descriptions = {
        "generate a synthetic interaction log",
        "temporally partition the dataset",
        "pretrain the sequence encoder on the retrieval split",
        "encode contexts and build the retrievable datastore",
        "train the label predictor against the datastore",
        "score the test split (AUC/LogLoss, optional top-N)",
        "train all four context-ablation modes and compare",
        "sweep pretraining mask rates",
        "sweep retrieval count and context length",
        "verify the datastore leaks nothing past the retrieval boundary",
        "measure per-query inference latency",
    };

    std::string selected;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        CLI::App* sub = app.add_subcommand(stages[i].first, descriptions[i]);
        sub->add_option("--config", args.config_path, "pipeline config JSON")->required();
        sub->add_option("--workdir", args.workdir_override, "override workdir");
        sub->add_option("--seed", args.seed_override, "override seed");
        sub->add_option("--set", args.overrides, "override a config field, e.g. predictor.epochs=5");
        sub->callback([&selected, name = stages[i].first] { selected = name; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const PipelineConfig config = resolve_config(args);
        for (const auto& [name, stage] : stages) {
            if (name != selected) continue;
            StageResult result = stage(config);
            print_report(result);
            if (name == "audit" && !result.report.at("passed").get<bool>()) {
                std::fprintf(stderr, "audit FAILED: %s\n",
                             result.report.at("message").get<std::string>().c_str());
                return 4;
            }
            return 0;
        }
        std::fprintf(stderr, "unknown subcommand\n");
        return 5;
    } catch (const lift::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const lift::StageOrderError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    }
}
