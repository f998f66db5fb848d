#pragma once

#include "voltguard/cli/config.hpp"
#include "voltguard/cli/manifest.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace voltguard::cli {

/// Flags shared by every subcommand.
struct CommonArgs {
    std::filesystem::path config;  ///< empty: built-in defaults
    std::uint64_t seed = 1;
    std::filesystem::path out = "out";
};

/// `VOLTGUARD_OUT`, when set, replaces the output directory.
std::filesystem::path resolve_out(const std::filesystem::path& requested);

RunConfig load_run_config(const CommonArgs& common);

/// scenarios.json
RunManifest cmd_gen(const CommonArgs& common, std::size_t count);

struct LabelArgs {
    std::filesystem::path scenarios;
    std::optional<int> actions_per_scenario;
    std::optional<std::vector<double>> action_grid;
    std::optional<std::size_t> max_chunks;  ///< stop early, leaving a resumable checkpoint
};
/// labeled.csv, label_checkpoint.json, label_failures.log
RunManifest cmd_label(const CommonArgs& common, const LabelArgs& args);

enum class MarginMode { Full, Active };
struct TrainMarginArgs {
    std::filesystem::path data;
    MarginMode mode = MarginMode::Full;
    std::optional<int> folds;
};
/// estimator.json, folds.csv and, for active learning, audit.csv plus audit_fold<k>.csv
RunManifest cmd_train_margin(const CommonArgs& common, const TrainMarginArgs& args);

struct TrainAgentArgs {
    bool with_safety = true;
    std::filesystem::path margin;
    std::optional<int> episodes;
};
/// policy.json, curves.csv, curves.svg
RunManifest cmd_train_agent(const CommonArgs& common, const TrainAgentArgs& args);

struct EvaluateArgs {
    std::filesystem::path policy;
    std::filesystem::path margin;
    std::filesystem::path scenarios;
    std::vector<std::string> methods{"proposed", "raw", "typical", "traversal"};
    bool oracle = false;  ///< correct with the ground-truth oracle instead of the estimator
    std::vector<std::filesystem::path> curves;  ///< overlaid in reward_curves.svg
};
/// results.csv, episodes_<method>.csv, shed_vs_voltage.svg and optionally reward_curves.svg
RunManifest cmd_evaluate(const CommonArgs& common, const EvaluateArgs& args);

struct TraceArgs {
    std::filesystem::path margin;
    std::filesystem::path scenarios;
    std::size_t index = 0;
    std::optional<std::vector<double>> a0;  ///< default: no shedding
};
/// trace.csv, trace.svg
RunManifest cmd_trace(const CommonArgs& common, const TraceArgs& args);

}  // namespace voltguard::cli
