#pragma once

#include "voltguard/agent/baselines.hpp"
#include "voltguard/agent/sac.hpp"
#include "voltguard/env/scmdp.hpp"
#include "voltguard/margin/active.hpp"
#include "voltguard/safety/projection.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace voltguard::cli {

struct LabelSettings {
    int actions_per_scenario = 5;
    std::vector<double> action_grid;  ///< non-empty: uniform actions at these fractions instead of random ones
    double max_shed = 1.0;
    std::size_t chunk = 64;           ///< samples per resume checkpoint
};

struct EstimatorSettings {
    margin::EstimatorShape shape{};
    margin::TrainOptions train{};
    int folds = 5;
    double epsilon_label = 0.0;
};

/// Everything a run reads from `--config`. Missing keys keep their defaults.
struct RunConfig {
    std::string system = "two-bus";
    env::SamplingRanges ranges{};
    grid::SimOptions sim{};
    env::RewardParams reward{};
    safety::SafetyConfig safety{};
    EstimatorSettings estimator{};
    margin::ALConfig active{};
    agent::SacConfig sac{};
    agent::TypicalLsConfig typical{};
    LabelSettings label{};
    nlohmann::json source = nlohmann::json::object();  ///< the parsed file, for the digest

    void validate() const;
};

/// Throws ConfigError on unreadable files, malformed JSON, unknown presets or invalid values.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);

/// FNV-1a 64 over the canonical (sorted-key, compact) serialisation.
std::uint64_t config_digest(const nlohmann::json& j);
std::string hex_digest(std::uint64_t digest);

}  // namespace voltguard::cli
