#pragma once

#include "voltguard/grid/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace voltguard::grid {

inline constexpr int kScenarioSchemaVersion = 1;

void to_json(nlohmann::json& j, const FaultSpec& f);
void from_json(const nlohmann::json& j, FaultSpec& f);
void to_json(nlohmann::json& j, const ScenarioConfig& s);
void from_json(const nlohmann::json& j, ScenarioConfig& s);

/// `{"schema_version": 1, "scenarios": [...]}`. Throws ConfigError on a schema mismatch.
nlohmann::json scenarios_to_json(const std::vector<ScenarioConfig>& scenarios);
std::vector<ScenarioConfig> scenarios_from_json(const nlohmann::json& doc);

void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioConfig>& scenarios);
std::vector<ScenarioConfig> read_scenarios(const std::filesystem::path& path);

}  // namespace voltguard::grid
