#include "voltguard/grid/scenario_io.hpp"

#include "voltguard/error.hpp"

#include <fstream>

namespace voltguard::grid {

void to_json(nlohmann::json& j, const FaultSpec& f) {
    j = {{"bus", f.bus}, {"start_s", f.start_s}, {"clearing_s", f.clearing_s}, {"shunt", f.shunt}};
}

void from_json(const nlohmann::json& j, FaultSpec& f) {
    f.bus = j.at("bus").get<int>();
    f.start_s = j.value("start_s", 0.1);
    f.clearing_s = j.value("clearing_s", 0.18);
    f.shunt = j.value("shunt", 1e4);
}

void to_json(nlohmann::json& j, const ScenarioConfig& s) {
    j = {{"schema_version", kScenarioSchemaVersion},
         {"id", s.id},
         {"system", s.system},
         {"zone_scaling", s.zone_scaling},
         {"motor_share", s.motor_share},
         {"fault", s.fault},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ScenarioConfig& s) {
    if (j.value("schema_version", kScenarioSchemaVersion) != kScenarioSchemaVersion) {
        throw ConfigError("unsupported scenario schema_version");
    }
    s.id = j.value("id", std::string{});
    s.system = j.at("system").get<std::string>();
    s.zone_scaling = j.at("zone_scaling").get<std::vector<double>>();
    s.motor_share = j.at("motor_share").get<std::vector<double>>();
    s.fault = j.at("fault").get<FaultSpec>();
    s.seed = j.value("seed", std::uint64_t{0});
}

nlohmann::json scenarios_to_json(const std::vector<ScenarioConfig>& scenarios) {
    return {{"schema_version", kScenarioSchemaVersion}, {"scenarios", scenarios}};
}

std::vector<ScenarioConfig> scenarios_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("schema_version").get<int>() != kScenarioSchemaVersion) {
            throw ConfigError("unsupported scenario file schema_version");
        }
        return doc.at("scenarios").get<std::vector<ScenarioConfig>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario file: ") + e.what());
    }
}

void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioConfig>& scenarios) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << scenarios_to_json(scenarios).dump(2) << '\n';
}

std::vector<ScenarioConfig> read_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return scenarios_from_json(doc);
}

}  // namespace voltguard::grid
