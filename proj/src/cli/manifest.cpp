#include "voltguard/cli/manifest.hpp"

#include "voltguard/error.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#ifndef VOLTGUARD_VERSION
#define VOLTGUARD_VERSION "0.0.0"
#endif

namespace voltguard::cli {

std::string tool_version() { return VOLTGUARD_VERSION; }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json RunManifest::to_json() const {
    return {{"command", command},       {"config_digest", config_digest}, {"seed", seed},
            {"inputs", inputs},         {"outputs", outputs},             {"tool_version", tool_version},
            {"started_at", started_at}, {"finished_at", finished_at}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.inputs = j.at("inputs").get<std::vector<std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        m.tool_version = j.at("tool_version").get<std::string>();
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
}

void RunManifest::write(const std::filesystem::path& dir) const {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ConfigError("cannot write manifest in '" + dir.string() + "'");
    out << to_json().dump(2) << '\n';
}

}  // namespace voltguard::cli
