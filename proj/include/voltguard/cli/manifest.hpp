#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace voltguard::cli {

std::string tool_version();

struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version;
    std::string started_at;   ///< UTC, ISO 8601
    std::string finished_at;

    [[nodiscard]] nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    void write(const std::filesystem::path& dir) const;  ///< `<dir>/manifest.json`
};

std::string utc_now();

}  // namespace voltguard::cli
