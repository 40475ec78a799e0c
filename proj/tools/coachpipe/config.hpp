#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace coachpipe::cli {

/// Every recognised key with its default. Keys whose default is null accept
/// any scalar.
nlohmann::json default_config();

/// Layers, lowest precedence first: defaults, the config file (when given),
/// COACHPIPE__SECTION__KEY environment variables, `--override a.b=value`
/// pairs. Unknown keys and type mismatches throw ConfigError.
nlohmann::json load_config(const std::filesystem::path& file,
                           const std::map<std::string, std::string>& environment,
                           const std::vector<std::string>& overrides);

/// COACHPIPE__* entries of the process environment.
std::map<std::string, std::string> config_environment();

/// Sets one dotted key; the value is parsed as JSON when it parses, else kept
/// as a string.
void set_key(nlohmann::json& config, const std::string& dotted_key, const std::string& value);

/// Per-stage seed derived from the global one.
std::uint64_t stage_seed(std::uint64_t global, std::string_view stage);

}  // namespace coachpipe::cli
