#pragma once

#include <string>

#include "dan/experiments.hpp"

namespace dan {

/// Built-in defaults; config/default.json mirrors these values.
LabConfig default_lab_config();

/// Parses a JSON config. Missing keys keep their defaults; malformed values
/// throw ConfigError naming the key.
LabConfig parse_config(const std::string& json_text);
LabConfig load_config(const std::string& path);

std::string dump_config(const LabConfig& cfg);

/// Path of the config shipped with the sources.
std::string shipped_config_path();

}  // namespace dan
