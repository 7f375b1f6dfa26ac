#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairadapter/fair_training.hpp"

namespace fairadapter {

struct RunConfig {
  TrainConfig train;
  double test_fraction = 0.3;
};

/// Keys accepted in config files and as overrides.
const std::vector<std::string>& config_keys();

/// Reads a flat JSON object of settings (if a path is given), then applies
/// `overrides` (key -> textual value) on top. Flags beat the file, the file
/// beats the defaults. Unknown keys, wrong types and out-of-range values throw
/// UsageError; an unreadable file throws IoError.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::map<std::string, std::string>& overrides);

}  // namespace fairadapter
