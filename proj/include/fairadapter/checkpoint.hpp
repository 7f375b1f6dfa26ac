#pragma once

#include <filesystem>

#include "fairadapter/adapter_math.hpp"

namespace fairadapter {

inline constexpr const char* kCheckpointFormat = "fairadapter-checkpoint";
inline constexpr int kCheckpointFormatVersion = 1;

// JSON lines: a header with dim, hidden and score path, then one line per
// parameter group (fair_adapter, classify_adapter, fair_head, classify_head)
// holding row-major flattened arrays.
void write_checkpoint(const ModelParamsd& model, const std::filesystem::path& path);
ModelParamsd read_checkpoint(const std::filesystem::path& path);

}  // namespace fairadapter
