#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fairadapter {

/// Entry point of the `fairadapter` tool. `args` excludes the program name.
/// Returns 0 on success, 1 on domain errors (invalid data, undefined metrics,
/// dimension mismatches) and 2 on usage or I/O errors. Diagnostics go to `err`;
/// data only goes to files.
int run_cli(const std::vector<std::string>& args, std::ostream& err);

}  // namespace fairadapter
