#pragma once

#include <string>
#include <vector>

namespace flowtse {

// Umbrella CLI entry point. args excludes the program name. Returns a
// process exit code; errors are printed to stderr.
int cli_run(const std::vector<std::string>& args);

}  // namespace flowtse
