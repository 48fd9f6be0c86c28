#pragma once

#include <string>

namespace flexgrid {

// Verbosity from the FLEXGRID_LOG environment variable: unset or 0 is
// silent, 1 reports progress, 2 adds per-round detail.
int log_level();

// Writes to stderr when level is within the configured verbosity.
void log_line(int level, const std::string& msg);

}  // namespace flexgrid
