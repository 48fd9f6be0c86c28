#include "flexgrid/log.hpp"

#include <cstdlib>
#include <iostream>

namespace flexgrid {

int log_level() {
  const char* raw = std::getenv("FLEXGRID_LOG");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  const long parsed = std::strtol(raw, &end, 10);
  if (end == raw || parsed < 0) return 0;
  return parsed > 2 ? 2 : static_cast<int>(parsed);
}

void log_line(int level, const std::string& msg) {
  if (level <= log_level() && level > 0) std::cerr << "[flexgrid] " << msg << "\n";
}

}  // namespace flexgrid
