#pragma once

#include <map>
#include <string>
#include <vector>

#include "flexgrid/opman.hpp"

namespace flexgrid {

const char* tool_version();

// 64-bit FNV-1a of the raw bytes, lower-case hex.
std::string fnv1a_hex(const std::string& bytes);

// Table writers: RFC 4180 lines (CRLF, header row, '.' decimals), identical
// bytes for identical inputs. The corrected state column appears only when a
// corrected state is supplied. Violation flags reflect the given report.
std::string bus_table_csv(const GridModel& grid, const Limits& limits, const PfSolution& init,
                          const PfSolution* corrected, const ViolationReport& report);
std::string branch_table_csv(const GridModel& grid, const Limits& limits, const PfSolution& init,
                             const PfSolution* corrected, const ViolationReport& report);
std::string delta_table_csv(const DispatchResult& result);
std::string sweep_summary_csv(const std::vector<SweepEntry>& entries);

// Human-readable dispatch summary; carries no timings so reruns byte-match.
std::string dispatch_report_text(const DispatchResult& result);

// The only artifact allowed to differ between reruns (wall times).
std::string run_manifest_json(const std::string& command, const std::vector<std::string>& inputs,
                              const std::string& config_hash,
                              const std::map<std::string, double>& wall_ms, int exit_status);

struct RunArtifacts {
  int exit_status = 0;  // 0 ok, 4 violations remain, 5 optimizer infeasible
  std::string summary;  // stdout lines, newline-separated
};

// Artifact drivers behind the library boundary. Input and power-flow errors
// propagate as exceptions; the caller maps them onto its status codes.
RunArtifacts run_powerflow(const std::string& grid_path, const std::string& out_dir,
                           const std::string& command);
RunArtifacts run_solve(const ScenarioConfig& config, const std::string& out_dir,
                       const std::string& command, const std::string& config_hash);
RunArtifacts run_sweep(const ScenarioConfig& config, const std::string& out_dir,
                       const std::string& command, const std::string& config_hash);

}  // namespace flexgrid
