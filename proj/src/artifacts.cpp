// Byte-stable run artifacts: CSV tables, the dispatch report, the manifest,
// and the directory-filling drivers behind the library boundary.
#include "flexgrid/artifacts.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flexgrid/convexify.hpp"
#include "flexgrid/errors.hpp"

namespace flexgrid {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";
constexpr const char* kCrlf = "\r\n";

std::string fmt(double x) {
  if (x == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << content;
}

Eigen::VectorXd loading_ratios(const GridModel& grid, const Limits& limits,
                               const PfSolution& state) {
  Eigen::VectorXd ratios = branch_currents(grid, state);
  for (Eigen::Index b = 0; b < ratios.size(); ++b) {
    ratios(b) /= limits.imax[static_cast<size_t>(b)];
  }
  return ratios;
}

std::string violation_lines(const ViolationReport& report, const std::string& indent) {
  std::string out;
  for (const VoltageViolation& v : report.voltage) {
    const char* side = v.v < v.bound ? "below" : "above";
    out += indent + "bus " + std::to_string(v.bus) + ": v " + fmt(v.v) + " " + side + " " +
           fmt(v.bound) + " by " + fmt(v.margin) + "\n";
  }
  for (const CurrentViolation& c : report.current) {
    out += indent + "branch " + std::to_string(c.branch) + ": loading " + fmt(c.ratio) +
           " of limit\n";
  }
  return out;
}

// Geometry the optimizer actually consumed, in absolute coordinates.
std::string segmented_to_json_text(const SegmentedFor& seg) {
  json root;
  root["bus_id"] = seg.bus_id;
  root["dims"] = seg.dims;
  root["op0"] = {{"p", seg.op0.p}, {"q", seg.op0.q}, {"v", seg.op0.v}};
  root["c_max"] = seg.c_max;
  root["segments"] = json::array();
  if (seg.dims == 2) {
    for (const Segment2D& s : seg.seg2) {
      root["segments"].push_back({{"ki", s.ki},
                                  {"p_c_min", s.p_c_min},
                                  {"dp_max", s.dp_max},
                                  {"m_up", s.m_up},
                                  {"m_lo", s.m_lo},
                                  {"q_c_init_up", s.q_c_init_up},
                                  {"q_c_init_lo", s.q_c_init_lo}});
    }
  } else {
    for (const Segment3D& s : seg.seg3) {
      root["segments"].push_back({{"ki", s.ki},
                                  {"li", s.li},
                                  {"p_c_min", s.p_c_min},
                                  {"dp_max", s.dp_max},
                                  {"v_c_min", s.v_c_min},
                                  {"dv_max", s.dv_max},
                                  {"m_up", s.m_up},
                                  {"m_lo", s.m_lo},
                                  {"q_c_init_up", s.q_c_init_up},
                                  {"q_c_init_lo", s.q_c_init_lo}});
    }
  }
  return root.dump(2) + "\n";
}

void write_geometry(const ScenarioConfig& config, const std::vector<PqvFor>& regions,
                    const fs::path& out_dir) {
  fs::create_directories(out_dir / "geometry");
  for (const PqvFor& raw : regions) {
    const PqvFor region = shrink_for(raw, config.options.for_scale);
    const std::string stem = "bus_" + std::to_string(region.bus_id);
    if (config.method == Method::Convex) {
      const TriangulatedHull hull = convex_hull(for_point_cloud(region));
      write_file(out_dir / "geometry" / (stem + "_hull.json"),
                 hull_to_json_text(hull, half_spaces(hull, region.bus_id)));
    } else {
      const SegmentedFor seg = config.method == Method::Milp2d
                                   ? segment_2d(region, config.options.k_max)
                                   : segment_3d(region, config.options.k_max,
                                                config.options.l_max);
      write_file(out_dir / "geometry" / (stem + "_segments.json"), segmented_to_json_text(seg));
    }
  }
}

void write_dispatch_tables(const GridModel& grid, const Limits& limits,
                           const DispatchResult& result, const fs::path& dir) {
  write_file(dir / "bus.csv", bus_table_csv(grid, limits, result.initial_state,
                                            &result.final_state, result.initial_report));
  write_file(dir / "branch.csv", branch_table_csv(grid, limits, result.initial_state,
                                                  &result.final_state, result.initial_report));
  write_file(dir / "deltas.csv", delta_table_csv(result));
  write_file(dir / "report.txt", dispatch_report_text(result));
}

int dispatch_exit(const DispatchResult& result) {
  if (result.success) return 0;
  if (result.status.rfind("optimizer infeasible", 0) == 0) return 5;
  if (result.status == "optimizer unbounded") return 1;
  return 4;
}

}  // namespace

const char* tool_version() { return kVersion; }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string bus_table_csv(const GridModel& grid, const Limits& limits, const PfSolution& init,
                          const PfSolution* corrected, const ViolationReport& report) {
  std::set<int> flagged;
  for (const VoltageViolation& v : report.voltage) flagged.insert(v.bus);
  std::string out = corrected ? "id,v_init,v_opt,vmin,vmax,flag" : "id,v_init,vmin,vmax,flag";
  out += kCrlf;
  for (size_t i = 0; i < grid.buses.size(); ++i) {
    const Bus& b = grid.buses[i];
    out += std::to_string(b.id) + "," + fmt(init.v(static_cast<Eigen::Index>(i)));
    if (corrected) out += "," + fmt(corrected->v(static_cast<Eigen::Index>(i)));
    out += "," + fmt(limits.vmin[i]) + "," + fmt(limits.vmax[i]) + ",";
    if (flagged.count(b.id)) out += "VIOLATION";
    out += kCrlf;
  }
  return out;
}

std::string branch_table_csv(const GridModel& grid, const Limits& limits, const PfSolution& init,
                             const PfSolution* corrected, const ViolationReport& report) {
  std::set<int> flagged;
  for (const CurrentViolation& c : report.current) flagged.insert(c.branch);
  const Eigen::VectorXd before = loading_ratios(grid, limits, init);
  Eigen::VectorXd after;
  if (corrected) after = loading_ratios(grid, limits, *corrected);
  std::string out = corrected ? "id,ratio_init,ratio_opt,flag" : "id,ratio_init,flag";
  out += kCrlf;
  for (size_t b = 0; b < grid.branches.size(); ++b) {
    out += std::to_string(grid.branches[b].id) + "," + fmt(before(static_cast<Eigen::Index>(b)));
    if (corrected) out += "," + fmt(after(static_cast<Eigen::Index>(b)));
    out += ",";
    if (flagged.count(grid.branches[b].id)) out += "VIOLATION";
    out += kCrlf;
  }
  return out;
}

std::string delta_table_csv(const DispatchResult& result) {
  std::string out = std::string("bus,dp,dq,member") + kCrlf;
  for (const auto& [bus, dp] : result.dp) {
    out += std::to_string(bus) + "," + fmt(dp) + "," + fmt(result.dq.at(bus)) + "," +
           (result.membership.at(bus) ? "true" : "false") + kCrlf;
  }
  return out;
}

std::string sweep_summary_csv(const std::vector<SweepEntry>& entries) {
  std::string out = std::string("level,iterations,success,displacement") + kCrlf;
  for (const SweepEntry& e : entries) {
    const bool ok = !e.failed && e.result.success;
    out += fmt(e.q_level) + "," + std::to_string(e.result.iterations) + "," +
           (ok ? "true" : "false") + "," + fmt(e.displacement) + kCrlf;
  }
  return out;
}

std::string dispatch_report_text(const DispatchResult& result) {
  std::string out = "corrective dispatch report\n";
  out += "method: " + to_string(result.method) + "\n";
  out += "status: " + result.status + "\n";
  out += std::string("success: ") + (result.success ? "true" : "false") + "\n";
  out += "optimization rounds: " + std::to_string(result.iterations) + "\n";
  out += "initial violations: " + std::to_string(result.initial_report.voltage.size()) +
         " voltage, " + std::to_string(result.initial_report.current.size()) + " current\n";
  out += violation_lines(result.initial_report, "  ");
  if (result.final_report.empty()) {
    out += "final violations: none\n";
  } else {
    out += "final violations: " + std::to_string(result.final_report.voltage.size()) +
           " voltage, " + std::to_string(result.final_report.current.size()) + " current\n";
    out += violation_lines(result.final_report, "  ");
  }
  out += "applied deltas:\n";
  double sum_dp = 0.0, sum_dq = 0.0;
  for (const auto& [bus, dp] : result.dp) {
    const double dq = result.dq.at(bus);
    sum_dp += std::abs(dp);
    sum_dq += std::abs(dq);
    out += "  bus " + std::to_string(bus) + ": dp " + fmt(dp) + " dq " + fmt(dq) + " member " +
           (result.membership.at(bus) ? "true" : "false") + "\n";
  }
  if (!result.trace.empty()) {
    out += "round trace:\n";
    for (const IterationStat& stat : result.trace) {
      out += "  round " + std::to_string(stat.index + 1) + ": " +
             std::to_string(stat.voltage_violations) + " voltage, " +
             std::to_string(stat.current_violations) + " current -> objective " +
             fmt(stat.objective) + "\n";
    }
  }
  out += "totals: sum|dp| " + fmt(sum_dp) + "  sum|dq| " + fmt(sum_dq) + "\n";
  return out;
}

std::string run_manifest_json(const std::string& command, const std::vector<std::string>& inputs,
                              const std::string& config_hash,
                              const std::map<std::string, double>& wall_ms, int exit_status) {
  json root;
  root["command"] = command;
  root["inputs"] = inputs;
  root["config_hash"] = config_hash;
  root["tool_version"] = kVersion;
  root["wall_ms"] = json::object();
  for (const auto& [phase, ms] : wall_ms) root["wall_ms"][phase] = ms;
  root["exit_status"] = exit_status;
  return root.dump(2) + "\n";
}

RunArtifacts run_powerflow(const std::string& grid_path, const std::string& out_dir,
                           const std::string& command) {
  const std::string bytes = read_file(grid_path);
  const GridModel grid = grid_from_json_text(bytes, grid_path);
  const Limits limits = limits_from_grid(grid);
  fs::create_directories(out_dir);
  const std::string hash = fnv1a_hex(bytes);

  const auto t0 = std::chrono::steady_clock::now();
  PfSolution state;
  try {
    state = solve_powerflow(grid);
  } catch (const ConvergenceError&) {
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_file(fs::path(out_dir) / "manifest.json",
               run_manifest_json(command, {grid_path}, hash, {{"powerflow", ms}}, 3));
    throw;
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const ViolationReport report = detect(grid, state, limits);
  write_file(fs::path(out_dir) / "bus.csv", bus_table_csv(grid, limits, state, nullptr, report));
  write_file(fs::path(out_dir) / "branch.csv",
             branch_table_csv(grid, limits, state, nullptr, report));
  write_file(fs::path(out_dir) / "manifest.json",
             run_manifest_json(command, {grid_path}, hash, {{"powerflow", ms}}, 0));

  RunArtifacts out;
  out.exit_status = 0;
  out.summary = "power flow converged in " + std::to_string(state.iterations) + " iterations\n" +
                "violations: " + std::to_string(report.voltage.size()) + " voltage, " +
                std::to_string(report.current.size()) + " current";
  return out;
}

RunArtifacts run_solve(const ScenarioConfig& config, const std::string& out_dir,
                       const std::string& command, const std::string& config_hash) {
  const GridModel grid = load_grid(config.grid_path);
  std::vector<PqvFor> regions;
  for (const std::string& path : config.for_paths) regions.push_back(load_for(path));
  const Limits limits = apply_overrides(grid, config);
  fs::create_directories(out_dir);

  std::vector<std::string> inputs = {config.grid_path};
  inputs.insert(inputs.end(), config.for_paths.begin(), config.for_paths.end());

  DispatchResult result;
  try {
    result = correct(grid, regions, limits, config.method, config.options);
  } catch (const ConvergenceError&) {
    write_file(fs::path(out_dir) / "manifest.json",
               run_manifest_json(command, inputs, config_hash, {}, 3));
    throw;
  }

  write_geometry(config, regions, out_dir);
  write_dispatch_tables(grid, limits, result, out_dir);
  const int exit_status = dispatch_exit(result);
  write_file(fs::path(out_dir) / "manifest.json",
             run_manifest_json(command, inputs, config_hash, result.wall_ms, exit_status));

  RunArtifacts out;
  out.exit_status = exit_status;
  out.summary = "method " + to_string(result.method) + ": " + result.status;
  if (result.status.find("optimization rounds") == std::string::npos) {
    out.summary += " after " + std::to_string(result.iterations) + " optimization rounds";
  }
  out.summary += "\nviolations: " +
                 std::to_string(result.initial_report.voltage.size() +
                                result.initial_report.current.size()) +
                 " -> " +
                 std::to_string(result.final_report.voltage.size() +
                                result.final_report.current.size());
  return out;
}

RunArtifacts run_sweep(const ScenarioConfig& config, const std::string& out_dir,
                       const std::string& command, const std::string& config_hash) {
  if (!config.sweep) throw ValidationError("scenario has no sweep definition");
  const GridModel grid = load_grid(config.grid_path);
  std::vector<PqvFor> regions;
  for (const std::string& path : config.for_paths) regions.push_back(load_for(path));
  const Limits limits = apply_overrides(grid, config);
  fs::create_directories(out_dir);

  std::vector<std::string> inputs = {config.grid_path};
  inputs.insert(inputs.end(), config.for_paths.begin(), config.for_paths.end());

  const std::vector<SweepEntry> entries =
      robustness_sweep(grid, regions, limits, config.method, config.sweep->bus,
                       config.sweep->q_levels, config.options);

  write_geometry(config, regions, out_dir);
  write_file(fs::path(out_dir) / "sweep_summary.csv", sweep_summary_csv(entries));

  std::map<std::string, double> wall_ms;
  std::string summary;
  bool all_terminated = true;
  for (size_t k = 0; k < entries.size(); ++k) {
    const SweepEntry& entry = entries[k];
    const fs::path level_dir = fs::path(out_dir) / ("level_" + std::to_string(k));
    fs::create_directories(level_dir);
    if (entry.failed) {
      all_terminated = false;
      write_file(level_dir / "report.txt", "level " + fmt(entry.q_level) +
                                               " did not terminate: " + entry.error + "\n");
    } else {
      write_dispatch_tables(grid, limits, entry.result, level_dir);
      for (const auto& [phase, ms] : entry.result.wall_ms) wall_ms[phase] += ms;
    }
    if (!summary.empty()) summary += "\n";
    summary += "level " + fmt(entry.q_level) + ": " +
               (entry.failed ? ("failed: " + entry.error) : entry.result.status) +
               ", displacement " + fmt(entry.displacement);
  }

  const int exit_status = all_terminated ? 0 : 1;
  write_file(fs::path(out_dir) / "manifest.json",
             run_manifest_json(command, inputs, config_hash, wall_ms, exit_status));

  RunArtifacts out;
  out.exit_status = exit_status;
  out.summary = summary;
  return out;
}

}  // namespace flexgrid
