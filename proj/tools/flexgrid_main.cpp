// Thin argv front end: parses flags, drives the shared-library C API, prints
// summaries, and exits with the API status code.
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexgrid.h"

namespace {

namespace fs = std::filesystem;

// Sorted *.json listing so repeated runs see the same FOR ordering.
std::vector<std::string> list_for_files(const std::string& dir) {
  std::vector<std::string> files;
  std::error_code ec;
  for (const fs::directory_entry& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path().string());
    }
  }
  if (ec) {
    std::cerr << "error: cannot read FOR directory '" << dir << "': " << ec.message() << "\n";
    std::exit(FXG_ERR_INPUT);
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<const char*> as_argv(const std::vector<std::string>& items) {
  std::vector<const char*> out;
  out.reserve(items.size());
  for (const std::string& s : items) out.push_back(s.c_str());
  return out;
}

std::string join_command(int argc, char** argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

void print_summary(char* summary) {
  if (summary == nullptr) return;
  std::cout << summary << "\n";
  fxg_string_free(summary);
}

int report_failure(int status) {
  const char* msg = fxg_last_error();
  if (msg != nullptr && *msg != '\0') std::cerr << "error: " << msg << "\n";
  return status;
}

struct ScenarioHandle {
  fxg_scenario* ptr = nullptr;
  ~ScenarioHandle() { fxg_scenario_free(ptr); }
};

// Builds the effective scenario from --scenario or --grid/--fors plus the
// override flags shared by solve and sweep.
int make_scenario(const std::string& scenario_path, const std::string& grid_path,
                  const std::string& fors_dir, const std::string& method, int max_iters,
                  ScenarioHandle& handle) {
  int rc = FXG_OK;
  if (!scenario_path.empty()) {
    rc = fxg_scenario_load(scenario_path.c_str(), &handle.ptr);
  } else if (!grid_path.empty()) {
    std::vector<std::string> fors;
    if (!fors_dir.empty()) fors = list_for_files(fors_dir);
    const std::vector<const char*> raw = as_argv(fors);
    rc = fxg_scenario_build(grid_path.c_str(), raw.data(), raw.size(), &handle.ptr);
  } else {
    std::cerr << "error: pass --scenario FILE or --grid FILE [--fors DIR]\n";
    return FXG_ERR_INPUT;
  }
  if (rc != FXG_OK) return report_failure(rc);
  if (!method.empty()) {
    rc = fxg_scenario_set_method(handle.ptr, method.c_str());
    if (rc != FXG_OK) return report_failure(rc);
  }
  if (max_iters >= 0) {
    rc = fxg_scenario_set_max_iters(handle.ptr, max_iters);
    if (rc != FXG_OK) return report_failure(rc);
  }
  return FXG_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flexgrid: corrective grid operation with aggregated flexibility"};
  app.set_version_flag("--version", std::string(fxg_version()));
  app.require_subcommand(1);

  std::string grid_path;
  std::string fors_dir;
  std::string scenario_path;
  std::string method;
  std::string out_dir;
  unsigned long long seed = 2030;
  int max_iters = -1;  // negative leaves the scenario's own value in place

  CLI::App* validate = app.add_subcommand("validate", "check grid, FOR, and scenario files");
  validate->add_option("--grid", grid_path, "grid JSON file");
  validate->add_option("--fors", fors_dir, "directory of FOR JSON files");
  validate->add_option("--scenario", scenario_path, "scenario JSON file");

  CLI::App* powerflow = app.add_subcommand("powerflow", "solve the grid and report loading");
  powerflow->add_option("--grid", grid_path, "grid JSON file")->required();
  powerflow->add_option("--out", out_dir, "artifact directory")->required();

  CLI::App* solve = app.add_subcommand("solve", "run one corrective dispatch");
  solve->add_option("--scenario", scenario_path, "scenario JSON file");
  solve->add_option("--grid", grid_path, "grid JSON file (with --fors)");
  solve->add_option("--fors", fors_dir, "directory of FOR JSON files");
  solve->add_option("--method", method, "milp2d, milp3d, or convex");
  solve->add_option("--max-iters", max_iters, "optimization round budget");
  solve->add_option("--out", out_dir, "artifact directory")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "repeat the dispatch over injected q levels");
  sweep->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  sweep->add_option("--method", method, "milp2d, milp3d, or convex");
  sweep->add_option("--max-iters", max_iters, "optimization round budget");
  sweep->add_option("--out", out_dir, "artifact directory")->required();

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic study case");
  synth->add_option("--seed", seed, "fixture seed");
  synth->add_option("--method", method, "method stored in the scenario");
  synth->add_option("--out", out_dir, "fixture directory")->required();

  CLI11_PARSE(app, argc, argv);

  const std::string command = join_command(argc, argv);
  char* summary = nullptr;

  if (validate->parsed()) {
    if (!scenario_path.empty() && !grid_path.empty()) {
      std::cerr << "error: pass --scenario or --grid, not both\n";
      return FXG_ERR_INPUT;
    }
    std::vector<std::string> fors;
    if (!fors_dir.empty()) fors = list_for_files(fors_dir);
    const std::vector<const char*> raw = as_argv(fors);
    const int rc = fxg_cmd_validate(grid_path.empty() ? nullptr : grid_path.c_str(), raw.data(),
                                    raw.size(), scenario_path.empty() ? nullptr : scenario_path.c_str(),
                                    &summary);
    print_summary(summary);
    return rc == FXG_OK ? FXG_OK : report_failure(rc);
  }

  if (powerflow->parsed()) {
    const int rc = fxg_cmd_powerflow(grid_path.c_str(), out_dir.c_str(), command.c_str(), &summary);
    print_summary(summary);
    return rc == FXG_OK ? FXG_OK : report_failure(rc);
  }

  if (solve->parsed() || sweep->parsed()) {
    ScenarioHandle sc;
    const int rc = make_scenario(scenario_path, grid_path, fors_dir, method, max_iters, sc);
    if (rc != FXG_OK) return rc;
    const int status = solve->parsed()
                           ? fxg_cmd_solve(sc.ptr, out_dir.c_str(), command.c_str(), &summary)
                           : fxg_cmd_sweep(sc.ptr, out_dir.c_str(), command.c_str(), &summary);
    print_summary(summary);
    return status == FXG_OK ? FXG_OK : report_failure(status);
  }

  if (synth->parsed()) {
    const int rc = fxg_cmd_synth(seed, method.empty() ? nullptr : method.c_str(), out_dir.c_str(),
                                 &summary);
    print_summary(summary);
    return rc == FXG_OK ? FXG_OK : report_failure(rc);
  }

  return FXG_ERR_INPUT;
}
