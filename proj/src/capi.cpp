#include "flexgrid.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "flexgrid/artifacts.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/log.hpp"
#include "flexgrid/opman.hpp"

struct fxg_scenario {
  flexgrid::ScenarioConfig config;
};

namespace {

using namespace flexgrid;

thread_local std::string g_last_error;

char* dup_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (out != nullptr) std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

void put_summary(char** summary, const std::string& text) {
  if (summary != nullptr) *summary = dup_string(text);
}

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

// Uniform exception-to-status mapping for every entry point.
template <typename Fn>
int guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const ParseError& e) {
    return fail(FXG_ERR_INPUT, e.what());
  } catch (const ValidationError& e) {
    return fail(FXG_ERR_INPUT, e.what());
  } catch (const ConvergenceError& e) {
    return fail(FXG_ERR_POWERFLOW, e.what());
  } catch (const std::exception& e) {
    return fail(FXG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FXG_ERR_INTERNAL, "unknown failure");
  }
}

std::string require_text(const char* value, const char* what) {
  if (value == nullptr || *value == '\0') throw ParseError(std::string(what) + " must be given");
  return value;
}

// The manifest hash covers the effective configuration, overrides included,
// so runs differing only in flags hash differently.
std::string effective_hash(const ScenarioConfig& config) {
  return fnv1a_hex(scenario_to_json_text(config));
}

}  // namespace

extern "C" {

const char* fxg_version(void) { return tool_version(); }

const char* fxg_last_error(void) { return g_last_error.c_str(); }

void fxg_string_free(char* text) { std::free(text); }

int fxg_scenario_load(const char* path, fxg_scenario** out) {
  return guarded([&] {
    const std::string file = require_text(path, "scenario path");
    if (out == nullptr) throw ParseError("scenario handle must be given");
    auto sc = std::make_unique<fxg_scenario>();
    sc->config = load_scenario(file);
    *out = sc.release();
    return FXG_OK;
  });
}

int fxg_scenario_build(const char* grid_path, const char* const* for_paths, size_t n_fors,
                       fxg_scenario** out) {
  return guarded([&] {
    const std::string grid = require_text(grid_path, "grid path");
    if (out == nullptr) throw ParseError("scenario handle must be given");
    if (n_fors > 0 && for_paths == nullptr) throw ParseError("FOR path list must be given");
    auto sc = std::make_unique<fxg_scenario>();
    sc->config.grid_path = grid;
    for (size_t i = 0; i < n_fors; ++i) {
      sc->config.for_paths.push_back(require_text(for_paths[i], "FOR path"));
    }
    *out = sc.release();
    return FXG_OK;
  });
}

int fxg_scenario_set_method(fxg_scenario* sc, const char* method) {
  return guarded([&] {
    if (sc == nullptr) throw ParseError("scenario handle must be given");
    sc->config.method = method_from_string(require_text(method, "method"));
    return FXG_OK;
  });
}

int fxg_scenario_set_max_iters(fxg_scenario* sc, int max_iters) {
  return guarded([&] {
    if (sc == nullptr) throw ParseError("scenario handle must be given");
    if (max_iters < 0) throw ParseError("max-iters must be >= 0");
    sc->config.options.max_iters = max_iters;
    return FXG_OK;
  });
}

int fxg_scenario_has_sweep(const fxg_scenario* sc) {
  return (sc != nullptr && sc->config.sweep.has_value()) ? 1 : 0;
}

void fxg_scenario_free(fxg_scenario* sc) { delete sc; }

int fxg_cmd_validate(const char* grid_path, const char* const* for_paths, size_t n_fors,
                     const char* scenario_path, char** summary) {
  return guarded([&] {
    const bool has_grid = grid_path != nullptr && *grid_path != '\0';
    const bool has_scenario = scenario_path != nullptr && *scenario_path != '\0';
    if (has_grid == has_scenario) {
      throw ParseError("validate needs either a grid or a scenario");
    }
    std::ostringstream lines;
    ScenarioConfig config;
    if (has_scenario) {
      config = load_scenario(scenario_path);
      lines << "scenario '" << scenario_path << "': method " << to_string(config.method)
            << ", " << config.for_paths.size() << " fors\n";
    } else {
      config.grid_path = grid_path;
      if (n_fors > 0 && for_paths == nullptr) throw ParseError("FOR path list must be given");
      for (size_t i = 0; i < n_fors; ++i) {
        config.for_paths.push_back(require_text(for_paths[i], "FOR path"));
      }
    }
    const GridModel grid = load_grid(config.grid_path);
    validate(grid);
    lines << "grid '" << config.grid_path << "': " << grid.bus_count() << " buses, "
          << grid.branch_count() << " branches\n";
    for (const std::string& path : config.for_paths) {
      const PqvFor region = load_for(path);
      if (region.bus_id < 0 || region.bus_id >= grid.bus_count()) {
        throw ValidationError("FOR file '" + path + "' references unknown bus " +
                              std::to_string(region.bus_id));
      }
      lines << "for '" << path << "': bus " << region.bus_id << ", " << region.slices.size()
            << " slices\n";
    }
    apply_overrides(grid, config);
    lines << "all inputs valid";
    put_summary(summary, lines.str());
    return FXG_OK;
  });
}

int fxg_cmd_powerflow(const char* grid_path, const char* out_dir, const char* command,
                      char** summary) {
  return guarded([&] {
    const std::string grid = require_text(grid_path, "grid path");
    const std::string out = require_text(out_dir, "output directory");
    log_line(1, "power flow on '" + grid + "' -> " + out);
    const RunArtifacts run = run_powerflow(grid, out, command != nullptr ? command : "powerflow");
    put_summary(summary, run.summary);
    return run.exit_status;
  });
}

int fxg_cmd_solve(const fxg_scenario* sc, const char* out_dir, const char* command,
                  char** summary) {
  return guarded([&] {
    if (sc == nullptr) throw ParseError("scenario handle must be given");
    const std::string out = require_text(out_dir, "output directory");
    log_line(1, "solve method " + to_string(sc->config.method) + " -> " + out);
    const RunArtifacts run = run_solve(sc->config, out, command != nullptr ? command : "solve",
                                       effective_hash(sc->config));
    put_summary(summary, run.summary);
    return run.exit_status;
  });
}

int fxg_cmd_sweep(const fxg_scenario* sc, const char* out_dir, const char* command,
                  char** summary) {
  return guarded([&] {
    if (sc == nullptr) throw ParseError("scenario handle must be given");
    const std::string out = require_text(out_dir, "output directory");
    log_line(1, "sweep method " + to_string(sc->config.method) + " -> " + out);
    const RunArtifacts run = run_sweep(sc->config, out, command != nullptr ? command : "sweep",
                                       effective_hash(sc->config));
    put_summary(summary, run.summary);
    return run.exit_status;
  });
}

int fxg_cmd_synth(unsigned long long seed, const char* method, const char* out_dir,
                  char** summary) {
  return guarded([&] {
    const std::string out = require_text(out_dir, "output directory");
    const Method m = method_from_string(method != nullptr && *method != '\0' ? method : "convex");
    const Fixture fx = synth_fixture(seed);
    save_fixture(fx, out, m);
    std::ostringstream lines;
    lines << "fixture seed " << seed << ": " << fx.grid.bus_count() << " buses, "
          << fx.regions.size() << " fors, sweep bus " << fx.sweep.bus << "\n"
          << "written to '" << out << "'";
    put_summary(summary, lines.str());
    return FXG_OK;
  });
}

}  // extern "C"
