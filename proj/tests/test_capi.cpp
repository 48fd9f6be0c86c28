// Exercises the shared-library boundary: only flexgrid.h plus file fixtures.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flexgrid.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string take(char*& text) {
  REQUIRE(text != nullptr);
  std::string copy = text;
  fxg_string_free(text);
  text = nullptr;
  return copy;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path("capi_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// One shared study case written through the API itself.
const fs::path& fixture_dir() {
  static fs::path dir = [] {
    const fs::path d = scratch_dir("fixture");
    char* summary = nullptr;
    REQUIRE(fxg_cmd_synth(2030, "convex", d.string().c_str(), &summary) == FXG_OK);
    take(summary);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("version and error channel basics") {
  CHECK(std::string(fxg_version()) == "0.1.0");
  CHECK(std::string(fxg_last_error()).empty());

  fxg_scenario* sc = nullptr;
  CHECK(fxg_scenario_load("does_not_exist.json", &sc) == FXG_ERR_INPUT);
  CHECK(std::string(fxg_last_error()).find("does_not_exist.json") != std::string::npos);
  CHECK(sc == nullptr);

  // a succeeding call clears the sticky message
  CHECK(fxg_scenario_load((fixture_dir() / "scenario.json").string().c_str(), &sc) == FXG_OK);
  CHECK(std::string(fxg_last_error()).empty());
  fxg_scenario_free(sc);
  fxg_scenario_free(nullptr);
  fxg_string_free(nullptr);
}

TEST_CASE("scenario handles expose the loaded configuration") {
  fxg_scenario* sc = nullptr;
  REQUIRE(fxg_scenario_load((fixture_dir() / "scenario.json").string().c_str(), &sc) == FXG_OK);
  CHECK(fxg_scenario_has_sweep(sc) == 1);
  CHECK(fxg_scenario_set_method(sc, "milp2d") == FXG_OK);
  CHECK(fxg_scenario_set_method(sc, "banana") == FXG_ERR_INPUT);
  CHECK(std::string(fxg_last_error()).find("banana") != std::string::npos);
  CHECK(fxg_scenario_set_max_iters(sc, 2) == FXG_OK);
  CHECK(fxg_scenario_set_max_iters(sc, -1) == FXG_ERR_INPUT);
  fxg_scenario_free(sc);

  CHECK(fxg_scenario_load(nullptr, &sc) == FXG_ERR_INPUT);
  CHECK(fxg_scenario_load("x.json", nullptr) == FXG_ERR_INPUT);
  CHECK(fxg_scenario_set_method(nullptr, "convex") == FXG_ERR_INPUT);
  CHECK(fxg_scenario_has_sweep(nullptr) == 0);

  const std::string grid = (fixture_dir() / "grid.json").string();
  const std::string f15 = (fixture_dir() / "fors" / "bus_15.json").string();
  const char* fors[] = {f15.c_str()};
  CHECK(fxg_scenario_build(grid.c_str(), fors, 1, &sc) == FXG_OK);
  CHECK(fxg_scenario_has_sweep(sc) == 0);
  fxg_scenario_free(sc);
}

TEST_CASE("validate accepts the study case and names broken fields") {
  const std::string scenario = (fixture_dir() / "scenario.json").string();
  char* summary = nullptr;
  REQUIRE(fxg_cmd_validate(nullptr, nullptr, 0, scenario.c_str(), &summary) == FXG_OK);
  const std::string text = take(summary);
  CHECK(text.find("all inputs valid") != std::string::npos);
  CHECK(text.find("30 buses") != std::string::npos);
  CHECK(text.find("bus_15.json") != std::string::npos);

  // FOR slices must rise in v_slack; the message points at the offender.
  const fs::path dir = scratch_dir("validate");
  json bad = json::parse(slurp(fixture_dir() / "fors" / "bus_15.json"));
  std::swap(bad["slices"][0], bad["slices"][1]);
  spill(dir / "bad_for.json", bad.dump(2));
  const std::string grid = (fixture_dir() / "grid.json").string();
  const std::string bad_for = (dir / "bad_for.json").string();
  const char* fors[] = {bad_for.c_str()};
  CHECK(fxg_cmd_validate(grid.c_str(), fors, 1, nullptr, nullptr) == FXG_ERR_INPUT);
  CHECK(std::string(fxg_last_error()).find("slice") != std::string::npos);

  // disconnected bus
  json island = json::parse(slurp(fixture_dir() / "grid.json"));
  json extra = island["buses"][5];
  extra["id"] = island["buses"].size();
  island["buses"].push_back(extra);
  spill(dir / "island.json", island.dump(2));
  const std::string island_path = (dir / "island.json").string();
  CHECK(fxg_cmd_validate(island_path.c_str(), nullptr, 0, nullptr, nullptr) == FXG_ERR_INPUT);
  CHECK(std::string(fxg_last_error()).find("not connected") != std::string::npos);

  // FOR aimed at a bus the grid does not have
  json astray = json::parse(slurp(fixture_dir() / "fors" / "bus_15.json"));
  astray["bus_id"] = 99;
  spill(dir / "astray.json", astray.dump(2));
  const std::string astray_path = (dir / "astray.json").string();
  const char* astray_fors[] = {astray_path.c_str()};
  CHECK(fxg_cmd_validate(grid.c_str(), astray_fors, 1, nullptr, nullptr) == FXG_ERR_INPUT);
  CHECK(std::string(fxg_last_error()).find("unknown bus 99") != std::string::npos);

  // exactly one input selector
  CHECK(fxg_cmd_validate(grid.c_str(), nullptr, 0, scenario.c_str(), nullptr) == FXG_ERR_INPUT);
  CHECK(fxg_cmd_validate(nullptr, nullptr, 0, nullptr, nullptr) == FXG_ERR_INPUT);
}

TEST_CASE("powerflow command writes artifacts and reports divergence") {
  const fs::path dir = scratch_dir("powerflow");
  const std::string grid = (fixture_dir() / "grid.json").string();
  char* summary = nullptr;
  REQUIRE(fxg_cmd_powerflow(grid.c_str(), (dir / "out").string().c_str(), "powerflow test",
                            &summary) == FXG_OK);
  const std::string text = take(summary);
  CHECK(text.find("power flow converged") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "bus.csv"));
  CHECK(fs::exists(dir / "out" / "branch.csv"));
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["exit_status"] == 0);
  CHECK(manifest["command"] == "powerflow test");
  CHECK(manifest["tool_version"] == "0.1.0");
  CHECK(manifest["wall_ms"].contains("powerflow"));

  // hopeless loading must come back as the power-flow status
  json heavy = json::parse(slurp(fixture_dir() / "grid.json"));
  for (json& bus : heavy["buses"]) {
    if (bus["p0"].get<double>() < 0.0) {
      bus["p0"] = bus["p0"].get<double>() * 40.0;
      bus["q0"] = bus["q0"].get<double>() * 40.0;
    }
  }
  spill(dir / "heavy.json", heavy.dump(2));
  CHECK(fxg_cmd_powerflow((dir / "heavy.json").string().c_str(), (dir / "out2").string().c_str(),
                          "powerflow heavy", nullptr) == FXG_ERR_POWERFLOW);
  CHECK(std::string(fxg_last_error()).find("converge") != std::string::npos);
  const json failed = json::parse(slurp(dir / "out2" / "manifest.json"));
  CHECK(failed["exit_status"] == 3);

  CHECK(fxg_cmd_powerflow(nullptr, "x", "c", nullptr) == FXG_ERR_INPUT);
  CHECK(fxg_cmd_powerflow(grid.c_str(), nullptr, "c", nullptr) == FXG_ERR_INPUT);
}

TEST_CASE("solve command corrects the study case end to end") {
  const fs::path dir = scratch_dir("solve");
  fxg_scenario* sc = nullptr;
  REQUIRE(fxg_scenario_load((fixture_dir() / "scenario.json").string().c_str(), &sc) == FXG_OK);
  char* summary = nullptr;
  REQUIRE(fxg_cmd_solve(sc, (dir / "out").string().c_str(), "solve test", &summary) == FXG_OK);
  const std::string text = take(summary);
  CHECK(text.find("clean") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "report.txt"));
  CHECK(fs::exists(dir / "out" / "deltas.csv"));
  CHECK(fs::exists(dir / "out" / "geometry" / "bus_15_hull.json"));
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["exit_status"] == 0);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);

  // a zero round budget leaves the violations in place -> status 4
  REQUIRE(fxg_scenario_set_max_iters(sc, 0) == FXG_OK);
  CHECK(fxg_cmd_solve(sc, (dir / "out4").string().c_str(), "solve test", nullptr) ==
        FXG_ERR_VIOLATIONS);
  fxg_scenario_free(sc);

  CHECK(fxg_cmd_solve(nullptr, "x", "c", nullptr) == FXG_ERR_INPUT);
}

TEST_CASE("sweep command needs a sweep block and fills every level") {
  const fs::path dir = scratch_dir("sweep");
  fxg_scenario* sc = nullptr;
  REQUIRE(fxg_scenario_load((fixture_dir() / "scenario.json").string().c_str(), &sc) == FXG_OK);
  char* summary = nullptr;
  REQUIRE(fxg_cmd_sweep(sc, (dir / "out").string().c_str(), "sweep test", &summary) == FXG_OK);
  const std::string text = take(summary);
  CHECK(text.find("level") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "sweep_summary.csv"));
  CHECK(fs::exists(dir / "out" / "level_3" / "report.txt"));
  fxg_scenario_free(sc);

  const std::string grid = (fixture_dir() / "grid.json").string();
  REQUIRE(fxg_scenario_build(grid.c_str(), nullptr, 0, &sc) == FXG_OK);
  CHECK(fxg_cmd_sweep(sc, (dir / "out2").string().c_str(), "sweep test", nullptr) ==
        FXG_ERR_INPUT);
  CHECK(std::string(fxg_last_error()).find("sweep") != std::string::npos);
  fxg_scenario_free(sc);
}

TEST_CASE("synth rejects seeds without a usable pocket") {
  const fs::path dir = scratch_dir("synth");
  // seed 0 collapses the pocket search; the API must say so, not crash
  char* summary = nullptr;
  const int rc = fxg_cmd_synth(0, "convex", (dir / "fx").string().c_str(), &summary);
  if (rc == FXG_OK) {
    take(summary);  // some seeds do work; then the fixture must validate
    const std::string scenario = (dir / "fx" / "scenario.json").string();
    CHECK(fxg_cmd_validate(nullptr, nullptr, 0, scenario.c_str(), nullptr) == FXG_OK);
  } else {
    CHECK(rc == FXG_ERR_INPUT);
    CHECK(std::string(fxg_last_error()).find("seed") != std::string::npos);
  }
  CHECK(fxg_cmd_synth(2030, "banana", (dir / "fx2").string().c_str(), nullptr) == FXG_ERR_INPUT);
}
