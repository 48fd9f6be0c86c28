#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flexgrid/for_geometry.hpp"
#include "flexgrid/grid_model.hpp"
#include "flexgrid/optimize.hpp"
#include "flexgrid/powerflow.hpp"

namespace flexgrid {

struct Limits {
  std::vector<double> vmin, vmax;  // per bus, pu
  std::vector<double> imax;        // per branch, pu
};

Limits limits_from_grid(const GridModel& grid);
void validate(const GridModel& grid, const Limits& limits);

struct VoltageViolation {
  int bus = -1;
  double v = 0.0, bound = 0.0, margin = 0.0;  // margin > 0, distance past the bound
};

struct CurrentViolation {
  int branch = -1;
  double ratio = 0.0, margin = 0.0;  // ratio = i / imax, margin = ratio - 1
};

struct ViolationReport {
  std::vector<VoltageViolation> voltage;  // sorted by margin desc, bus asc
  std::vector<CurrentViolation> current;  // sorted by margin desc, branch asc
  bool empty() const { return voltage.empty() && current.empty(); }
};

ViolationReport detect(const GridModel& grid, const PfSolution& state, const Limits& limits,
                       double v_tol = 1e-4, double ratio_tol = 1e-3);

// Conservative shrink of every slice toward op0 in the (p, q) plane.
PqvFor shrink_for(const PqvFor& region, double factor);

enum class Method { Milp2d, Milp3d, Convex };

std::string to_string(Method method);
Method method_from_string(const std::string& s);

struct CorrectOptions {
  int max_iters = 5;       // optimization rounds, not power-flow solves
  double v_tol = 1e-4;     // pu tolerance on the post-correction voltage check
  double ratio_tol = 1e-3; // tolerance on the post-correction branch ratio check
  int k_max = 6;           // P segments for the 2D method; the 3D method doubles this
  int l_max = 4;           // voltage segments for the 3D method
  double for_scale = 1.0;  // optional conservative shrink of each FOR toward op0
  CostMap costs;           // per-bus |dp| prices, default 1.0
  // Small |dq| tie-break penalty. Reactive support itself is unpriced, but a
  // cost-free dq lets every round pick arbitrarily large reactive swings whose
  // linearization error re-violates the band and the loop cycles instead of
  // contracting.
  double q_price = 1e-3;
  MilpOptions milp;
  SimplexOptions lp;
};

struct IterationStat {
  int index = 0;
  int voltage_violations = 0;
  int current_violations = 0;
  double objective = 0.0;
};

struct DispatchResult {
  Method method = Method::Convex;
  bool success = false;
  std::string status;  // "clean", "violations persist", "optimizer infeasible: ...", ...
  int iterations = 0;
  std::vector<int> for_buses;
  std::map<int, double> dp, dq;    // accumulated applied deltas per FOR bus
  PfSolution initial_state, final_state;
  ViolationReport initial_report, final_report;
  std::map<int, bool> membership;  // final absolute (p, q, v) against each FOR
  std::vector<IterationStat> trace;
  std::map<std::string, double> wall_ms;  // per-phase timings; never serialized in reports
};

// Corrective loop: power flow -> detect -> (build + solve + apply) until the
// nonlinear state is clean or max_iters optimization rounds have run. The
// FORs stay fixed in absolute coordinates; each round re-linearizes and the
// model builders rebase the segment geometry onto the current state.
DispatchResult correct(const GridModel& grid, const std::vector<PqvFor>& regions,
                       const Limits& limits, Method method, const CorrectOptions& options = {});

struct SweepEntry {
  double q_level = 0.0;      // pu reactive injection added at the sweep bus
  double pre_dv = 0.0;       // |v - v_base| at that bus before any correction
  double displacement = 0.0; // 2-norm of the applied (dp, dq) over FOR buses
  bool failed = false;       // run aborted by an exception, see error
  std::string error;
  DispatchResult result;
};

std::vector<SweepEntry> robustness_sweep(const GridModel& grid,
                                         const std::vector<PqvFor>& regions, const Limits& limits,
                                         Method method, int bus,
                                         const std::vector<double>& q_levels,
                                         const CorrectOptions& options = {});

struct SweepConfig {
  int bus = -1;
  std::vector<double> q_levels;
};

struct ScenarioConfig {
  std::string grid_path;
  std::vector<std::string> for_paths;
  Method method = Method::Convex;
  CorrectOptions options;
  std::map<int, double> vmin_override, vmax_override;  // by bus id
  std::map<int, double> imax_override;                 // by branch id
  std::optional<SweepConfig> sweep;
};

// Paths inside the file are resolved relative to its directory.
ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig scenario_from_json_text(const std::string& text, const std::string& origin);
std::string scenario_to_json_text(const ScenarioConfig& config);

Limits apply_overrides(const GridModel& grid, const ScenarioConfig& config);

// The 30-bus reference scenario: a synthetic HV grid with scaled loads
// producing at least two undervoltages, one branch tightened into thermal
// overload, non-convex PQ(V)-FORs at the flexible buses, and the reactive
// sweep definition at bus 29. Deterministic in the seed.
struct Fixture {
  GridModel grid;
  std::vector<PqvFor> regions;
  Limits limits;
  SweepConfig sweep;
};

Fixture synth_fixture(std::uint64_t seed);

// Writes grid.json, fors/bus_<id>.json, and scenario.json under dir.
void save_fixture(const Fixture& fixture, const std::string& dir, Method method);

}  // namespace flexgrid
