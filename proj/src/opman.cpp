// Corrective operational management: violation detection, the iterative
// re-dispatch loop over a frozen FOR geometry, the reactive robustness sweep,
// scenario configuration, and the 30-bus reference fixture.
#include "flexgrid/opman.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flexgrid/convexify.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/log.hpp"

namespace flexgrid {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Limits limits_from_grid(const GridModel& grid) {
  Limits lim;
  for (const Bus& b : grid.buses) {
    lim.vmin.push_back(b.vmin);
    lim.vmax.push_back(b.vmax);
  }
  for (const Branch& br : grid.branches) lim.imax.push_back(br.i_max);
  return lim;
}

void validate(const GridModel& grid, const Limits& limits) {
  if (limits.vmin.size() != grid.buses.size() || limits.vmax.size() != grid.buses.size()) {
    throw ValidationError("limits do not cover every bus");
  }
  if (limits.imax.size() != grid.branches.size()) {
    throw ValidationError("limits do not cover every branch");
  }
  for (size_t i = 0; i < grid.buses.size(); ++i) {
    if (!(limits.vmin[i] > 0.0) || !(limits.vmin[i] < limits.vmax[i])) {
      throw ValidationError("bus " + std::to_string(grid.buses[i].id) +
                            " has an empty voltage band");
    }
  }
  for (size_t b = 0; b < grid.branches.size(); ++b) {
    if (!(limits.imax[b] > 0.0)) {
      throw ValidationError("branch " + std::to_string(grid.branches[b].id) +
                            " has a non-positive current limit");
    }
  }
}

ViolationReport detect(const GridModel& grid, const PfSolution& state, const Limits& limits,
                       double v_tol, double ratio_tol) {
  validate(grid, limits);
  if (state.v.size() != static_cast<Eigen::Index>(grid.buses.size())) {
    throw ValidationError("operating state does not match the grid");
  }
  ViolationReport rep;
  for (size_t i = 0; i < grid.buses.size(); ++i) {
    const double v = state.v(static_cast<Eigen::Index>(i));
    if (v < limits.vmin[i] - v_tol) {
      rep.voltage.push_back({grid.buses[i].id, v, limits.vmin[i], limits.vmin[i] - v});
    } else if (v > limits.vmax[i] + v_tol) {
      rep.voltage.push_back({grid.buses[i].id, v, limits.vmax[i], v - limits.vmax[i]});
    }
  }
  const Eigen::VectorXd flow = branch_currents(grid, state);
  for (size_t b = 0; b < grid.branches.size(); ++b) {
    const double ratio = flow(static_cast<Eigen::Index>(b)) / limits.imax[b];
    if (ratio > 1.0 + ratio_tol) {
      rep.current.push_back({grid.branches[b].id, ratio, ratio - 1.0});
    }
  }
  std::sort(rep.voltage.begin(), rep.voltage.end(),
            [](const VoltageViolation& a, const VoltageViolation& b) {
              if (a.margin != b.margin) return a.margin > b.margin;
              return a.bus < b.bus;
            });
  std::sort(rep.current.begin(), rep.current.end(),
            [](const CurrentViolation& a, const CurrentViolation& b) {
              if (a.margin != b.margin) return a.margin > b.margin;
              return a.branch < b.branch;
            });
  return rep;
}

std::string to_string(Method method) {
  switch (method) {
    case Method::Milp2d: return "milp2d";
    case Method::Milp3d: return "milp3d";
    case Method::Convex: return "convex";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "milp2d") return Method::Milp2d;
  if (s == "milp3d") return Method::Milp3d;
  if (s == "convex") return Method::Convex;
  throw ValidationError("unknown method '" + s + "'");
}

PqvFor shrink_for(const PqvFor& region, double factor) {
  if (!(factor > 0.0) || factor > 1.0) throw ValidationError("for_scale must be in (0, 1]");
  if (factor == 1.0) return region;
  PqvFor out = region;
  for (ForSlice& s : out.slices) {
    for (PqPoint& pt : s.polygon) {
      pt.p = region.op0.p + factor * (pt.p - region.op0.p);
      pt.q = region.op0.q + factor * (pt.q - region.op0.q);
    }
  }
  validate(out);
  return out;
}

namespace {

std::string family_label(const std::string& row_name) {
  const std::string prefix = row_name.substr(0, row_name.find('_'));
  if (prefix == "imax" || prefix == "imin") return "branch current limits";
  if (prefix == "sens") return "linearized power flow";
  if (prefix == "abs") return "cost split";
  if (prefix == "psel" || prefix == "pagg" || prefix == "pseg") return "active power segments";
  if (prefix == "vsel" || prefix == "vagg" || prefix == "vseg") return "voltage segments";
  if (prefix == "qup" || prefix == "qlo" || prefix == "qfup" || prefix == "qflo" ||
      prefix == "qcap" || prefix == "qagg") {
    return "reactive band";
  }
  if (prefix == "hull") return "flexibility hull";
  return prefix;
}

// Re-solve with elastic slack on every row and unit penalties; the rows that
// still need slack at the optimum name the conflicting constraint families.
std::string infeasibility_families(const LpModel& model, const SimplexOptions& opt) {
  LpModel elastic = model;
  for (LpVar& v : elastic.vars) v.cost = 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> slack_of(elastic.rows.size());
  for (size_t r = 0; r < elastic.rows.size(); ++r) {
    LpRow& row = elastic.rows[r];
    if (row.sense != RowSense::GE) {
      const int s = elastic.add_var("_elastic_dn_" + std::to_string(r), 0.0, inf, 1.0);
      row.coeffs.push_back({s, -1.0});
      slack_of[r].push_back(s);
    }
    if (row.sense != RowSense::LE) {
      const int s = elastic.add_var("_elastic_up_" + std::to_string(r), 0.0, inf, 1.0);
      row.coeffs.push_back({s, 1.0});
      slack_of[r].push_back(s);
    }
  }
  Solution sol;
  try {
    sol = solve_lp(elastic, opt);
  } catch (const NumericalError&) {
    return "unresolved";
  }
  if (sol.status != SolveStatus::Optimal) return "unresolved";
  std::set<std::string> families;
  for (size_t r = 0; r < slack_of.size(); ++r) {
    for (int s : slack_of[r]) {
      if (sol.x[static_cast<size_t>(s)] > 1e-6) families.insert(family_label(model.rows[r].name));
    }
  }
  if (families.empty()) return "segment selection";
  std::string joined;
  for (const std::string& f : families) {
    if (!joined.empty()) joined += ", ";
    joined += f;
  }
  return joined;
}

void check_options(const CorrectOptions& opt) {
  if (opt.max_iters < 0) throw ValidationError("max_iters must be >= 0");
  if (opt.k_max < 1) throw ValidationError("k_max must be >= 1");
  if (opt.l_max < 1) throw ValidationError("l_max must be >= 1");
  if (!(opt.v_tol > 0.0)) throw ValidationError("v_tol must be positive");
  if (!(opt.ratio_tol > 0.0)) throw ValidationError("ratio_tol must be positive");
  if (!(opt.for_scale > 0.0) || opt.for_scale > 1.0) {
    throw ValidationError("for_scale must be in (0, 1]");
  }
  if (opt.q_price < 0.0) throw ValidationError("q_price must be non-negative");
}

// |dq| split with the tie-break penalty, appended so the builder's variable
// layout and the binary indices stay untouched.
void add_q_regularization(LpModel& base, const std::vector<int>& buses, double q_price) {
  if (q_price == 0.0) return;
  const double inf = std::numeric_limits<double>::infinity();
  for (int bus : buses) {
    const int dq = base.var_index("dq_" + std::to_string(bus));
    const int plus = base.add_var("dq_pos_" + std::to_string(bus), 0.0, inf, q_price);
    const int minus = base.add_var("dq_neg_" + std::to_string(bus), 0.0, inf, q_price);
    base.add_row("abs_dq_" + std::to_string(bus), {{dq, 1.0}, {plus, -1.0}, {minus, 1.0}},
                 RowSense::EQ, 0.0);
  }
}

int bus_position(const GridModel& grid, int bus_id) {
  for (size_t i = 0; i < grid.buses.size(); ++i) {
    if (grid.buses[i].id == bus_id) return static_cast<int>(i);
  }
  return -1;
}

bool member_at(const PqvFor& region, double p, double q, double v) {
  try {
    return contains(region, p, q, v);
  } catch (const ValidationError&) {
    return false;  // coupling voltage outside the certified window
  }
}

}  // namespace

DispatchResult correct(const GridModel& grid, const std::vector<PqvFor>& regions,
                       const Limits& limits, Method method, const CorrectOptions& options) {
  validate(grid);
  validate(grid, limits);
  check_options(options);

  std::vector<const PqvFor*> ordered;
  std::set<int> seen;
  for (const PqvFor& region : regions) {
    validate(region);
    const int pos = bus_position(grid, region.bus_id);
    if (pos < 0) {
      throw ValidationError("FOR references unknown bus " + std::to_string(region.bus_id));
    }
    if (grid.buses[static_cast<size_t>(pos)].kind != BusKind::Flexible) {
      throw ValidationError("FOR attached to non-flexible bus " + std::to_string(region.bus_id));
    }
    if (!seen.insert(region.bus_id).second) {
      throw ValidationError("duplicate FOR for bus " + std::to_string(region.bus_id));
    }
    if (method != Method::Milp2d && !region.is_3d()) {
      throw ValidationError("method " + to_string(method) + " needs a multi-slice FOR at bus " +
                            std::to_string(region.bus_id));
    }
    ordered.push_back(&region);
  }
  for (const Bus& b : grid.buses) {
    if (b.kind == BusKind::Flexible && !seen.count(b.id)) {
      throw ValidationError("flexible bus " + std::to_string(b.id) + " has no FOR");
    }
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const PqvFor* a, const PqvFor* b) { return a->bus_id < b->bus_id; });

  std::vector<PqvFor> shrunk;
  for (const PqvFor* region : ordered) shrunk.push_back(shrink_for(*region, options.for_scale));

  DispatchResult out;
  out.method = method;
  for (const PqvFor* region : ordered) {
    out.for_buses.push_back(region->bus_id);
    out.dp[region->bus_id] = 0.0;
    out.dq[region->bus_id] = 0.0;
  }

  // The builders read voltage bands and ratings from the grid itself.
  GridModel work = grid;
  for (size_t i = 0; i < work.buses.size(); ++i) {
    work.buses[i].vmin = limits.vmin[i];
    work.buses[i].vmax = limits.vmax[i];
  }
  for (size_t b = 0; b < work.branches.size(); ++b) work.branches[b].i_max = limits.imax[b];

  const auto t_total = Clock::now();
  auto t0 = Clock::now();
  PfSolution state = solve_powerflow(work);
  out.wall_ms["powerflow"] += ms_since(t0);
  out.initial_state = state;
  out.initial_report = detect(work, state, limits, options.v_tol, options.ratio_tol);

  ViolationReport rep = out.initial_report;
  std::string stop;
  for (int round = 0; stop.empty(); ++round) {
    if (rep.empty()) break;
    log_line(2, "round " + std::to_string(round + 1) + ": " +
                    std::to_string(rep.voltage.size()) + " voltage, " +
                    std::to_string(rep.current.size()) + " current violations");
    if (round >= options.max_iters) {
      stop = "violations persist after " + std::to_string(options.max_iters) +
             " optimization rounds";
      break;
    }

    t0 = Clock::now();
    const SensitivityBundle sens = sensitivities(work, state);
    LpModel lp;
    MilpModel milp;
    const bool is_milp = method != Method::Convex;
    if (method == Method::Milp2d) {
      std::vector<SegmentedFor> segs;
      for (const PqvFor& region : shrunk) segs.push_back(segment_2d(region, options.k_max));
      milp = build_milp_2d(work, state, sens, segs, options.costs);
    } else if (method == Method::Milp3d) {
      std::vector<SegmentedFor> segs;
      for (const PqvFor& region : shrunk) {
        segs.push_back(segment_3d(region, options.k_max, options.l_max));
      }
      milp = build_milp_3d(work, state, sens, segs, options.costs);
    } else {
      std::vector<HalfSpaceSet> hulls;
      for (const PqvFor& region : shrunk) {
        hulls.push_back(half_spaces(convex_hull(for_point_cloud(region)), region.bus_id));
      }
      lp = build_convex_lp(work, state, sens, hulls, options.costs);
    }
    add_q_regularization(is_milp ? milp.base : lp, out.for_buses, options.q_price);
    out.wall_ms["model"] += ms_since(t0);

    t0 = Clock::now();
    const Solution sol = is_milp ? solve_milp(milp, options.milp) : solve_lp(lp, options.lp);
    out.wall_ms["solve"] += ms_since(t0);

    const LpModel& base = is_milp ? milp.base : lp;
    if (sol.status == SolveStatus::Infeasible) {
      stop = "optimizer infeasible: needs slack in " +
             infeasibility_families(base, options.lp);
      break;
    }
    if (sol.status == SolveStatus::Unbounded) {
      stop = "optimizer unbounded";
      break;
    }
    if (sol.status == SolveStatus::IterationLimit &&
        (sol.x.size() != static_cast<Eigen::Index>(base.vars.size()) ||
         !std::isfinite(sol.objective))) {
      stop = "optimizer hit its iteration limit";
      break;
    }

    for (const PqvFor& region : shrunk) {
      const int bus = region.bus_id;
      const double dp = sol.x[static_cast<size_t>(base.var_index("dp_" + std::to_string(bus)))];
      const double dq = sol.x[static_cast<size_t>(base.var_index("dq_" + std::to_string(bus)))];
      Bus& b = work.buses[static_cast<size_t>(bus_position(work, bus))];
      b.p0 += dp;
      b.q0 += dq;
      out.dp[bus] += dp;
      out.dq[bus] += dq;
    }
    out.trace.push_back({round, static_cast<int>(rep.voltage.size()),
                         static_cast<int>(rep.current.size()), sol.objective});
    out.iterations = round + 1;

    t0 = Clock::now();
    try {
      state = solve_powerflow(work);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("power flow diverged after applying corrections in round " +
                             std::to_string(round + 1) + ": " + e.what());
    }
    out.wall_ms["powerflow"] += ms_since(t0);
    rep = detect(work, state, limits, options.v_tol, options.ratio_tol);
    log_line(2, "round " + std::to_string(round + 1) + " applied, objective " +
                    std::to_string(sol.objective));
  }

  out.final_state = state;
  out.final_report = rep;
  std::string escaped;
  for (const PqvFor* region : ordered) {
    const int bus = region->bus_id;
    const Eigen::Index pos = bus_position(work, bus);
    const bool member = member_at(*region, state.p_inj(pos), state.q_inj(pos), state.v(pos));
    out.membership[bus] = member;
    if (!member) escaped += (escaped.empty() ? "" : ", ") + std::to_string(bus);
  }
  out.success = rep.empty() && escaped.empty() && stop.empty();
  if (out.success) {
    out.status = "clean";
  } else if (!stop.empty()) {
    out.status = stop;
  } else if (!rep.empty()) {
    out.status = "violations persist";
  } else {
    out.status = "left the flexibility region at bus " + escaped;
  }
  out.wall_ms["total"] += ms_since(t_total);
  return out;
}

std::vector<SweepEntry> robustness_sweep(const GridModel& grid,
                                         const std::vector<PqvFor>& regions, const Limits& limits,
                                         Method method, int bus,
                                         const std::vector<double>& q_levels,
                                         const CorrectOptions& options) {
  validate(grid);
  const int pos = bus_position(grid, bus);
  if (pos < 0) throw ValidationError("sweep references unknown bus " + std::to_string(bus));
  if (grid.buses[static_cast<size_t>(pos)].kind == BusKind::Slack) {
    throw ValidationError("sweep cannot inject at the slack bus");
  }
  const PfSolution base = solve_powerflow(grid);

  std::vector<SweepEntry> entries;
  for (double level : q_levels) {
    SweepEntry entry;
    entry.q_level = level;
    GridModel injected = grid;
    injected.buses[static_cast<size_t>(pos)].q0 += level;
    try {
      const PfSolution pre = solve_powerflow(injected);
      entry.pre_dv = std::abs(pre.v(pos) - base.v(pos));
      entry.result = correct(injected, regions, limits, method, options);
      double norm2 = 0.0;
      for (const auto& [b, dp] : entry.result.dp) norm2 += dp * dp;
      for (const auto& [b, dq] : entry.result.dq) norm2 += dq * dq;
      entry.displacement = std::sqrt(norm2);
    } catch (const std::exception& e) {
      entry.failed = true;
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

namespace {

double require_number(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw ParseError(ctx + ": missing numeric '" + key + "'");
  }
  return j[key].get<double>();
}

std::map<int, double> id_map(const json& j, const std::string& ctx) {
  std::map<int, double> out;
  if (!j.is_object()) throw ParseError(ctx + " must map bus or branch ids to numbers");
  for (const auto& [key, value] : j.items()) {
    size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size()) throw ParseError(ctx + ": key '" + key + "' is not an id");
    if (!value.is_number()) throw ParseError(ctx + ": value for '" + key + "' must be a number");
    out[id] = value.get<double>();
  }
  return out;
}

}  // namespace

ScenarioConfig scenario_from_json_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError(origin + ": top level must be an object");
  static const std::set<std::string> known = {
      "grid",      "fors",  "method",    "max_iters", "k_max",  "l_max",  "for_scale",
      "q_price",   "v_tol", "ratio_tol", "costs",     "limits", "sweep"};
  for (const auto& [key, value] : root.items()) {
    (void)value;
    if (!known.count(key)) throw ParseError(origin + ": unknown field '" + key + "'");
  }

  ScenarioConfig config;
  if (!root.contains("grid") || !root["grid"].is_string()) {
    throw ParseError(origin + ": missing string 'grid'");
  }
  config.grid_path = root["grid"].get<std::string>();
  if (!root.contains("fors") || !root["fors"].is_array()) {
    throw ParseError(origin + ": missing 'fors' array");
  }
  for (const json& jf : root["fors"]) {
    if (!jf.is_string()) throw ParseError(origin + ": 'fors' entries must be paths");
    config.for_paths.push_back(jf.get<std::string>());
  }
  if (root.contains("method")) {
    if (!root["method"].is_string()) throw ParseError(origin + ": 'method' must be a string");
    try {
      config.method = method_from_string(root["method"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError(origin + ": " + e.what());
    }
  }
  if (root.contains("max_iters")) {
    if (!root["max_iters"].is_number_integer()) {
      throw ParseError(origin + ": 'max_iters' must be an integer");
    }
    config.options.max_iters = root["max_iters"].get<int>();
  }
  if (root.contains("k_max")) {
    if (!root["k_max"].is_number_integer()) throw ParseError(origin + ": 'k_max' must be an integer");
    config.options.k_max = root["k_max"].get<int>();
  }
  if (root.contains("l_max")) {
    if (!root["l_max"].is_number_integer()) throw ParseError(origin + ": 'l_max' must be an integer");
    config.options.l_max = root["l_max"].get<int>();
  }
  if (root.contains("for_scale")) config.options.for_scale = require_number(root, "for_scale", origin);
  if (root.contains("q_price")) config.options.q_price = require_number(root, "q_price", origin);
  if (root.contains("v_tol")) config.options.v_tol = require_number(root, "v_tol", origin);
  if (root.contains("ratio_tol")) config.options.ratio_tol = require_number(root, "ratio_tol", origin);
  if (root.contains("costs")) {
    for (const auto& [bus, price] : id_map(root["costs"], origin + ": costs")) {
      config.options.costs[bus] = price;
    }
  }
  if (root.contains("limits")) {
    const json& jl = root["limits"];
    if (!jl.is_object()) throw ParseError(origin + ": 'limits' must be an object");
    for (const auto& [key, value] : jl.items()) {
      if (key == "vmin") {
        config.vmin_override = id_map(value, origin + ": limits.vmin");
      } else if (key == "vmax") {
        config.vmax_override = id_map(value, origin + ": limits.vmax");
      } else if (key == "imax") {
        config.imax_override = id_map(value, origin + ": limits.imax");
      } else {
        throw ParseError(origin + ": unknown field 'limits." + key + "'");
      }
    }
  }
  if (root.contains("sweep")) {
    const json& js = root["sweep"];
    if (!js.is_object() || !js.contains("bus") || !js["bus"].is_number_integer() ||
        !js.contains("q_levels") || !js["q_levels"].is_array()) {
      throw ParseError(origin + ": 'sweep' needs integer 'bus' and 'q_levels' array");
    }
    SweepConfig sweep;
    sweep.bus = js["bus"].get<int>();
    for (const json& jq : js["q_levels"]) {
      if (!jq.is_number()) throw ParseError(origin + ": 'sweep.q_levels' must be numbers");
      sweep.q_levels.push_back(jq.get<double>());
    }
    config.sweep = sweep;
  }
  try {
    check_options(config.options);
  } catch (const ValidationError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return config;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  ScenarioConfig config = scenario_from_json_text(buf.str(), path);
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  auto resolve = [&dir](const std::string& rel) {
    std::filesystem::path p(rel);
    if (p.is_absolute()) return rel;
    return (dir / p).lexically_normal().string();
  };
  config.grid_path = resolve(config.grid_path);
  for (std::string& fp : config.for_paths) fp = resolve(fp);
  return config;
}

std::string scenario_to_json_text(const ScenarioConfig& config) {
  json root;
  root["grid"] = config.grid_path;
  root["fors"] = json::array();
  for (const std::string& fp : config.for_paths) root["fors"].push_back(fp);
  root["method"] = to_string(config.method);
  root["max_iters"] = config.options.max_iters;
  root["k_max"] = config.options.k_max;
  root["l_max"] = config.options.l_max;
  root["for_scale"] = config.options.for_scale;
  root["q_price"] = config.options.q_price;
  if (!config.options.costs.empty()) {
    json jc = json::object();
    for (const auto& [bus, price] : config.options.costs) jc[std::to_string(bus)] = price;
    root["costs"] = jc;
  }
  if (!config.vmin_override.empty() || !config.vmax_override.empty() ||
      !config.imax_override.empty()) {
    json jl = json::object();
    auto fill = [&jl](const char* key, const std::map<int, double>& overr) {
      if (overr.empty()) return;
      json jo = json::object();
      for (const auto& [id, value] : overr) jo[std::to_string(id)] = value;
      jl[key] = jo;
    };
    fill("vmin", config.vmin_override);
    fill("vmax", config.vmax_override);
    fill("imax", config.imax_override);
    root["limits"] = jl;
  }
  if (config.sweep) {
    root["sweep"] = {{"bus", config.sweep->bus}, {"q_levels", config.sweep->q_levels}};
  }
  return root.dump(2) + "\n";
}

Limits apply_overrides(const GridModel& grid, const ScenarioConfig& config) {
  Limits lim = limits_from_grid(grid);
  auto bus_slot = [&grid](int id) {
    const int pos = bus_position(grid, id);
    if (pos < 0) {
      throw ValidationError("limit override names unknown bus " + std::to_string(id));
    }
    return static_cast<size_t>(pos);
  };
  for (const auto& [id, value] : config.vmin_override) lim.vmin[bus_slot(id)] = value;
  for (const auto& [id, value] : config.vmax_override) lim.vmax[bus_slot(id)] = value;
  for (const auto& [id, value] : config.imax_override) {
    size_t slot = lim.imax.size();
    for (size_t b = 0; b < grid.branches.size(); ++b) {
      if (grid.branches[b].id == id) slot = b;
    }
    if (slot == lim.imax.size()) {
      throw ValidationError("limit override names unknown branch " + std::to_string(id));
    }
    lim.imax[slot] = value;
  }
  validate(grid, lim);
  return lim;
}

namespace {

Branch fixture_line(int id, int from, int to, double r, double x, double i_max) {
  Branch br;
  br.id = id;
  br.from_bus = from;
  br.to_bus = to;
  const std::complex<double> y = 1.0 / std::complex<double>(r, x);
  br.y_mag = std::abs(y);
  br.theta = std::arg(y);
  br.i_max = i_max;
  return br;
}

}  // namespace

Fixture synth_fixture(std::uint64_t seed) {
  Fixture fx;
  fx.grid = synth_grid(30, seed);

  // Dedicated EHV tie for the converter bus the sweep perturbs, so deep
  // reactive draws sag it without collapsing the feeder.
  const int sweep_bus = 29;
  fx.grid.branches.push_back(fixture_line(static_cast<int>(fx.grid.branches.size()), 0,
                                          sweep_bus, 0.002, 0.018, 4.0));

  // Normalize the overall loading until the base case is comfortably inside
  // the voltage band; the deliberate stress comes afterwards.
  PfSolution base;
  bool healthy = false;
  for (double g = 1.0; g >= 0.1 - 1e-9; g -= 0.05) {
    GridModel trial_grid = fx.grid;
    for (Bus& b : trial_grid.buses) {
      if (b.kind == BusKind::Slack) continue;
      b.p0 *= g;
      b.q0 *= g;
    }
    PfSolution trial;
    try {
      trial = solve_powerflow(trial_grid);
    } catch (const ConvergenceError&) {
      continue;
    }
    bool inside = true;
    for (const Bus& b : trial_grid.buses) {
      if (trial.v(b.id) < b.vmin + 0.006 || trial.v(b.id) > b.vmax - 0.006) inside = false;
    }
    if (inside) {
      fx.grid = trial_grid;
      base = trial;
      healthy = true;
      break;
    }
  }
  if (!healthy) {
    throw ValidationError("fixture seed " + std::to_string(seed) +
                          " has no healthy base loading");
  }

  // Load pocket: the five softest load buses, ranked by the base voltage.
  std::vector<int> order;
  for (const Bus& b : fx.grid.buses) {
    if (b.kind != BusKind::Slack && b.id != sweep_bus && b.p0 < 0.0) order.push_back(b.id);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = base.v(a), vb = base.v(b);
    if (va != vb) return va < vb;
    return a < b;
  });
  if (order.size() < 5) throw ValidationError("fixture seed leaves too few load buses");
  const std::vector<int> pocket(order.begin(), order.begin() + 5);

  // Alternate pocket buses carry the flexible couplings; the rest go into
  // violation when the pocket load deepens.
  const std::vector<int> flex = {pocket[0], pocket[2], pocket[4]};
  for (int bus : flex) fx.grid.buses[static_cast<size_t>(bus)].kind = BusKind::Flexible;

  std::vector<double> p_orig, q_orig;
  for (int bus : pocket) {
    p_orig.push_back(fx.grid.buses[static_cast<size_t>(bus)].p0);
    q_orig.push_back(fx.grid.buses[static_cast<size_t>(bus)].q0);
  }
  PfSolution state = base;
  bool deep_enough = false;
  for (double factor = 1.0; factor <= 4.0 + 1e-9; factor *= 1.12) {
    for (size_t k = 0; k < pocket.size(); ++k) {
      Bus& b = fx.grid.buses[static_cast<size_t>(pocket[k])];
      b.p0 = p_orig[k] * factor;
      b.q0 = q_orig[k] * factor;
    }
    PfSolution trial;
    try {
      trial = solve_powerflow(fx.grid);
    } catch (const ConvergenceError&) {
      break;  // previous factor stands
    }
    state = trial;
    int undervolt = 0;
    for (const Bus& b : fx.grid.buses) {
      if (state.v(b.id) < b.vmin - 0.004) ++undervolt;
    }
    if (undervolt >= 2) {
      deep_enough = true;
      break;
    }
  }
  if (!deep_enough) {
    throw ValidationError("fixture seed " + std::to_string(seed) +
                          " does not produce a voltage pocket");
  }

  // Thermal overload: tighten the most-loaded ordinary line to 6% past its
  // present flow. Feed-in taps stay untouched.
  const Eigen::VectorXd flow = branch_currents(fx.grid, state);
  int tight = -1;
  double best_ratio = 0.0;
  for (size_t b = 0; b < fx.grid.branches.size(); ++b) {
    const Branch& br = fx.grid.branches[b];
    if (br.from_bus == 0 || br.to_bus == 0) continue;
    const double ratio = flow(static_cast<Eigen::Index>(b)) / br.i_max;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      tight = static_cast<int>(b);
    }
  }
  if (tight < 0 || flow(tight) <= 0.0) {
    throw ValidationError("fixture seed " + std::to_string(seed) + " carries no line flow");
  }
  fx.grid.branches[static_cast<size_t>(tight)].i_max = flow(tight) / 1.06;

  // FORs ride on the stressed operating point so the status quo is a member.
  for (int bus : flex) {
    const PqvFor shape = synth_for(bus, seed ^ 0x9E3779B97F4A7C15ull, 5);
    const double v_op = std::min(1.055, std::max(0.945, state.v(bus)));
    fx.regions.push_back(translate_for(shape, state.p_inj(bus), state.q_inj(bus), v_op));
  }

  fx.limits = limits_from_grid(fx.grid);
  validate(fx.grid);
  fx.sweep.bus = sweep_bus;
  fx.sweep.q_levels = {-0.5, -1.0, -1.5, -2.0};
  return fx;
}

void save_fixture(const Fixture& fixture, const std::string& dir, Method method) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "fors");
  save_grid(fixture.grid, (fs::path(dir) / "grid.json").string());

  ScenarioConfig config;
  config.grid_path = "grid.json";
  config.method = method;
  for (const PqvFor& region : fixture.regions) {
    const std::string rel = "fors/bus_" + std::to_string(region.bus_id) + ".json";
    save_for(region, (fs::path(dir) / rel).string());
    config.for_paths.push_back(rel);
  }
  config.sweep = fixture.sweep;
  std::ofstream out(fs::path(dir) / "scenario.json");
  if (!out) throw ParseError("cannot write scenario file under '" + dir + "'");
  out << scenario_to_json_text(config);
}

}  // namespace flexgrid
