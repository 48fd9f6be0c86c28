#include "flexgrid/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace flexgrid {

using nlohmann::json;

std::string to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::Flexible: return "flexible";
    case BusKind::Fixed: return "fixed";
  }
  return "fixed";
}

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "flexible") return BusKind::Flexible;
  if (s == "fixed") return BusKind::Fixed;
  throw ParseError("unknown bus kind '" + s + "' (expected slack|flexible|fixed)");
}

int GridModel::slack_index() const {
  for (int i = 0; i < bus_count(); ++i) {
    if (buses[static_cast<size_t>(i)].kind == BusKind::Slack) return i;
  }
  throw ValidationError("grid has no slack bus");
}

void validate(const GridModel& grid) {
  const int n = grid.bus_count();
  if (n < 2) throw ValidationError("grid needs at least 2 buses");
  if (grid.s_base <= 0.0) throw ValidationError("s_base must be positive");

  int slack_count = 0;
  for (int i = 0; i < n; ++i) {
    const Bus& b = grid.buses[static_cast<size_t>(i)];
    if (b.id != i) {
      if (std::any_of(grid.buses.begin(), grid.buses.end(),
                      [&](const Bus& o) { return &o != &b && o.id == b.id; })) {
        throw ValidationError("duplicate bus id " + std::to_string(b.id));
      }
      throw ValidationError("bus ids must be contiguous 0..n-1 in order; saw id " +
                            std::to_string(b.id) + " at position " + std::to_string(i));
    }
    if (!(b.vmin < b.vmax)) {
      throw ValidationError("bus " + std::to_string(b.id) + ": vmin must be < vmax");
    }
    if (b.kind == BusKind::Slack) ++slack_count;
  }
  if (slack_count != 1) {
    throw ValidationError("grid must have exactly one slack bus, found " +
                          std::to_string(slack_count));
  }

  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  std::vector<int> seen_branch_ids;
  for (const Branch& br : grid.branches) {
    if (br.from_bus == br.to_bus) {
      throw ValidationError("branch " + std::to_string(br.id) + ": from_bus equals to_bus");
    }
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n) {
      throw ValidationError("branch " + std::to_string(br.id) + ": endpoint does not resolve to a bus");
    }
    if (!(br.y_mag > 0.0)) {
      throw ValidationError("branch " + std::to_string(br.id) + ": y_mag must be positive");
    }
    if (!(br.i_max > 0.0)) {
      throw ValidationError("branch " + std::to_string(br.id) + ": i_max must be positive");
    }
    seen_branch_ids.push_back(br.id);
    adj[static_cast<size_t>(br.from_bus)].push_back(br.to_bus);
    adj[static_cast<size_t>(br.to_bus)].push_back(br.from_bus);
  }
  std::sort(seen_branch_ids.begin(), seen_branch_ids.end());
  if (std::adjacent_find(seen_branch_ids.begin(), seen_branch_ids.end()) != seen_branch_ids.end()) {
    throw ValidationError("duplicate branch id");
  }

  std::vector<char> visited(static_cast<size_t>(n), 0);
  std::queue<int> frontier;
  frontier.push(0);
  visited[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int v : adj[static_cast<size_t>(u)]) {
      if (!visited[static_cast<size_t>(v)]) {
        visited[static_cast<size_t>(v)] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  if (reached != n) {
    for (int i = 0; i < n; ++i) {
      if (!visited[static_cast<size_t>(i)]) {
        throw ValidationError("grid is not connected: bus " + std::to_string(i) +
                              " unreachable from bus 0");
      }
    }
  }
}

namespace {

double require_number(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.contains(key) || !obj[key].is_number()) {
    throw ParseError(ctx + ": missing or non-numeric field '" + key + "'");
  }
  return obj[key].get<double>();
}

int require_int(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.contains(key) || !obj[key].is_number_integer()) {
    throw ParseError(ctx + ": missing or non-integer field '" + key + "'");
  }
  return obj[key].get<int>();
}

}  // namespace

GridModel grid_from_json_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError(origin + ": top level must be an object");

  GridModel grid;
  grid.s_base = root.contains("s_base") ? require_number(root, "s_base", origin) : 100.0;
  if (!root.contains("buses") || !root["buses"].is_array()) {
    throw ParseError(origin + ": missing 'buses' array");
  }
  if (!root.contains("branches") || !root["branches"].is_array()) {
    throw ParseError(origin + ": missing 'branches' array");
  }

  for (const json& jb : root["buses"]) {
    const std::string ctx = origin + ": bus entry " + std::to_string(grid.buses.size());
    Bus b;
    b.id = require_int(jb, "id", ctx);
    if (!jb.contains("kind") || !jb["kind"].is_string()) {
      throw ParseError(ctx + ": missing 'kind'");
    }
    b.kind = bus_kind_from_string(jb["kind"].get<std::string>());
    b.v0 = require_number(jb, "v0", ctx);
    b.delta0 = require_number(jb, "delta0", ctx);
    b.p0 = require_number(jb, "p0", ctx);
    b.q0 = require_number(jb, "q0", ctx);
    b.vmin = require_number(jb, "vmin", ctx);
    b.vmax = require_number(jb, "vmax", ctx);
    b.shunt_p = jb.contains("shunt_p") ? require_number(jb, "shunt_p", ctx) : 0.0;
    b.shunt_q = jb.contains("shunt_q") ? require_number(jb, "shunt_q", ctx) : 0.0;
    grid.buses.push_back(b);
  }
  for (const json& jb : root["branches"]) {
    const std::string ctx = origin + ": branch entry " + std::to_string(grid.branches.size());
    Branch br;
    br.id = require_int(jb, "id", ctx);
    br.from_bus = require_int(jb, "from_bus", ctx);
    br.to_bus = require_int(jb, "to_bus", ctx);
    br.y_mag = require_number(jb, "y_mag", ctx);
    br.theta = require_number(jb, "theta", ctx);
    br.i_max = require_number(jb, "i_max", ctx);
    grid.branches.push_back(br);
  }

  validate(grid);
  return grid;
}

std::string grid_to_json_text(const GridModel& grid) {
  json root;
  root["s_base"] = grid.s_base;
  root["buses"] = json::array();
  for (const Bus& b : grid.buses) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = to_string(b.kind);
    jb["v0"] = b.v0;
    jb["delta0"] = b.delta0;
    jb["p0"] = b.p0;
    jb["q0"] = b.q0;
    jb["vmin"] = b.vmin;
    jb["vmax"] = b.vmax;
    jb["shunt_p"] = b.shunt_p;
    jb["shunt_q"] = b.shunt_q;
    root["buses"].push_back(jb);
  }
  root["branches"] = json::array();
  for (const Branch& br : grid.branches) {
    json jb;
    jb["id"] = br.id;
    jb["from_bus"] = br.from_bus;
    jb["to_bus"] = br.to_bus;
    jb["y_mag"] = br.y_mag;
    jb["theta"] = br.theta;
    jb["i_max"] = br.i_max;
    root["branches"].push_back(jb);
  }
  return root.dump(2) + "\n";
}

GridModel load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open grid file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return grid_from_json_text(buf.str(), path);
}

void save_grid(const GridModel& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write grid file '" + path + "'");
  out << grid_to_json_text(grid);
}

Eigen::MatrixXcd admittance_matrix(const GridModel& grid) {
  const int n = grid.bus_count();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const Branch& br : grid.branches) {
    const std::complex<double> yb = std::polar(br.y_mag, br.theta);
    y(br.from_bus, br.to_bus) -= yb;
    y(br.to_bus, br.from_bus) -= yb;
    y(br.from_bus, br.from_bus) += yb;
    y(br.to_bus, br.to_bus) += yb;
  }
  return y;
}

Incidence incidence(const GridModel& grid) {
  Incidence inc;
  inc.terminal_bus.reserve(static_cast<size_t>(2 * grid.branch_count()));
  for (const Branch& br : grid.branches) {
    inc.terminal_bus.push_back(br.from_bus);
    inc.terminal_bus.push_back(br.to_bus);
  }
  return inc;
}

std::uint64_t SeededRng::next_u64() {
  // splitmix64; stable across platforms.
  state_ += 0x9E3779B97f4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int SeededRng::uniform_int(int lo, int hi) {
  return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

namespace {

Branch make_line(int id, int from, int to, double r, double x, double i_max) {
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

GridModel synth_grid(int n_buses, std::uint64_t seed) {
  if (n_buses < 2) throw ValidationError("synth_grid needs n_buses >= 2");
  SeededRng rng(seed * 0x5851F42D4C957F2Dull + 0x14057B7EF767814Full);

  GridModel grid;
  grid.s_base = 100.0;
  grid.buses.resize(static_cast<size_t>(n_buses));
  for (int i = 0; i < n_buses; ++i) {
    Bus& b = grid.buses[static_cast<size_t>(i)];
    b.id = i;
    b.kind = (i == 0) ? BusKind::Slack : BusKind::Fixed;
    b.v0 = 1.0;
    b.delta0 = 0.0;
    b.vmin = 0.95;
    b.vmax = 1.05;
  }

  int next_branch = 0;
  if (n_buses == 2) {
    grid.branches.push_back(make_line(next_branch++, 0, 1, 0.01, 0.08, 2.0));
    grid.buses[1].p0 = -0.3;
    grid.buses[1].q0 = -0.1;
    return grid;
  }

  const int ring = n_buses - 1;  // buses 1..n-1 form the HV ring
  // EHV feed-ins: strong links from the common slack into the ring.
  std::vector<int> taps;
  taps.push_back(1);
  if (ring >= 3) taps.push_back(1 + ring / 3);
  if (ring >= 5) taps.push_back(1 + (2 * ring) / 3);
  for (int tap : taps) {
    grid.branches.push_back(make_line(next_branch++, 0, tap, 0.004, 0.035, 4.0));
  }

  for (int i = 1; i <= ring; ++i) {
    const int j = (i == ring) ? 1 : i + 1;
    if (ring >= 2 && !(ring == 2 && i == 2)) {
      const double jitter = 0.8 + 0.4 * rng.uniform();
      grid.branches.push_back(
          make_line(next_branch++, i, j, 0.012 * jitter, 0.09 * jitter, 1.6));
    }
  }
  // A few chords for meshing.
  const int n_chords = ring / 8;
  for (int c = 0; c < n_chords; ++c) {
    const int a = rng.uniform_int(1, ring);
    const int b = rng.uniform_int(1, ring);
    if (a == b || std::abs(a - b) == 1 || std::abs(a - b) == ring - 1) continue;
    bool dup = false;
    for (const Branch& br : grid.branches) {
      if ((br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a)) dup = true;
    }
    if (dup) continue;
    const double jitter = 0.9 + 0.3 * rng.uniform();
    grid.branches.push_back(make_line(next_branch++, a, b, 0.015 * jitter, 0.11 * jitter, 1.4));
  }

  // Loads everywhere, a few wind parks. Injection-positive convention.
  for (int i = 1; i <= ring; ++i) {
    Bus& b = grid.buses[static_cast<size_t>(i)];
    b.p0 = -rng.uniform(0.10, 0.35);
    b.q0 = b.p0 * rng.uniform(0.2, 0.4);
  }
  const int n_wind = std::max(1, ring / 7);
  for (int w = 0; w < n_wind; ++w) {
    const int i = rng.uniform_int(1, ring);
    Bus& b = grid.buses[static_cast<size_t>(i)];
    b.p0 = rng.uniform(0.4, 0.9);
    b.q0 = 0.0;
  }

  return grid;
}

}  // namespace flexgrid
