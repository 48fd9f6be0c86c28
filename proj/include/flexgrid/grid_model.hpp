#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexgrid/errors.hpp"

namespace flexgrid {

enum class BusKind { Slack, Flexible, Fixed };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& s);

/// One HV bus. Powers use the injection-positive (generator) sign
/// convention; shunt_p/shunt_q are constant powers, never admittances.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::Fixed;
  double v0 = 1.0;       // pu
  double delta0 = 0.0;   // rad
  double p0 = 0.0;       // pu injection
  double q0 = 0.0;       // pu injection
  double vmin = 0.9;     // pu
  double vmax = 1.1;     // pu
  double shunt_p = 0.0;  // pu, constant, injection-positive
  double shunt_q = 0.0;  // pu, constant, injection-positive
};

/// Series branch, admittance in polar form: y = y_mag * exp(j*theta).
struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double y_mag = 0.0;  // pu
  double theta = 0.0;  // rad
  double i_max = 0.0;  // pu thermal limit
};

struct GridModel {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  double s_base = 100.0;  // MVA

  int bus_count() const { return static_cast<int>(buses.size()); }
  int branch_count() const { return static_cast<int>(branches.size()); }
  /// Index of the unique slack bus. Grids are validated so this exists.
  int slack_index() const;
  /// Bus ids double as indices: validation requires ids 0..n-1 in order.
  const Bus& bus(int id) const { return buses.at(static_cast<size_t>(id)); }
};

/// Checks every GridModel invariant: contiguous ids, exactly one slack,
/// resolvable branch endpoints, vmin < vmax, positive y_mag/i_max,
/// connectivity. Throws ValidationError naming the violated invariant.
void validate(const GridModel& grid);

GridModel load_grid(const std::string& path);
void save_grid(const GridModel& grid, const std::string& path);

GridModel grid_from_json_text(const std::string& text, const std::string& origin);
std::string grid_to_json_text(const GridModel& grid);

/// Bus admittance matrix from series branches only. Shunts are constant
/// powers and never enter this matrix, so row sums are exactly zero.
Eigen::MatrixXcd admittance_matrix(const GridModel& grid);

/// Bus index per branch terminal. Terminal 2b is the from-end of branch b,
/// terminal 2b+1 the to-end.
struct Incidence {
  std::vector<int> terminal_bus;  // size 2 * branch_count
  int terminal_count() const { return static_cast<int>(terminal_bus.size()); }
};

Incidence incidence(const GridModel& grid);

/// Deterministic synthetic HV grid: one slack feeding a ring of load and
/// wind-park buses through a few strong links, plus seeded chords. Same
/// (n_buses, seed) always yields the same grid.
GridModel synth_grid(int n_buses, std::uint64_t seed);

/// Deterministic xorshift-free uniform doubles on top of splitmix64.
/// Shared by the fixture generators so outputs never depend on the
/// standard library's distribution internals.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int uniform_int(int lo, int hi);        // [lo, hi] inclusive

 private:
  std::uint64_t state_;
};

}  // namespace flexgrid
