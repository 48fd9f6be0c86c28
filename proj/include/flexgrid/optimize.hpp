#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexgrid/convexify.hpp"
#include "flexgrid/for_geometry.hpp"
#include "flexgrid/grid_model.hpp"
#include "flexgrid/powerflow.hpp"

namespace flexgrid {

enum class RowSense { LE, GE, EQ };

struct LpVar {
  std::string name;
  double lo = 0.0, hi = 0.0;  // +-infinity allowed
  double cost = 0.0;
};

struct LpRow {
  std::string name;
  std::vector<std::pair<int, double>> coeffs;  // (var index, coefficient)
  RowSense sense = RowSense::LE;
  double rhs = 0.0;
};

struct LpModel {
  std::vector<LpVar> vars;
  std::vector<LpRow> rows;

  int add_var(const std::string& name, double lo, double hi, double cost = 0.0);
  void add_row(const std::string& name, std::vector<std::pair<int, double>> coeffs,
               RowSense sense, double rhs);
  int var_index(const std::string& name) const;  // -1 when absent
};

// Binary variables appear only inside SOS1 groups; the sum-to-one equality
// row is part of the base model.
struct Sos1Group {
  std::string name;
  std::vector<int> var_idx;
};

struct MilpModel {
  LpModel base;
  std::vector<Sos1Group> groups;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

std::string to_string(SolveStatus status);

struct Solution {
  SolveStatus status = SolveStatus::Infeasible;
  double objective = 0.0;
  Eigen::VectorXd x;  // one entry per model variable (binaries included)
  double gap = 0.0;   // remaining bound gap when the node limit cuts the search
  int nodes = 0;
};

struct SimplexOptions {
  double tol = 1e-9;          // pivot / reduced-cost tolerance
  double feas_tol = 1e-7;     // feasibility check on the result
  int max_iters = 50000;
  int refactor_every = 100;
};

Solution solve_lp(const LpModel& model, const SimplexOptions& options = {});

struct MilpOptions {
  SimplexOptions lp;
  double gap = 1e-6;      // absolute optimality gap
  int node_limit = 100000;
};

Solution solve_milp(const MilpModel& model, const MilpOptions& options = {});

// CPLEX-style LP text for manual cross-checking against external solvers.
std::string lp_format(const LpModel& model, const std::vector<Sos1Group>& binaries = {});

// Per-bus price on |dp| (pu); buses without an entry pay the default 1.0.
using CostMap = std::map<int, double>;

// The three problem builders share one variable layout: per non-slack bus
// [dp, dq, ddelta, dv] plus a +/- split carrying the |dp| cost at flexible
// buses; fixed buses have dp, dq pinned to zero; the slack bus is absent.
// Region geometry enters rebased to the current operating state.
MilpModel build_milp_2d(const GridModel& grid, const PfSolution& state,
                        const SensitivityBundle& sens,
                        const std::vector<SegmentedFor>& regions, const CostMap& costs);

MilpModel build_milp_3d(const GridModel& grid, const PfSolution& state,
                        const SensitivityBundle& sens,
                        const std::vector<SegmentedFor>& regions, const CostMap& costs);

LpModel build_convex_lp(const GridModel& grid, const PfSolution& state,
                        const SensitivityBundle& sens,
                        const std::vector<HalfSpaceSet>& hulls, const CostMap& costs);

}  // namespace flexgrid
