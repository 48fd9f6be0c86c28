#pragma once

#include <Eigen/Dense>

#include "flexgrid/grid_model.hpp"

namespace flexgrid {

struct PfOptions {
  double tol = 1e-8;   // max |mismatch| in pu
  int max_iters = 25;
};

struct PfSolution {
  Eigen::VectorXd v;      // per-bus magnitude, pu
  Eigen::VectorXd delta;  // per-bus angle, rad
  Eigen::VectorXd p_inj;  // computed net injections at the solution, pu
  Eigen::VectorXd q_inj;
  int iterations = 0;
  double mismatch = 0.0;  // final max |mismatch|
};

// Net complex-power injections S = diag(V) conj(Y V) evaluated at (v, delta).
void compute_injections(const GridModel& grid, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& delta, Eigen::VectorXd& p_out,
                        Eigen::VectorXd& q_out);

// Power-flow Jacobian over non-slack buses, variable order [delta; v],
// equation order [P; Q].
Eigen::MatrixXd pf_jacobian(const GridModel& grid, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& delta);

// Newton-Raphson in polar form. Slack holds v0/delta0; every other bus is a
// PQ node with specified injection p0 + shunt_p, q0 + shunt_q. Throws
// ConvergenceError when the mismatch fails to reach tol.
PfSolution solve_powerflow(const GridModel& grid, const PfOptions& options = {});

// Branch series-current magnitudes |y (V_from - V_to)| in pu, one per branch.
Eigen::VectorXd branch_currents(const GridModel& grid, const PfSolution& sol);

// First-order response of the operating point to injection changes at
// non-slack buses, taken at a solved operating point. Matrix rows/columns
// are ordered by `non_slack`.
struct SensitivityBundle {
  std::vector<int> non_slack;  // bus ids, position = matrix index
  Eigen::MatrixXd ddelta_dp, ddelta_dq;  // (n-1) x (n-1)
  Eigen::MatrixXd dv_dp, dv_dq;          // (n-1) x (n-1)
  Eigen::MatrixXd di_dp, di_dq;          // branches x (n-1)
};

SensitivityBundle sensitivities(const GridModel& grid, const PfSolution& sol);

struct PfDelta {
  Eigen::VectorXd ddelta, dv;  // over non-slack buses
  Eigen::VectorXd di;          // over branches
};

// Linearized prediction for injection deltas ordered like bundle.non_slack.
PfDelta predict(const SensitivityBundle& bundle, const Eigen::VectorXd& dp,
                const Eigen::VectorXd& dq);

}  // namespace flexgrid
