#include "flexgrid/powerflow.hpp"

#include <cmath>
#include <sstream>

#include "flexgrid/errors.hpp"

namespace flexgrid {

namespace {

struct YParts {
  Eigen::MatrixXd g, b;
};

YParts real_admittance(const GridModel& grid) {
  Eigen::MatrixXcd y = admittance_matrix(grid);
  return {y.real(), y.imag()};
}

std::vector<int> non_slack_ids(const GridModel& grid) {
  std::vector<int> ids;
  const int slack = grid.slack_index();
  for (int i = 0; i < grid.bus_count(); ++i) {
    if (i != slack) ids.push_back(i);
  }
  return ids;
}

}  // namespace

void compute_injections(const GridModel& grid, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& delta, Eigen::VectorXd& p_out,
                        Eigen::VectorXd& q_out) {
  const int n = grid.bus_count();
  const YParts y = real_admittance(grid);
  p_out.setZero(n);
  q_out.setZero(n);
  for (int i = 0; i < n; ++i) {
    double p = 0.0, q = 0.0;
    for (int j = 0; j < n; ++j) {
      if (y.g(i, j) == 0.0 && y.b(i, j) == 0.0) continue;
      const double dij = delta(i) - delta(j);
      const double c = std::cos(dij), s = std::sin(dij);
      p += v(j) * (y.g(i, j) * c + y.b(i, j) * s);
      q += v(j) * (y.g(i, j) * s - y.b(i, j) * c);
    }
    p_out(i) = v(i) * p;
    q_out(i) = v(i) * q;
  }
}

Eigen::MatrixXd pf_jacobian(const GridModel& grid, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& delta) {
  const int n = grid.bus_count();
  const YParts y = real_admittance(grid);
  Eigen::VectorXd p(n), q(n);
  compute_injections(grid, v, delta, p, q);

  const std::vector<int> ids = non_slack_ids(grid);
  const int m = static_cast<int>(ids.size());
  Eigen::MatrixXd jac(2 * m, 2 * m);
  for (int r = 0; r < m; ++r) {
    const int i = ids[static_cast<size_t>(r)];
    for (int c = 0; c < m; ++c) {
      const int j = ids[static_cast<size_t>(c)];
      if (i == j) {
        jac(r, c) = -q(i) - y.b(i, i) * v(i) * v(i);              // dP/ddelta
        jac(r, m + c) = p(i) / v(i) + y.g(i, i) * v(i);           // dP/dv
        jac(m + r, c) = p(i) - y.g(i, i) * v(i) * v(i);           // dQ/ddelta
        jac(m + r, m + c) = q(i) / v(i) - y.b(i, i) * v(i);       // dQ/dv
      } else {
        const double dij = delta(i) - delta(j);
        const double cs = std::cos(dij), sn = std::sin(dij);
        const double gij = y.g(i, j), bij = y.b(i, j);
        jac(r, c) = v(i) * v(j) * (gij * sn - bij * cs);
        jac(r, m + c) = v(i) * (gij * cs + bij * sn);
        jac(m + r, c) = -v(i) * v(j) * (gij * cs + bij * sn);
        jac(m + r, m + c) = v(i) * (gij * sn - bij * cs);
      }
    }
  }
  return jac;
}

PfSolution solve_powerflow(const GridModel& grid, const PfOptions& options) {
  const int n = grid.bus_count();
  const std::vector<int> ids = non_slack_ids(grid);
  const int m = static_cast<int>(ids.size());

  Eigen::VectorXd v(n), delta(n), p_spec(n), q_spec(n);
  for (int i = 0; i < n; ++i) {
    const Bus& b = grid.buses[static_cast<size_t>(i)];
    v(i) = b.v0;
    delta(i) = b.delta0;
    p_spec(i) = b.p0 + b.shunt_p;
    q_spec(i) = b.q0 + b.shunt_q;
  }

  PfSolution sol;
  Eigen::VectorXd p(n), q(n);
  for (int iter = 0; iter <= options.max_iters; ++iter) {
    compute_injections(grid, v, delta, p, q);
    Eigen::VectorXd rhs(2 * m);
    for (int r = 0; r < m; ++r) {
      const int i = ids[static_cast<size_t>(r)];
      rhs(r) = p_spec(i) - p(i);
      rhs(m + r) = q_spec(i) - q(i);
    }
    const double worst = rhs.lpNorm<Eigen::Infinity>();
    if (worst < options.tol) {
      sol.v = v;
      sol.delta = delta;
      sol.p_inj = p;
      sol.q_inj = q;
      sol.iterations = iter;
      sol.mismatch = worst;
      return sol;
    }
    if (iter == options.max_iters) break;

    Eigen::MatrixXd jac = pf_jacobian(grid, v, delta);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    Eigen::VectorXd step = lu.solve(rhs);
    if (!step.allFinite()) {
      throw NumericalError("power flow Jacobian is singular at iteration " +
                           std::to_string(iter));
    }
    for (int r = 0; r < m; ++r) {
      const int i = ids[static_cast<size_t>(r)];
      delta(i) += step(r);
      v(i) += step(m + r);
      if (v(i) < 1e-3) v(i) = 1e-3;  // keep magnitudes physical mid-iteration
    }
  }

  std::ostringstream msg;
  msg << "power flow did not converge in " << options.max_iters
      << " iterations (last mismatch ";
  {
    compute_injections(grid, v, delta, p, q);
    double worst = 0.0;
    for (int r = 0; r < m; ++r) {
      const int i = ids[static_cast<size_t>(r)];
      worst = std::max(worst, std::abs(p_spec(i) - p(i)));
      worst = std::max(worst, std::abs(q_spec(i) - q(i)));
    }
    msg << worst << " pu)";
  }
  throw ConvergenceError(msg.str());
}

Eigen::VectorXd branch_currents(const GridModel& grid, const PfSolution& sol) {
  Eigen::VectorXd out(grid.branch_count());
  for (int b = 0; b < grid.branch_count(); ++b) {
    const Branch& br = grid.branches[static_cast<size_t>(b)];
    const std::complex<double> vf = std::polar(sol.v(br.from_bus), sol.delta(br.from_bus));
    const std::complex<double> vt = std::polar(sol.v(br.to_bus), sol.delta(br.to_bus));
    out(b) = br.y_mag * std::abs(vf - vt);
  }
  return out;
}

SensitivityBundle sensitivities(const GridModel& grid, const PfSolution& sol) {
  SensitivityBundle bundle;
  bundle.non_slack = non_slack_ids(grid);
  const int m = static_cast<int>(bundle.non_slack.size());

  Eigen::MatrixXd jac = pf_jacobian(grid, sol.v, sol.delta);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
  Eigen::MatrixXd inv = lu.solve(Eigen::MatrixXd::Identity(2 * m, 2 * m));
  if (!inv.allFinite()) {
    throw NumericalError("sensitivity computation failed: singular Jacobian");
  }
  bundle.ddelta_dp = inv.topLeftCorner(m, m);
  bundle.ddelta_dq = inv.topRightCorner(m, m);
  bundle.dv_dp = inv.bottomLeftCorner(m, m);
  bundle.dv_dq = inv.bottomRightCorner(m, m);

  // Branch-current magnitude gradients w.r.t. bus angles/magnitudes, chained
  // through the injection sensitivities.
  const int nb = grid.branch_count();
  Eigen::MatrixXd di_ddelta = Eigen::MatrixXd::Zero(nb, m);
  Eigen::MatrixXd di_dv = Eigen::MatrixXd::Zero(nb, m);
  std::vector<int> pos(static_cast<size_t>(grid.bus_count()), -1);
  for (int r = 0; r < m; ++r) pos[static_cast<size_t>(bundle.non_slack[static_cast<size_t>(r)])] = r;

  for (int b = 0; b < nb; ++b) {
    const Branch& br = grid.branches[static_cast<size_t>(b)];
    const int f = br.from_bus, t = br.to_bus;
    const double vf = sol.v(f), vt = sol.v(t);
    const double dft = sol.delta(f) - sol.delta(t);
    const double cs = std::cos(dft), sn = std::sin(dft);
    const double dist = std::sqrt(std::max(vf * vf + vt * vt - 2.0 * vf * vt * cs, 0.0));
    if (dist < 1e-12) continue;  // zero-flow branch: gradient left at zero
    const double g_vf = br.y_mag * (vf - vt * cs) / dist;
    const double g_vt = br.y_mag * (vt - vf * cs) / dist;
    const double g_df = br.y_mag * (vf * vt * sn) / dist;
    if (pos[static_cast<size_t>(f)] >= 0) {
      di_dv(b, pos[static_cast<size_t>(f)]) = g_vf;
      di_ddelta(b, pos[static_cast<size_t>(f)]) = g_df;
    }
    if (pos[static_cast<size_t>(t)] >= 0) {
      di_dv(b, pos[static_cast<size_t>(t)]) = g_vt;
      di_ddelta(b, pos[static_cast<size_t>(t)]) = -g_df;
    }
  }
  bundle.di_dp = di_ddelta * bundle.ddelta_dp + di_dv * bundle.dv_dp;
  bundle.di_dq = di_ddelta * bundle.ddelta_dq + di_dv * bundle.dv_dq;
  return bundle;
}

PfDelta predict(const SensitivityBundle& bundle, const Eigen::VectorXd& dp,
                const Eigen::VectorXd& dq) {
  PfDelta d;
  d.ddelta = bundle.ddelta_dp * dp + bundle.ddelta_dq * dq;
  d.dv = bundle.dv_dp * dp + bundle.dv_dq * dq;
  d.di = bundle.di_dp * dp + bundle.di_dq * dq;
  return d;
}

}  // namespace flexgrid
