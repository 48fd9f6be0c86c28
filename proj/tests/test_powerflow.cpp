#include <doctest.h>

#include <cmath>
#include <complex>

#include "flexgrid/errors.hpp"
#include "flexgrid/grid_model.hpp"
#include "flexgrid/powerflow.hpp"

using namespace flexgrid;

namespace {

GridModel two_bus() {
  GridModel g;
  Bus slack;
  slack.id = 0;
  slack.kind = BusKind::Slack;
  Bus load;
  load.id = 1;
  load.kind = BusKind::Fixed;
  load.p0 = -0.5;
  load.q0 = -0.2;
  g.buses = {slack, load};
  Branch br;
  br.id = 0;
  br.from_bus = 0;
  br.to_bus = 1;
  br.y_mag = 10.0;
  br.theta = -1.4;
  br.i_max = 1.0;
  g.branches = {br};
  return g;
}

}  // namespace

TEST_CASE("two-bus solution matches the closed form") {
  // Frozen from tests/oracles/twobus_pf.py (quadratic in |V|^2, high root).
  const double v1 = 0.969794739256412;
  const double delta1 = -0.047319567395720;
  const double slack_p = 0.505240869240143;
  const double slack_q = 0.230385950422399;

  PfSolution sol = solve_powerflow(two_bus());
  CHECK(sol.v(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sol.delta(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sol.v(1) == doctest::Approx(v1).epsilon(1e-9));
  CHECK(sol.delta(1) == doctest::Approx(delta1).epsilon(1e-9));
  CHECK(sol.p_inj(0) == doctest::Approx(slack_p).epsilon(1e-8));
  CHECK(sol.q_inj(0) == doctest::Approx(slack_q).epsilon(1e-8));
  CHECK(sol.iterations <= 6);
}

TEST_CASE("solved injections satisfy the specified balance") {
  GridModel g = synth_grid(30, 42);
  PfSolution sol = solve_powerflow(g);
  const int slack = g.slack_index();
  for (int i = 0; i < g.bus_count(); ++i) {
    if (i == slack) continue;
    const Bus& b = g.buses[static_cast<size_t>(i)];
    CHECK(sol.p_inj(i) == doctest::Approx(b.p0 + b.shunt_p).epsilon(1e-7));
    CHECK(sol.q_inj(i) == doctest::Approx(b.q0 + b.shunt_q).epsilon(1e-7));
  }
  // Slack covers the net load plus losses: total computed P sums to losses >= 0.
  const double total_p = sol.p_inj.sum();
  CHECK(total_p >= 0.0);
  CHECK(total_p < 0.2);
}

TEST_CASE("analytic Jacobian matches central finite differences") {
  GridModel g = synth_grid(8, 3);
  // Evaluate off the flat start so every block is exercised.
  Eigen::VectorXd v(8), delta(8);
  SeededRng rng(11);
  for (int i = 0; i < 8; ++i) {
    v(i) = 1.0 + rng.uniform(-0.05, 0.05);
    delta(i) = rng.uniform(-0.15, 0.15);
  }

  Eigen::MatrixXd jac = pf_jacobian(g, v, delta);
  const int slack = g.slack_index();
  std::vector<int> ids;
  for (int i = 0; i < 8; ++i) {
    if (i != slack) ids.push_back(i);
  }
  const int m = static_cast<int>(ids.size());
  const double h = 1e-6;

  Eigen::VectorXd pp(8), qp(8), pm(8), qm(8);
  for (int c = 0; c < 2 * m; ++c) {
    Eigen::VectorXd vp = v, vm = v, dp = delta, dm = delta;
    const int bus = ids[static_cast<size_t>(c % m)];
    if (c < m) {
      dp(bus) += h;
      dm(bus) -= h;
    } else {
      vp(bus) += h;
      vm(bus) -= h;
    }
    compute_injections(g, vp, dp, pp, qp);
    compute_injections(g, vm, dm, pm, qm);
    for (int r = 0; r < m; ++r) {
      const int i = ids[static_cast<size_t>(r)];
      const double fd_p = (pp(i) - pm(i)) / (2 * h);
      const double fd_q = (qp(i) - qm(i)) / (2 * h);
      CHECK(jac(r, c) == doctest::Approx(fd_p).epsilon(1e-6).scale(1.0));
      CHECK(jac(m + r, c) == doctest::Approx(fd_q).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("branch currents match direct phasor arithmetic") {
  GridModel g = two_bus();
  PfSolution sol = solve_powerflow(g);
  Eigen::VectorXd cur = branch_currents(g, sol);
  const std::complex<double> vf = std::polar(sol.v(0), sol.delta(0));
  const std::complex<double> vt = std::polar(sol.v(1), sol.delta(1));
  const std::complex<double> i = std::polar(10.0, -1.4) * (vf - vt);
  CHECK(cur(0) == doctest::Approx(std::abs(i)).epsilon(1e-12));
  // |S| at the receiving end ~ v * i
  CHECK(cur(0) * sol.v(1) == doctest::Approx(std::hypot(0.5, 0.2)).epsilon(1e-2));
}

TEST_CASE("sensitivities agree with re-solved deltas") {
  GridModel g = synth_grid(30, 42);
  PfSolution base = solve_powerflow(g);
  SensitivityBundle bundle = sensitivities(g, base);
  const int m = static_cast<int>(bundle.non_slack.size());
  Eigen::VectorXd base_i = branch_currents(g, base);

  // Perturb injections at a handful of buses and compare against re-solve.
  const double step = 0.01;
  std::vector<int> targets = {3, 11, 19, 27};
  for (int t : targets) {
    GridModel g2 = g;
    g2.buses[static_cast<size_t>(t)].p0 += step;
    g2.buses[static_cast<size_t>(t)].q0 += 0.5 * step;
    PfSolution moved = solve_powerflow(g2);

    Eigen::VectorXd dp = Eigen::VectorXd::Zero(m), dq = Eigen::VectorXd::Zero(m);
    for (int r = 0; r < m; ++r) {
      if (bundle.non_slack[static_cast<size_t>(r)] == t) {
        dp(r) = step;
        dq(r) = 0.5 * step;
      }
    }
    PfDelta pred = predict(bundle, dp, dq);
    for (int r = 0; r < m; ++r) {
      const int i = bundle.non_slack[static_cast<size_t>(r)];
      CHECK(pred.dv(r) == doctest::Approx(moved.v(i) - base.v(i)).scale(1.0).epsilon(1e-4));
      CHECK(pred.ddelta(r) ==
            doctest::Approx(moved.delta(i) - base.delta(i)).scale(1.0).epsilon(1e-4));
    }
    Eigen::VectorXd moved_i = branch_currents(g2, moved);
    for (int b = 0; b < g.branch_count(); ++b) {
      CHECK(pred.di(b) == doctest::Approx(moved_i(b) - base_i(b)).scale(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("prediction is linear in the injection deltas") {
  GridModel g = synth_grid(12, 9);
  PfSolution base = solve_powerflow(g);
  SensitivityBundle bundle = sensitivities(g, base);
  const int m = static_cast<int>(bundle.non_slack.size());
  SeededRng rng(4);
  Eigen::VectorXd dp(m), dq(m);
  for (int r = 0; r < m; ++r) {
    dp(r) = rng.uniform(-0.02, 0.02);
    dq(r) = rng.uniform(-0.02, 0.02);
  }
  PfDelta one = predict(bundle, dp, dq);
  PfDelta twice = predict(bundle, 2 * dp, 2 * dq);
  CHECK((twice.dv - 2 * one.dv).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((twice.ddelta - 2 * one.ddelta).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((twice.di - 2 * one.di).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("hopeless loading raises a convergence error") {
  GridModel g = two_bus();
  g.buses[1].p0 = -50.0;
  CHECK_THROWS_AS(solve_powerflow(g), ConvergenceError);
}

TEST_CASE("random synthetic grids converge and balance") {
  for (std::uint64_t seed : {1ull, 17ull, 400ull, 9001ull, 123456ull}) {
    GridModel g = synth_grid(20, seed);
    PfSolution sol = solve_powerflow(g);
    CHECK(sol.mismatch < 1e-8);
    const int slack = g.slack_index();
    for (int i = 0; i < g.bus_count(); ++i) {
      if (i == slack) continue;
      const Bus& b = g.buses[static_cast<size_t>(i)];
      CHECK(std::abs(sol.p_inj(i) - b.p0 - b.shunt_p) < 1e-7);
      CHECK(std::abs(sol.q_inj(i) - b.q0 - b.shunt_q) < 1e-7);
    }
  }
}
