#include "flexgrid/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "flexgrid/errors.hpp"

namespace flexgrid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int LpModel::add_var(const std::string& name, double lo, double hi, double cost) {
  if (!(lo <= hi)) {
    throw ValidationError("variable " + name + " has inconsistent bounds");
  }
  vars.push_back({name, lo, hi, cost});
  return static_cast<int>(vars.size()) - 1;
}

void LpModel::add_row(const std::string& name, std::vector<std::pair<int, double>> coeffs,
                      RowSense sense, double rhs) {
  for (const auto& [idx, val] : coeffs) {
    if (idx < 0 || idx >= static_cast<int>(vars.size())) {
      throw ValidationError("row " + name + " references undeclared variable");
    }
    if (!std::isfinite(val)) throw ValidationError("row " + name + " has non-finite coefficient");
  }
  if (!std::isfinite(rhs)) throw ValidationError("row " + name + " has non-finite rhs");
  rows.push_back({name, std::move(coeffs), sense, rhs});
}

int LpModel::var_index(const std::string& name) const {
  for (size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

namespace {

// Bounded-variable revised simplex with a dense basis inverse. Columns are
// the structural variables, then one slack per row (sense folded into the
// slack bounds), then any phase-1 artificials.
class Simplex {
 public:
  Simplex(const LpModel& model, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
          const SimplexOptions& opt)
      : model_(model), opt_(opt) {
    n_ = static_cast<int>(model.vars.size());
    m_ = static_cast<int>(model.rows.size());
    A_ = Eigen::MatrixXd::Zero(m_, n_);
    b_ = Eigen::VectorXd::Zero(m_);
    for (int i = 0; i < m_; ++i) {
      const LpRow& row = model.rows[static_cast<size_t>(i)];
      for (const auto& [j, val] : row.coeffs) A_(i, j) += val;
      b_(i) = row.rhs;
    }
    total_ = n_ + m_;
    lo_.resize(total_);
    hi_.resize(total_);
    lo_.head(n_) = lo;
    hi_.head(n_) = hi;
    for (int i = 0; i < m_; ++i) {
      switch (model.rows[static_cast<size_t>(i)].sense) {
        case RowSense::LE: lo_(n_ + i) = 0.0; hi_(n_ + i) = kInf; break;
        case RowSense::GE: lo_(n_ + i) = -kInf; hi_(n_ + i) = 0.0; break;
        case RowSense::EQ: lo_(n_ + i) = 0.0; hi_(n_ + i) = 0.0; break;
      }
    }
  }

  Solution run() {
    init_point();
    Solution out;
    if (need_phase1_) {
      Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total_ + n_art_);
      phase1.tail(n_art_).setConstant(1.0);
      const Step r1 = iterate(phase1);
      if (r1 == Step::IterLimit) {
        out.status = SolveStatus::IterationLimit;
        return out;
      }
      if (r1 == Step::Unbounded) {
        throw NumericalError("phase-1 objective diverged; basis lost");
      }
      double infeas = 0.0;
      for (int k = 0; k < n_art_; ++k) infeas += xval_(total_ + k);
      if (infeas > opt_.feas_tol) {
        out.status = SolveStatus::Infeasible;
        return out;
      }
      for (int k = 0; k < n_art_; ++k) {  // artificials may never return
        lo_(total_ + k) = 0.0;
        hi_(total_ + k) = 0.0;
      }
    }
    Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(total_ + n_art_);
    for (int j = 0; j < n_; ++j) phase2(j) = model_.vars[static_cast<size_t>(j)].cost;
    const Step r2 = iterate(phase2);
    if (r2 == Step::IterLimit) {
      out.status = SolveStatus::IterationLimit;
      return out;
    }
    if (r2 == Step::Unbounded) {
      out.status = SolveStatus::Unbounded;
      return out;
    }
    refactor();  // tighten basic values before reporting
    check_point();
    out.status = SolveStatus::Optimal;
    out.x = xval_.head(n_);
    out.objective = 0.0;
    for (int j = 0; j < n_; ++j) out.objective += model_.vars[static_cast<size_t>(j)].cost * xval_(j);
    return out;
  }

 private:
  enum class Step { Done, Unbounded, IterLimit };
  enum VStat : int { AtLower = 0, AtUpper = 1, FreeZero = 2, Basic = 3 };

  const LpModel& model_;
  SimplexOptions opt_;
  int n_ = 0, m_ = 0, total_ = 0, n_art_ = 0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_, lo_, hi_, xval_;
  std::vector<int> art_row_;
  std::vector<double> art_sign_;
  std::vector<int> basis_;
  std::vector<int> vstat_;
  Eigen::MatrixXd Binv_;
  bool need_phase1_ = false;
  int iters_used_ = 0;

  int ncols() const { return total_ + n_art_; }

  Eigen::VectorXd column(int j) const {
    if (j < n_) return A_.col(j);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
    if (j < total_) {
      e(j - n_) = 1.0;
    } else {
      e(art_row_[static_cast<size_t>(j - total_)]) = art_sign_[static_cast<size_t>(j - total_)];
    }
    return e;
  }

  bool fixed(int j) const { return hi_(j) - lo_(j) <= 1e-12; }

  void init_point() {
    xval_ = Eigen::VectorXd::Zero(total_);
    vstat_.assign(static_cast<size_t>(total_), AtLower);
    for (int j = 0; j < total_; ++j) {
      if (std::isfinite(lo_(j))) {
        xval_(j) = lo_(j);
        vstat_[static_cast<size_t>(j)] = AtLower;
      } else if (std::isfinite(hi_(j))) {
        xval_(j) = hi_(j);
        vstat_[static_cast<size_t>(j)] = AtUpper;
      } else {
        xval_(j) = 0.0;
        vstat_[static_cast<size_t>(j)] = FreeZero;
      }
    }
    Eigen::VectorXd resid = b_;
    if (n_ > 0) resid -= A_ * xval_.head(n_);

    basis_.assign(static_cast<size_t>(m_), -1);
    Binv_ = Eigen::MatrixXd::Identity(m_, m_);
    std::vector<double> art_val;
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      if (resid(i) >= lo_(s) - 1e-12 && resid(i) <= hi_(s) + 1e-12) {
        basis_[static_cast<size_t>(i)] = s;
        vstat_[static_cast<size_t>(s)] = Basic;
        xval_(s) = resid(i);
      } else {
        const double beta = std::clamp(resid(i), lo_(s), hi_(s));
        xval_(s) = beta;
        vstat_[static_cast<size_t>(s)] = (beta == hi_(s) && std::isfinite(hi_(s))) ? AtUpper : AtLower;
        const double r = resid(i) - beta;
        art_row_.push_back(i);
        art_sign_.push_back(r >= 0.0 ? 1.0 : -1.0);
        art_val.push_back(std::abs(r));
        basis_[static_cast<size_t>(i)] = total_ + n_art_;
        Binv_(i, i) = art_sign_.back();  // basis column is +-e_i
        ++n_art_;
      }
    }
    if (n_art_ > 0) {
      need_phase1_ = true;
      const int old = total_;
      Eigen::VectorXd xv(old + n_art_), lov(old + n_art_), hiv(old + n_art_);
      xv.head(old) = xval_;
      lov.head(old) = lo_;
      hiv.head(old) = hi_;
      for (int k = 0; k < n_art_; ++k) {
        xv(old + k) = art_val[static_cast<size_t>(k)];
        lov(old + k) = 0.0;
        hiv(old + k) = kInf;
        vstat_.push_back(Basic);
      }
      xval_ = xv;
      lo_ = lov;
      hi_ = hiv;
    }
  }

  void refactor() {
    if (m_ == 0) return;
    Eigen::MatrixXd B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = column(basis_[static_cast<size_t>(i)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (!lu.isInvertible()) throw NumericalError("singular simplex basis during refactorization");
    Binv_ = lu.inverse();
    Eigen::VectorXd resid = b_;
    for (int j = 0; j < ncols(); ++j) {
      if (vstat_[static_cast<size_t>(j)] == Basic || xval_(j) == 0.0) continue;
      resid -= column(j) * xval_(j);
    }
    const Eigen::VectorXd xb = Binv_ * resid;
    for (int i = 0; i < m_; ++i) xval_(basis_[static_cast<size_t>(i)]) = xb(i);
  }

  // Reduced costs for every column under `cost`.
  Eigen::VectorXd reduced_costs(const Eigen::VectorXd& cost) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m_);
    if (m_ > 0) {
      Eigen::VectorXd cb(m_);
      for (int i = 0; i < m_; ++i) cb(i) = cost(basis_[static_cast<size_t>(i)]);
      y = Binv_.transpose() * cb;
    }
    Eigen::VectorXd d(ncols());
    d.head(n_) = cost.head(n_) - A_.transpose() * y;
    for (int i = 0; i < m_; ++i) d(n_ + i) = cost(n_ + i) - y(i);
    for (int k = 0; k < n_art_; ++k) {
      d(total_ + k) = cost(total_ + k) - art_sign_[static_cast<size_t>(k)] * y(art_row_[static_cast<size_t>(k)]);
    }
    return d;
  }

  // Improvement score of a nonbasic column; 0 means not eligible.
  double score(int j, const Eigen::VectorXd& d) const {
    if (vstat_[static_cast<size_t>(j)] == Basic || fixed(j)) return 0.0;
    switch (vstat_[static_cast<size_t>(j)]) {
      case AtLower: return d(j) < -opt_.tol ? -d(j) : 0.0;
      case AtUpper: return d(j) > opt_.tol ? d(j) : 0.0;
      case FreeZero: return std::abs(d(j)) > opt_.tol ? std::abs(d(j)) : 0.0;
      default: return 0.0;
    }
  }

  Step iterate(const Eigen::VectorXd& cost) {
    bool bland = false;
    int degen_run = 0;
    int since_refactor = 0;
    int tiny_pivots = 0;
    while (true) {
      if (iters_used_++ >= opt_.max_iters) return Step::IterLimit;
      const Eigen::VectorXd d = reduced_costs(cost);
      int enter = -1;
      double best = 0.0;
      for (int j = 0; j < ncols(); ++j) {
        const double s = score(j, d);
        if (s <= 0.0) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (s > best + 1e-15) {
          best = s;
          enter = j;
        }
      }
      if (enter < 0) return Step::Done;

      const int sigma = (vstat_[static_cast<size_t>(enter)] == AtUpper ||
                         (vstat_[static_cast<size_t>(enter)] == FreeZero && d(enter) > 0.0))
                            ? -1
                            : 1;
      const Eigen::VectorXd u = m_ > 0 ? Eigen::VectorXd(Binv_ * column(enter))
                                       : Eigen::VectorXd();

      double t_own = kInf;
      if (sigma > 0 && std::isfinite(hi_(enter))) t_own = hi_(enter) - xval_(enter);
      if (sigma < 0 && std::isfinite(lo_(enter))) t_own = xval_(enter) - lo_(enter);

      double t_min = t_own;
      int leave_pos = -1;
      double leave_bound = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double w = sigma * u(i);
        const int bj = basis_[static_cast<size_t>(i)];
        double ti = kInf, bound = 0.0;
        if (w > 1e-9) {
          if (!std::isfinite(lo_(bj))) continue;
          ti = (xval_(bj) - lo_(bj)) / w;
          bound = lo_(bj);
        } else if (w < -1e-9) {
          if (!std::isfinite(hi_(bj))) continue;
          ti = (hi_(bj) - xval_(bj)) / (-w);
          bound = hi_(bj);
        } else {
          continue;
        }
        ti = std::max(ti, 0.0);
        const bool better =
            ti < t_min - 1e-12 ||
            (ti < t_min + 1e-12 && leave_pos >= 0 &&
             (bland ? bj < basis_[static_cast<size_t>(leave_pos)]
                    : std::abs(u(i)) > std::abs(u(leave_pos)) + 1e-15));
        if (leave_pos < 0 ? ti < t_min - 1e-12 : better) {
          t_min = ti;
          leave_pos = i;
          leave_bound = bound;
        }
      }

      if (!std::isfinite(t_min)) return Step::Unbounded;

      if (t_min >= 1e-10) {
        degen_run = 0;
        if (bland) bland = false;
      } else if (++degen_run > 200) {
        bland = true;
      }

      if (leave_pos < 0 || t_own <= t_min + 1e-12) {
        // bound flip: the entering variable crosses its whole range
        const double t = t_own;
        for (int i = 0; i < m_; ++i) xval_(basis_[static_cast<size_t>(i)]) -= t * sigma * u(i);
        xval_(enter) = sigma > 0 ? hi_(enter) : lo_(enter);
        vstat_[static_cast<size_t>(enter)] = sigma > 0 ? AtUpper : AtLower;
        continue;
      }

      const double piv = u(leave_pos);
      if (std::abs(piv) < 1e-11) {
        if (++tiny_pivots > 3) {
          std::ostringstream msg;
          msg << "numerical breakdown: pivot " << piv << " in column "
              << (enter < n_ ? model_.vars[static_cast<size_t>(enter)].name : "slack")
              << " against row " << leave_pos;
          throw NumericalError(msg.str());
        }
        refactor();
        since_refactor = 0;
        continue;  // re-price with the fresh inverse
      }
      tiny_pivots = 0;
      const int leave_var = basis_[static_cast<size_t>(leave_pos)];
      for (int i = 0; i < m_; ++i) xval_(basis_[static_cast<size_t>(i)]) -= t_min * sigma * u(i);
      xval_(enter) += sigma * t_min;
      xval_(leave_var) = leave_bound;
      vstat_[static_cast<size_t>(leave_var)] =
          (std::isfinite(hi_(leave_var)) && leave_bound == hi_(leave_var)) ? AtUpper : AtLower;
      basis_[static_cast<size_t>(leave_pos)] = enter;
      vstat_[static_cast<size_t>(enter)] = Basic;

      Binv_.row(leave_pos) /= piv;
      for (int i = 0; i < m_; ++i) {
        if (i == leave_pos) continue;
        const double f = u(i);
        if (f != 0.0) Binv_.row(i) -= f * Binv_.row(leave_pos);
      }
      if (++since_refactor >= opt_.refactor_every) {
        refactor();
        since_refactor = 0;
      }
    }
  }

  void check_point() const {
    for (int j = 0; j < n_; ++j) {
      const double slack = 1e-5 * (1.0 + std::abs(xval_(j)));
      if (xval_(j) < lo_(j) - slack || xval_(j) > hi_(j) + slack) {
        throw NumericalError("solution violates bounds of " +
                             model_.vars[static_cast<size_t>(j)].name);
      }
    }
    for (int i = 0; i < m_; ++i) {
      const LpRow& row = model_.rows[static_cast<size_t>(i)];
      double lhs = 0.0;
      for (const auto& [j, val] : row.coeffs) lhs += val * xval_(j);
      const double slack = 1e-5 * (1.0 + std::abs(row.rhs));
      const bool bad = (row.sense == RowSense::LE && lhs > row.rhs + slack) ||
                       (row.sense == RowSense::GE && lhs < row.rhs - slack) ||
                       (row.sense == RowSense::EQ && std::abs(lhs - row.rhs) > slack);
      if (bad) throw NumericalError("solution violates row " + row.name);
    }
  }
};

Solution solve_bounded(const LpModel& model, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                       const SimplexOptions& opt) {
  Simplex core(model, lo, hi, opt);
  return core.run();
}

}  // namespace

Solution solve_lp(const LpModel& model, const SimplexOptions& options) {
  const int n = static_cast<int>(model.vars.size());
  Eigen::VectorXd lo(n), hi(n);
  for (int j = 0; j < n; ++j) {
    const LpVar& v = model.vars[static_cast<size_t>(j)];
    if (!(v.lo <= v.hi)) throw ValidationError("variable " + v.name + " has inconsistent bounds");
    lo(j) = v.lo;
    hi(j) = v.hi;
  }
  return solve_bounded(model, lo, hi, options);
}

namespace {

struct BbNode {
  double bound = -kInf;
  long id = 0;
  std::vector<int> pinned;  // binary vars forced to zero
};

struct BbOrder {
  bool operator()(const BbNode& a, const BbNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

}  // namespace

Solution solve_milp(const MilpModel& model, const MilpOptions& options) {
  const LpModel& base = model.base;
  const int n = static_cast<int>(base.vars.size());
  for (const Sos1Group& g : model.groups) {
    if (g.var_idx.empty()) throw ValidationError("SOS1 group " + g.name + " is empty");
    for (int j : g.var_idx) {
      if (j < 0 || j >= n) throw ValidationError("SOS1 group " + g.name + " references undeclared variable");
      const LpVar& v = base.vars[static_cast<size_t>(j)];
      if (v.lo < -1e-12 || v.hi > 1.0 + 1e-12) {
        throw ValidationError("binary " + v.name + " must be bounded in [0, 1]");
      }
    }
  }

  Eigen::VectorXd lo0(n), hi0(n);
  for (int j = 0; j < n; ++j) {
    lo0(j) = base.vars[static_cast<size_t>(j)].lo;
    hi0(j) = base.vars[static_cast<size_t>(j)].hi;
  }

  std::priority_queue<BbNode, std::vector<BbNode>, BbOrder> open;
  long next_id = 0;
  open.push({-kInf, next_id++, {}});

  Solution incumbent;
  incumbent.status = SolveStatus::Infeasible;
  incumbent.objective = kInf;
  double last_bound = -kInf;
  int processed = 0;
  const double int_tol = 1e-7;

  while (!open.empty()) {
    if (processed >= options.node_limit) {
      const double best_open = open.empty() ? last_bound : open.top().bound;
      Solution out = incumbent;
      out.status = SolveStatus::IterationLimit;
      out.nodes = processed;
      out.gap = std::isfinite(incumbent.objective) ? std::max(0.0, incumbent.objective - best_open)
                                                   : kInf;
      return out;
    }
    BbNode node = open.top();
    open.pop();
    if (std::isfinite(incumbent.objective) && node.bound >= incumbent.objective - options.gap) {
      break;  // best-first: every open node is at least this bad
    }
    ++processed;
    last_bound = std::max(last_bound, node.bound);

    Eigen::VectorXd lo = lo0, hi = hi0;
    for (int j : node.pinned) hi(j) = 0.0;
    const Solution rel = solve_bounded(base, lo, hi, options.lp);
    if (rel.status == SolveStatus::Infeasible) continue;
    if (rel.status == SolveStatus::Unbounded) {
      Solution out;
      out.status = SolveStatus::Unbounded;
      out.nodes = processed;
      return out;
    }
    if (rel.status == SolveStatus::IterationLimit) {
      Solution out = incumbent;
      out.status = SolveStatus::IterationLimit;
      out.nodes = processed;
      out.gap = kInf;
      return out;
    }
    if (std::isfinite(incumbent.objective) && rel.objective >= incumbent.objective - options.gap) {
      continue;
    }

    int branch_group = -1;
    double worst_frac = int_tol;
    for (size_t g = 0; g < model.groups.size(); ++g) {
      double vmax = 0.0;
      for (int j : model.groups[g].var_idx) vmax = std::max(vmax, rel.x(j));
      const double frac = 1.0 - vmax;
      if (frac > worst_frac + 1e-15) {
        worst_frac = frac;
        branch_group = static_cast<int>(g);
      }
    }

    if (branch_group < 0) {
      incumbent = rel;
      incumbent.status = SolveStatus::Optimal;
      continue;
    }

    const Sos1Group& g = model.groups[static_cast<size_t>(branch_group)];
    std::vector<int> active;
    for (int j : g.var_idx) {
      if (hi(j) > 0.5) active.push_back(j);
    }
    if (active.size() < 2) continue;  // sum-to-one row pins the remaining var
    double total = 0.0;
    for (int j : active) total += rel.x(j);
    double cum = 0.0;
    size_t split = 0;
    for (size_t k = 0; k + 1 < active.size(); ++k) {
      cum += rel.x(active[k]);
      split = k;
      if (cum >= 0.5 * total) break;
    }
    BbNode left{rel.objective, next_id++, node.pinned};
    for (size_t k = 0; k <= split; ++k) left.pinned.push_back(active[k]);
    BbNode right{rel.objective, next_id++, node.pinned};
    for (size_t k = split + 1; k < active.size(); ++k) right.pinned.push_back(active[k]);
    open.push(std::move(left));
    open.push(std::move(right));
  }

  incumbent.nodes = processed;
  if (incumbent.status == SolveStatus::Optimal) incumbent.gap = 0.0;
  return incumbent;
}

namespace {

void format_number(std::ostringstream& os, double v) {
  std::ostringstream tmp;
  tmp.precision(16);
  tmp << v;
  os << tmp.str();
}

void format_terms(std::ostringstream& os, const LpModel& model,
                  const std::vector<std::pair<int, double>>& terms) {
  bool first = true;
  for (const auto& [j, val] : terms) {
    if (val == 0.0) continue;
    if (first) {
      if (val < 0.0) os << "- ";
      first = false;
    } else {
      os << (val < 0.0 ? " - " : " + ");
    }
    format_number(os, std::abs(val));
    os << " " << model.vars[static_cast<size_t>(j)].name;
  }
  if (first) os << "0 " << model.vars.front().name;
}

}  // namespace

std::string lp_format(const LpModel& model, const std::vector<Sos1Group>& binaries) {
  if (model.vars.empty()) throw ValidationError("cannot format an empty model");
  std::ostringstream os;
  os << "Minimize\n obj: ";
  std::vector<std::pair<int, double>> obj;
  for (size_t j = 0; j < model.vars.size(); ++j) {
    if (model.vars[j].cost != 0.0) obj.push_back({static_cast<int>(j), model.vars[j].cost});
  }
  format_terms(os, model, obj);
  os << "\nSubject To\n";
  for (const LpRow& row : model.rows) {
    os << " " << row.name << ": ";
    format_terms(os, model, row.coeffs);
    os << (row.sense == RowSense::LE ? " <= " : row.sense == RowSense::GE ? " >= " : " = ");
    format_number(os, row.rhs);
    os << "\n";
  }
  os << "Bounds\n";
  for (const LpVar& v : model.vars) {
    os << " ";
    if (!std::isfinite(v.lo) && !std::isfinite(v.hi)) {
      os << v.name << " free";
    } else if (v.lo == v.hi) {
      os << v.name << " = ";
      format_number(os, v.lo);
    } else {
      if (std::isfinite(v.lo)) {
        format_number(os, v.lo);
      } else {
        os << "-infinity";
      }
      os << " <= " << v.name << " <= ";
      if (std::isfinite(v.hi)) {
        format_number(os, v.hi);
      } else {
        os << "+infinity";
      }
    }
    os << "\n";
  }
  bool any_bin = false;
  for (const Sos1Group& g : binaries) any_bin = any_bin || !g.var_idx.empty();
  if (any_bin) {
    os << "Binary\n";
    for (const Sos1Group& g : binaries) {
      for (int j : g.var_idx) os << " " << model.vars[static_cast<size_t>(j)].name << "\n";
    }
  }
  os << "End\n";
  return os.str();
}

namespace {

std::string tag(int id) { return std::to_string(id); }

// Shared scaffold of all three builders: per non-slack bus the four coupled
// deltas, the sensitivity equality rows, branch-current limit rows, and the
// +/- split carrying the |dp| price at flexible buses.
struct Core {
  LpModel m;
  std::vector<int> non_slack;
  std::map<int, int> pos;  // bus id -> matrix position

  int dp(int bus) const { return 4 * pos.at(bus); }
  int dq(int bus) const { return 4 * pos.at(bus) + 1; }
  int dd(int bus) const { return 4 * pos.at(bus) + 2; }
  int dv(int bus) const { return 4 * pos.at(bus) + 3; }
};

double cost_for(const CostMap& costs, int bus) {
  const auto it = costs.find(bus);
  const double c = it == costs.end() ? 1.0 : it->second;
  if (c < 0.0) throw ValidationError("negative |dp| cost for bus " + tag(bus));
  return c;
}

Core build_core(const GridModel& grid, const PfSolution& state, const SensitivityBundle& sens,
                const CostMap& costs) {
  validate(grid);
  const int n = grid.bus_count();
  if (state.v.size() != n || state.p_inj.size() != n || state.q_inj.size() != n) {
    throw ValidationError("operating state does not match the grid");
  }
  if (static_cast<int>(sens.non_slack.size()) != n - 1) {
    throw ValidationError("sensitivity bundle does not match the grid");
  }

  Core c;
  c.non_slack = sens.non_slack;
  for (size_t r = 0; r < c.non_slack.size(); ++r) c.pos[c.non_slack[r]] = static_cast<int>(r);

  for (int bus : c.non_slack) {
    const Bus& b = grid.bus(bus);
    const bool flex = b.kind == BusKind::Flexible;
    const double lo = flex ? -kInf : 0.0, hi = flex ? kInf : 0.0;
    c.m.add_var("dp_" + tag(bus), lo, hi);
    c.m.add_var("dq_" + tag(bus), lo, hi);
    c.m.add_var("ddelta_" + tag(bus), -kInf, kInf);
    c.m.add_var("dv_" + tag(bus), b.vmin - state.v(bus), b.vmax - state.v(bus));
  }
  for (int bus : c.non_slack) {
    if (grid.bus(bus).kind != BusKind::Flexible) continue;
    const double price = cost_for(costs, bus);
    const int pos_var = c.m.add_var("dp_pos_" + tag(bus), 0.0, kInf, price);
    const int neg_var = c.m.add_var("dp_neg_" + tag(bus), 0.0, kInf, price);
    c.m.add_row("abs_dp_" + tag(bus), {{c.dp(bus), 1.0}, {pos_var, -1.0}, {neg_var, 1.0}},
                RowSense::EQ, 0.0);
  }

  const int nm = static_cast<int>(c.non_slack.size());
  for (int r = 0; r < nm; ++r) {
    const int bus = c.non_slack[static_cast<size_t>(r)];
    std::vector<std::pair<int, double>> drow{{c.dd(bus), 1.0}};
    std::vector<std::pair<int, double>> vrow{{c.dv(bus), 1.0}};
    for (int k = 0; k < nm; ++k) {
      const int other = c.non_slack[static_cast<size_t>(k)];
      if (std::abs(sens.ddelta_dp(r, k)) > 1e-14) drow.push_back({c.dp(other), -sens.ddelta_dp(r, k)});
      if (std::abs(sens.ddelta_dq(r, k)) > 1e-14) drow.push_back({c.dq(other), -sens.ddelta_dq(r, k)});
      if (std::abs(sens.dv_dp(r, k)) > 1e-14) vrow.push_back({c.dp(other), -sens.dv_dp(r, k)});
      if (std::abs(sens.dv_dq(r, k)) > 1e-14) vrow.push_back({c.dq(other), -sens.dv_dq(r, k)});
    }
    c.m.add_row("sens_d_" + tag(bus), std::move(drow), RowSense::EQ, 0.0);
    c.m.add_row("sens_v_" + tag(bus), std::move(vrow), RowSense::EQ, 0.0);
  }

  const Eigen::VectorXd i0 = branch_currents(grid, state);
  for (int b = 0; b < grid.branch_count(); ++b) {
    const Branch& br = grid.branches[static_cast<size_t>(b)];
    std::vector<std::pair<int, double>> irow;
    for (int k = 0; k < nm; ++k) {
      const int other = c.non_slack[static_cast<size_t>(k)];
      if (std::abs(sens.di_dp(b, k)) > 1e-14) irow.push_back({c.dp(other), sens.di_dp(b, k)});
      if (std::abs(sens.di_dq(b, k)) > 1e-14) irow.push_back({c.dq(other), sens.di_dq(b, k)});
    }
    c.m.add_row("imax_" + tag(br.id), irow, RowSense::LE, br.i_max - i0(b));
    c.m.add_row("imin_" + tag(br.id), std::move(irow), RowSense::GE, -i0(b));
  }
  return c;
}

// Sorted copy of the regions plus the checks shared by both MILP builders:
// exactly one region per flexible bus, regions only on flexible buses.
template <typename T>
std::vector<const T*> regions_by_bus(const GridModel& grid, const std::vector<T>& items) {
  std::set<int> flex;
  for (const Bus& b : grid.buses) {
    if (b.kind == BusKind::Flexible) flex.insert(b.id);
  }
  std::vector<const T*> sorted;
  for (const T& item : items) sorted.push_back(&item);
  std::sort(sorted.begin(), sorted.end(),
            [](const T* a, const T* b) { return a->bus_id < b->bus_id; });
  std::set<int> seen;
  for (const T* item : sorted) {
    if (!flex.count(item->bus_id)) {
      throw ValidationError("FOR attached to non-flexible bus " + tag(item->bus_id));
    }
    if (!seen.insert(item->bus_id).second) {
      throw ValidationError("duplicate FOR for bus " + tag(item->bus_id));
    }
  }
  for (int bus : flex) {
    if (!seen.count(bus)) throw ValidationError("flexible bus " + tag(bus) + " has no FOR");
  }
  return sorted;
}

struct PSegment {
  double p_c_min = 0.0, dp_max = 0.0;
};

// P-axis selection: one x per segment (SOS1), one offset var bounded by its
// segment width, and the aggregation equality producing the bus dp.
std::vector<std::pair<int, int>> attach_p_segments(Core& c, MilpModel& milp, int bus,
                                                   const std::vector<PSegment>& segs, double odp) {
  std::vector<std::pair<int, int>> vars;  // (dps, xp) per segment
  Sos1Group group{"xp_" + tag(bus), {}};
  for (size_t k = 0; k < segs.size(); ++k) {
    const int dps = c.m.add_var("dps_" + tag(bus) + "_" + tag(static_cast<int>(k)), 0.0,
                                segs[k].dp_max);
    const int xp = c.m.add_var("xp_" + tag(bus) + "_" + tag(static_cast<int>(k)), 0.0, 1.0);
    vars.push_back({dps, xp});
    group.var_idx.push_back(xp);
  }
  std::vector<std::pair<int, double>> sel, agg{{c.dp(bus), 1.0}};
  for (size_t k = 0; k < segs.size(); ++k) {
    sel.push_back({vars[k].second, 1.0});
    agg.push_back({vars[k].first, -1.0});
    agg.push_back({vars[k].second, -(segs[k].p_c_min - odp)});
    c.m.add_row("pseg_" + tag(bus) + "_" + tag(static_cast<int>(k)),
                {{vars[k].first, 1.0}, {vars[k].second, -segs[k].dp_max}}, RowSense::LE, 0.0);
  }
  c.m.add_row("psel_" + tag(bus), std::move(sel), RowSense::EQ, 1.0);
  c.m.add_row("pagg_" + tag(bus), std::move(agg), RowSense::EQ, 0.0);
  milp.groups.push_back(std::move(group));
  return vars;
}

}  // namespace

MilpModel build_milp_2d(const GridModel& grid, const PfSolution& state,
                        const SensitivityBundle& sens, const std::vector<SegmentedFor>& regions,
                        const CostMap& costs) {
  MilpModel milp;
  Core c = build_core(grid, state, sens, costs);
  for (const SegmentedFor* sf : regions_by_bus(grid, regions)) {
    if (sf->dims != 2 || sf->seg2.empty()) {
      throw ValidationError("bus " + tag(sf->bus_id) + " needs a 2D segmentation");
    }
    const int bus = sf->bus_id;
    const double odp = state.p_inj(bus) - sf->op0.p;
    const double odq = state.q_inj(bus) - sf->op0.q;
    std::vector<PSegment> psegs;
    for (const Segment2D& s : sf->seg2) psegs.push_back({s.p_c_min, s.dp_max});
    const auto vars = attach_p_segments(c, milp, bus, psegs, odp);

    std::vector<std::pair<int, double>> up{{c.dq(bus), 1.0}}, lo{{c.dq(bus), 1.0}};
    for (size_t k = 0; k < sf->seg2.size(); ++k) {
      const Segment2D& s = sf->seg2[k];
      up.push_back({vars[k].first, -s.m_up});
      up.push_back({vars[k].second, -(s.q_c_init_up - odq)});
      lo.push_back({vars[k].first, -s.m_lo});
      lo.push_back({vars[k].second, -(s.q_c_init_lo - odq)});
    }
    c.m.add_row("qup_" + tag(bus), std::move(up), RowSense::LE, 0.0);
    c.m.add_row("qlo_" + tag(bus), std::move(lo), RowSense::GE, 0.0);
  }
  milp.base = std::move(c.m);
  return milp;
}

MilpModel build_milp_3d(const GridModel& grid, const PfSolution& state,
                        const SensitivityBundle& sens, const std::vector<SegmentedFor>& regions,
                        const CostMap& costs) {
  MilpModel milp;
  Core c = build_core(grid, state, sens, costs);
  for (const SegmentedFor* sf : regions_by_bus(grid, regions)) {
    if (sf->dims != 3 || sf->seg3.empty()) {
      throw ValidationError("bus " + tag(sf->bus_id) + " needs a 3D segmentation");
    }
    const int bus = sf->bus_id;
    const int K = sf->seg3.back().ki + 1;
    const int L = sf->seg3.back().li + 1;
    if (static_cast<int>(sf->seg3.size()) != K * L) {
      throw ValidationError("segment grid malformed for bus " + tag(bus));
    }
    const auto seg = [&](int k, int l) -> const Segment3D& {
      return sf->seg3[static_cast<size_t>(k * L + l)];
    };
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < L; ++l) {
        if (seg(k, l).ki != k || seg(k, l).li != l) {
          throw ValidationError("segment grid malformed for bus " + tag(bus));
        }
      }
    }
    const double odp = state.p_inj(bus) - sf->op0.p;
    const double odq = state.q_inj(bus) - sf->op0.q;
    const double odv = state.v(bus) - sf->op0.v;
    const double c_eff = sf->c_max + std::abs(odq);

    std::vector<PSegment> psegs;
    for (int k = 0; k < K; ++k) psegs.push_back({seg(k, 0).p_c_min, seg(k, 0).dp_max});
    const auto pvars = attach_p_segments(c, milp, bus, psegs, odp);

    // voltage-axis selection mirrors the P axis; the bus dv variable is both
    // the segmentation coordinate and the sensitivity output
    std::vector<std::pair<int, int>> vvars;  // (dvs, xv)
    Sos1Group vgroup{"xv_" + tag(bus), {}};
    for (int l = 0; l < L; ++l) {
      const int dvs = c.m.add_var("dvs_" + tag(bus) + "_" + tag(l), 0.0, seg(0, l).dv_max);
      const int xv = c.m.add_var("xv_" + tag(bus) + "_" + tag(l), 0.0, 1.0);
      vvars.push_back({dvs, xv});
      vgroup.var_idx.push_back(xv);
    }
    std::vector<std::pair<int, double>> vsel, vagg{{c.dv(bus), 1.0}};
    for (int l = 0; l < L; ++l) {
      vsel.push_back({vvars[static_cast<size_t>(l)].second, 1.0});
      vagg.push_back({vvars[static_cast<size_t>(l)].first, -1.0});
      vagg.push_back({vvars[static_cast<size_t>(l)].second, -(seg(0, l).v_c_min - odv)});
      c.m.add_row("vseg_" + tag(bus) + "_" + tag(l),
                  {{vvars[static_cast<size_t>(l)].first, 1.0},
                   {vvars[static_cast<size_t>(l)].second, -seg(0, l).dv_max}},
                  RowSense::LE, 0.0);
    }
    c.m.add_row("vsel_" + tag(bus), std::move(vsel), RowSense::EQ, 1.0);
    c.m.add_row("vagg_" + tag(bus), std::move(vagg), RowSense::EQ, 0.0);
    milp.groups.push_back(std::move(vgroup));

    // per-P-segment reactive band: the face rows bind only when the segment
    // is selected; the relaxation constant is the exact worst case over the
    // voltage bands, so inactive segments are never cut off
    std::vector<std::pair<int, double>> qagg{{c.dq(bus), 1.0}};
    for (int k = 0; k < K; ++k) {
      const int dqs = c.m.add_var("dqs_" + tag(bus) + "_" + tag(k), -c_eff, c_eff);
      qagg.push_back({dqs, -1.0});
      double m_up_relax = 0.0, m_lo_relax = 0.0;
      for (int l = 0; l < L; ++l) {
        const Segment3D& s = seg(k, l);
        m_up_relax = std::max(
            m_up_relax, (odq - s.q_c_init_up) + std::max(0.0, -s.m_up) * s.dv_max);
        m_lo_relax = std::max(
            m_lo_relax, (s.q_c_init_lo - odq) + std::max(0.0, s.m_lo) * s.dv_max);
      }
      std::vector<std::pair<int, double>> fup{{dqs, 1.0}}, flo{{dqs, 1.0}};
      for (int l = 0; l < L; ++l) {
        const Segment3D& s = seg(k, l);
        fup.push_back({vvars[static_cast<size_t>(l)].first, -s.m_up});
        fup.push_back({vvars[static_cast<size_t>(l)].second, -(s.q_c_init_up - odq)});
        flo.push_back({vvars[static_cast<size_t>(l)].first, -s.m_lo});
        flo.push_back({vvars[static_cast<size_t>(l)].second, -(s.q_c_init_lo - odq)});
      }
      fup.push_back({pvars[static_cast<size_t>(k)].second, m_up_relax});
      flo.push_back({pvars[static_cast<size_t>(k)].second, -m_lo_relax});
      c.m.add_row("qfup_" + tag(bus) + "_" + tag(k), std::move(fup), RowSense::LE, m_up_relax);
      c.m.add_row("qflo_" + tag(bus) + "_" + tag(k), std::move(flo), RowSense::GE, -m_lo_relax);
      c.m.add_row("qcap_up_" + tag(bus) + "_" + tag(k),
                  {{dqs, 1.0}, {pvars[static_cast<size_t>(k)].second, -c_eff}}, RowSense::LE, 0.0);
      c.m.add_row("qcap_lo_" + tag(bus) + "_" + tag(k),
                  {{dqs, 1.0}, {pvars[static_cast<size_t>(k)].second, c_eff}}, RowSense::GE, 0.0);
    }
    c.m.add_row("qagg_" + tag(bus), std::move(qagg), RowSense::EQ, 0.0);
  }
  milp.base = std::move(c.m);
  return milp;
}

LpModel build_convex_lp(const GridModel& grid, const PfSolution& state,
                        const SensitivityBundle& sens, const std::vector<HalfSpaceSet>& hulls,
                        const CostMap& costs) {
  Core c = build_core(grid, state, sens, costs);
  for (const HalfSpaceSet* hs : regions_by_bus(grid, hulls)) {
    if (hs->rows.empty()) {
      throw ValidationError("empty half-space set for bus " + tag(hs->bus_id));
    }
    const int bus = hs->bus_id;
    const double p0 = state.p_inj(bus), q0 = state.q_inj(bus), v0 = state.v(bus);
    for (size_t r = 0; r < hs->rows.size(); ++r) {
      const HalfSpace& h = hs->rows[r];
      c.m.add_row("hull_" + tag(bus) + "_" + tag(static_cast<int>(r)),
                  {{c.dp(bus), h.n_p}, {c.dq(bus), h.n_q}, {c.dv(bus), h.n_v}}, RowSense::LE,
                  h.d - (h.n_p * p0 + h.n_q * q0 + h.n_v * v0));
    }
  }
  return c.m;
}

}  // namespace flexgrid
