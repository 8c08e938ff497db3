#include "rted/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

#include <Eigen/Dense>

namespace rted::lp {

const char* to_string(Status s) {
  switch (s) {
    case Status::kOptimal:
      return "optimal";
    case Status::kInfeasible:
      return "infeasible";
    case Status::kUnbounded:
      return "unbounded";
  }
  return "unknown";
}

int LpModel::add_variable(std::string name, double lower, double upper, double cost) {
  vars_.push_back({std::move(name), lower, upper, cost});
  return static_cast<int>(vars_.size()) - 1;
}

int LpModel::add_constraint(std::string name, std::vector<Term> terms, Sense sense, double rhs) {
  rows_.push_back({std::move(name), std::move(terms), sense, rhs});
  return static_cast<int>(rows_.size()) - 1;
}

void LpModel::set_bounds(int var, double lower, double upper) {
  auto& v = vars_.at(static_cast<std::size_t>(var));
  v.lower = lower;
  v.upper = upper;
}

void LpModel::scale_objective(double factor) {
  for (auto& v : vars_) v.cost *= factor;
}

void LpModel::validate() const {
  for (const auto& v : vars_) {
    if (std::isnan(v.lower) || std::isnan(v.upper) || v.lower > v.upper)
      throw std::invalid_argument("variable " + v.name + " has inverted bounds");
    if (v.lower == kInf || v.upper == -kInf)
      throw std::invalid_argument("variable " + v.name + " has an unusable bound");
    if (!std::isfinite(v.cost)) throw std::invalid_argument("variable " + v.name + " has non-finite cost");
  }
  for (const auto& r : rows_) {
    if (!std::isfinite(r.rhs)) throw std::invalid_argument("constraint " + r.name + " has non-finite rhs");
    for (const auto& t : r.terms) {
      if (t.var < 0 || t.var >= num_variables())
        throw std::invalid_argument("constraint " + r.name + " references a missing variable");
      if (!std::isfinite(t.coef))
        throw std::invalid_argument("constraint " + r.name + " has a non-finite coefficient");
    }
  }
}

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void LpModel::write_text(std::ostream& out) const {
  out << "minimize\n";
  for (std::size_t j = 0; j < vars_.size(); ++j)
    if (vars_[j].cost != 0.0) out << "  " << fmt_num(vars_[j].cost) << " " << vars_[j].name << "\n";
  out << "subject to\n";
  for (const auto& r : rows_) {
    out << "  " << r.name << ":";
    for (const auto& t : r.terms)
      out << " " << (t.coef < 0 ? "- " : "+ ") << fmt_num(std::abs(t.coef)) << " "
          << vars_[static_cast<std::size_t>(t.var)].name;
    const char* op = r.sense == Sense::kLessEqual ? "<=" : r.sense == Sense::kEqual ? "=" : ">=";
    out << " " << op << " " << fmt_num(r.rhs) << "\n";
  }
  out << "bounds\n";
  for (const auto& v : vars_) out << "  " << fmt_num(v.lower) << " <= " << v.name << " <= " << fmt_num(v.upper) << "\n";
  out << "end\n";
}


// ---------------------------------------------------------------------------
// Revised simplex on [A | -I] z = 0 with bounds on every column. Column j < n
// is structural, column n + i is the logical of row i.

namespace {

double pow2_round(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) return 1.0;
  return std::exp2(std::round(std::log2(v)));
}

enum class VarState : unsigned char { kBasic, kLower, kUpper, kFree };

class Simplex {
 public:
  Simplex(const LpModel& model, const SolverOptions& opt) : model_(model), opt_(opt) { setup(); }
  LpSolution run();

 private:
  void setup();
  void refactor();
  bool factor_kernel();
  void repair_basis(const Eigen::FullPivLU<Eigen::MatrixXd>& flu);
  void ftran(const std::vector<double>& rhs, std::vector<double>& z) const;
  void btran(std::vector<double> w, std::vector<double>& y) const;
  void compute_basic_values();
  void load_column(int var, std::vector<double>& dense) const;
  void make_nonbasic(int v);
  double tol_for(double bound) const {
    return opt_.primal_tolerance * std::max(1.0, std::isfinite(bound) ? std::abs(bound) : 1.0);
  }
  bool below(int v) const { return x_[v] < lower_[v] - tol_for(lower_[v]); }
  bool above(int v) const { return x_[v] > upper_[v] + tol_for(upper_[v]); }
  LpSolution finish(Status status, const std::vector<double>& y);

  const LpModel& model_;
  SolverOptions opt_;

  int n_ = 0;
  int m_ = 0;
  std::vector<int> col_start_, col_row_;
  std::vector<double> col_val_;
  std::vector<int> row_start_, row_col_;
  std::vector<double> row_val_;
  std::vector<double> row_scale_, col_scale_;
  std::vector<double> cost_, lower_, upper_;
  double cost_norm_ = 1.0;

  std::vector<int> basis_;     // position -> variable
  std::vector<int> position_;  // variable -> position or -1
  std::vector<VarState> state_;
  std::vector<double> x_;

  // Base basis at the last refactor. Logicals there cover rows outside
  // kernel_rows_; structurals form the dense kernel K = A[kernel_rows_, .].
  std::vector<int> base_logical_pos_;  // row -> position, -1 if row in kernel
  std::vector<int> kernel_rows_;
  std::vector<int> kernel_pos_;
  std::vector<int> kernel_vars_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  struct Eta {
    int pos;
    double pivot;
    std::vector<int> idx;
    std::vector<double> val;
  };
  std::vector<Eta> etas_;

  int iterations_ = 0;
  int degenerate_ = 0;
  bool bland_ = false;
};

void Simplex::setup() {
  model_.validate();
  n_ = model_.num_variables();
  m_ = model_.num_constraints();
  const auto& vars = model_.variables();
  const auto& rows = model_.constraints();

  row_start_.assign(static_cast<std::size_t>(m_) + 1, 0);
  std::vector<std::pair<int, double>> scratch;
  for (int i = 0; i < m_; ++i) {
    scratch.clear();
    for (const auto& t : rows[static_cast<std::size_t>(i)].terms)
      if (t.coef != 0.0) scratch.emplace_back(t.var, t.coef);
    std::stable_sort(scratch.begin(), scratch.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    int last = -1;
    for (const auto& [j, v] : scratch) {
      if (j == last) {
        row_val_.back() += v;
        continue;
      }
      row_col_.push_back(j);
      row_val_.push_back(v);
      last = j;
    }
    row_start_[static_cast<std::size_t>(i) + 1] = static_cast<int>(row_col_.size());
  }

  row_scale_.assign(static_cast<std::size_t>(m_), 1.0);
  col_scale_.assign(static_cast<std::size_t>(n_), 1.0);
  if (opt_.equilibrate) {
    for (int i = 0; i < m_; ++i) {
      double mx = 0.0;
      for (int k = row_start_[i]; k < row_start_[i + 1]; ++k) mx = std::max(mx, std::abs(row_val_[k]));
      if (mx > 0.0) row_scale_[i] = pow2_round(1.0 / mx);
    }
    std::vector<double> cmax(static_cast<std::size_t>(n_), 0.0);
    for (int i = 0; i < m_; ++i)
      for (int k = row_start_[i]; k < row_start_[i + 1]; ++k)
        cmax[row_col_[k]] = std::max(cmax[row_col_[k]], std::abs(row_val_[k]) * row_scale_[i]);
    for (int j = 0; j < n_; ++j)
      if (cmax[j] > 0.0) col_scale_[j] = pow2_round(1.0 / cmax[j]);
  }
  for (int i = 0; i < m_; ++i)
    for (int k = row_start_[i]; k < row_start_[i + 1]; ++k)
      row_val_[k] *= row_scale_[i] * col_scale_[row_col_[k]];

  col_start_.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (int c : row_col_) ++col_start_[c + 1];
  for (int j = 0; j < n_; ++j) col_start_[j + 1] += col_start_[j];
  col_row_.resize(row_col_.size());
  col_val_.resize(row_val_.size());
  std::vector<int> fill(col_start_.begin(), col_start_.end() - 1);
  for (int i = 0; i < m_; ++i)
    for (int k = row_start_[i]; k < row_start_[i + 1]; ++k) {
      const int dst = fill[row_col_[k]]++;
      col_row_[dst] = i;
      col_val_[dst] = row_val_[k];
    }

  const int total = n_ + m_;
  cost_.assign(total, 0.0);
  lower_.assign(total, 0.0);
  upper_.assign(total, 0.0);
  for (int j = 0; j < n_; ++j) {
    const auto& v = vars[static_cast<std::size_t>(j)];
    cost_[j] = v.cost * col_scale_[j];
    lower_[j] = v.lower / col_scale_[j];
    upper_[j] = v.upper / col_scale_[j];
    cost_norm_ = std::max(cost_norm_, std::abs(cost_[j]));
  }
  for (int i = 0; i < m_; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    const double rhs = r.rhs * row_scale_[i];
    lower_[n_ + i] = r.sense == Sense::kLessEqual ? -kInf : rhs;
    upper_[n_ + i] = r.sense == Sense::kGreaterEqual ? kInf : rhs;
  }

  basis_.resize(static_cast<std::size_t>(m_));
  position_.assign(total, -1);
  state_.assign(total, VarState::kBasic);
  x_.assign(total, 0.0);
  for (int j = 0; j < n_; ++j) make_nonbasic(j);
  for (int i = 0; i < m_; ++i) {
    basis_[i] = n_ + i;
    position_[n_ + i] = i;
  }
}

void Simplex::make_nonbasic(int v) {
  position_[v] = -1;
  const bool lo = std::isfinite(lower_[v]);
  const bool up = std::isfinite(upper_[v]);
  if (lo && (!up || std::abs(x_[v] - lower_[v]) <= std::abs(x_[v] - upper_[v]))) {
    state_[v] = VarState::kLower;
    x_[v] = lower_[v];
  } else if (up) {
    state_[v] = VarState::kUpper;
    x_[v] = upper_[v];
  } else {
    state_[v] = VarState::kFree;
    x_[v] = 0.0;
  }
}

void Simplex::load_column(int var, std::vector<double>& dense) const {
  std::fill(dense.begin(), dense.end(), 0.0);
  if (var >= n_) {
    dense[var - n_] = -1.0;
    return;
  }
  for (int k = col_start_[var]; k < col_start_[var + 1]; ++k) dense[col_row_[k]] = col_val_[k];
}

bool Simplex::factor_kernel() {
  base_logical_pos_.assign(static_cast<std::size_t>(m_), -1);
  kernel_pos_.clear();
  kernel_vars_.clear();
  for (int p = 0; p < m_; ++p) {
    if (basis_[p] >= n_) {
      base_logical_pos_[basis_[p] - n_] = p;
    } else {
      kernel_pos_.push_back(p);
      kernel_vars_.push_back(basis_[p]);
    }
  }
  kernel_rows_.clear();
  for (int i = 0; i < m_; ++i)
    if (base_logical_pos_[i] < 0) kernel_rows_.push_back(i);
  const auto k = static_cast<Eigen::Index>(kernel_pos_.size());
  if (k == 0) return true;
  std::vector<int> slot(static_cast<std::size_t>(m_), -1);
  for (Eigen::Index r = 0; r < k; ++r) slot[kernel_rows_[r]] = static_cast<int>(r);
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const int j = kernel_vars_[c];
    for (int q = col_start_[j]; q < col_start_[j + 1]; ++q) {
      const int s = slot[col_row_[q]];
      if (s >= 0) kernel(s, c) = col_val_[q];
    }
  }
  lu_.compute(kernel);
  if (lu_.rcond() > 1e-12) return true;
  Eigen::FullPivLU<Eigen::MatrixXd> flu(kernel);
  flu.setThreshold(1e-10);
  if (flu.rank() == k) return true;
  repair_basis(flu);
  return false;
}

void Simplex::refactor() {
  etas_.clear();
  for (int attempt = 0; attempt < 4; ++attempt)
    if (factor_kernel()) return;
  throw LpError("basis factorization failed: kernel stays singular after repair");
}

// Dependent kernel columns leave; the logicals of unmatched rows take their
// positions.
void Simplex::repair_basis(const Eigen::FullPivLU<Eigen::MatrixXd>& flu) {
  const auto k = static_cast<Eigen::Index>(kernel_pos_.size());
  const auto rank = flu.rank();
  // P * K * Q = L * U; permutationP().indices()(r) is the row slot r moves to.
  const auto& pr = flu.permutationP().indices();
  const auto& qc = flu.permutationQ().indices();
  std::vector<int> rows_out;
  for (Eigen::Index r = 0; r < k; ++r)
    if (pr(r) >= rank) rows_out.push_back(kernel_rows_[r]);
  std::vector<int> pos_out;
  for (Eigen::Index t = rank; t < k; ++t) pos_out.push_back(kernel_pos_[qc(t)]);
  for (std::size_t s = 0; s < pos_out.size() && s < rows_out.size(); ++s) {
    const int p = pos_out[s];
    make_nonbasic(basis_[p]);
    const int logical = n_ + rows_out[s];
    basis_[p] = logical;
    position_[logical] = p;
    state_[logical] = VarState::kBasic;
  }
}

// z = B^-1 rhs, rhs indexed by row, z by basis position.
void Simplex::ftran(const std::vector<double>& rhs, std::vector<double>& z) const {
  z.assign(static_cast<std::size_t>(m_), 0.0);
  std::vector<double> activity(static_cast<std::size_t>(m_), 0.0);
  const auto k = static_cast<Eigen::Index>(kernel_pos_.size());
  if (k > 0) {
    Eigen::VectorXd b(k);
    for (Eigen::Index r = 0; r < k; ++r) b(r) = rhs[kernel_rows_[r]];
    const Eigen::VectorXd zc = lu_.solve(b);
    for (Eigen::Index c = 0; c < k; ++c) {
      z[kernel_pos_[c]] = zc(c);
      if (zc(c) == 0.0) continue;
      const int j = kernel_vars_[c];
      for (int q = col_start_[j]; q < col_start_[j + 1]; ++q) activity[col_row_[q]] += col_val_[q] * zc(c);
    }
  }
  for (int i = 0; i < m_; ++i) {
    const int p = base_logical_pos_[i];
    if (p >= 0) z[p] = activity[i] - rhs[i];
  }
  for (const auto& e : etas_) {
    const double zp = z[e.pos] / e.pivot;
    z[e.pos] = zp;
    if (zp == 0.0) continue;
    for (std::size_t t = 0; t < e.idx.size(); ++t) z[e.idx[t]] -= e.val[t] * zp;
  }
}

// y^T B = w^T, w indexed by basis position, y by row.
void Simplex::btran(std::vector<double> w, std::vector<double>& y) const {
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double s = w[it->pos];
    for (std::size_t t = 0; t < it->idx.size(); ++t) s -= it->val[t] * w[it->idx[t]];
    w[it->pos] = s / it->pivot;
  }
  y.assign(static_cast<std::size_t>(m_), 0.0);
  for (int i = 0; i < m_; ++i) {
    const int p = base_logical_pos_[i];
    if (p >= 0) y[i] = -w[p];
  }
  const auto k = static_cast<Eigen::Index>(kernel_pos_.size());
  if (k == 0) return;
  Eigen::VectorXd rhs(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const int j = kernel_vars_[c];
    double s = w[kernel_pos_[c]];
    for (int q = col_start_[j]; q < col_start_[j + 1]; ++q) {
      const int i = col_row_[q];
      if (base_logical_pos_[i] >= 0) s -= col_val_[q] * y[i];
    }
    rhs(c) = s;
  }
  const Eigen::VectorXd yr = lu_.transpose().solve(rhs);
  for (Eigen::Index r = 0; r < k; ++r) y[kernel_rows_[r]] = yr(r);
}

void Simplex::compute_basic_values() {
  std::vector<double> rhs(static_cast<std::size_t>(m_), 0.0);
  for (int j = 0; j < n_; ++j) {
    if (state_[j] == VarState::kBasic || x_[j] == 0.0) continue;
    for (int q = col_start_[j]; q < col_start_[j + 1]; ++q) rhs[col_row_[q]] -= col_val_[q] * x_[j];
  }
  for (int i = 0; i < m_; ++i)
    if (state_[n_ + i] != VarState::kBasic) rhs[i] += x_[n_ + i];
  std::vector<double> z;
  ftran(rhs, z);
  for (int p = 0; p < m_; ++p) x_[basis_[p]] = z[p];
}

LpSolution Simplex::run() {
  refactor();
  compute_basic_values();
  const int total = n_ + m_;
  std::vector<double> cb(static_cast<std::size_t>(m_)), y, col(static_cast<std::size_t>(m_)), alpha;
  const double piv_tol = opt_.pivot_tolerance;

  while (true) {
    if (iterations_ >= opt_.max_iterations) {
      double infeas = 0.0;
      for (int p = 0; p < m_; ++p) {
        const int v = basis_[p];
        infeas += std::max(0.0, lower_[v] - x_[v]) + std::max(0.0, x_[v] - upper_[v]);
      }
      std::ostringstream msg;
      msg << "simplex iteration limit " << opt_.max_iterations << " reached (rows " << m_ << ", columns " << n_
          << ", primal infeasibility " << infeas << ", bland " << (bland_ ? "on" : "off") << ")";
      throw LpError(msg.str());
    }

    bool phase1 = false;
    for (int p = 0; p < m_; ++p) {
      const int v = basis_[p];
      if (below(v)) {
        cb[p] = -1.0;
        phase1 = true;
      } else if (above(v)) {
        cb[p] = 1.0;
        phase1 = true;
      } else {
        cb[p] = 0.0;
      }
    }
    if (!phase1)
      for (int p = 0; p < m_; ++p) cb[p] = cost_[basis_[p]];
    btran(cb, y);

    const double dtol = opt_.dual_tolerance * (phase1 ? 1.0 : cost_norm_);
    int q = -1;
    int dir = 0;
    double best = 0.0;
    for (int j = 0; j < total && !(bland_ && q >= 0); ++j) {
      const VarState st = state_[j];
      if (st == VarState::kBasic || lower_[j] == upper_[j]) continue;
      double d = phase1 ? 0.0 : cost_[j];
      if (j < n_) {
        for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) d -= col_val_[k] * y[col_row_[k]];
      } else {
        d += y[j - n_];
      }
      int dj = 0;
      if (st == VarState::kLower && d < -dtol) dj = 1;
      else if (st == VarState::kUpper && d > dtol) dj = -1;
      else if (st == VarState::kFree && std::abs(d) > dtol) dj = d < 0 ? 1 : -1;
      if (dj == 0) continue;
      if (std::abs(d) > best) {
        best = std::abs(d);
        q = j;
        dir = dj;
      }
    }

    if (q < 0) {
      if (!etas_.empty()) {
        // Confirm against a fresh factorization before stopping.
        refactor();
        compute_basic_values();
        continue;
      }
      return finish(phase1 ? Status::kInfeasible : Status::kOptimal, y);
    }

    load_column(q, col);
    ftran(col, alpha);

    // Basic p changes at rate delta_p = -dir * alpha_p per unit step.
    struct Cand {
      int p;
      double ratio;
      double target;
    };
    std::vector<Cand> cands;
    double theta_max = kInf;
    for (int p = 0; p < m_; ++p) {
      const double a = alpha[p];
      if (std::abs(a) <= piv_tol) continue;
      const int v = basis_[p];
      const double delta = -dir * a;
      double target;
      if (delta < 0) {
        if (above(v)) target = upper_[v];
        else if (below(v) || !std::isfinite(lower_[v])) continue;
        else target = lower_[v];
      } else {
        if (below(v)) target = lower_[v];
        else if (above(v) || !std::isfinite(upper_[v])) continue;
        else target = upper_[v];
      }
      const double dist = std::max(0.0, std::abs(x_[v] - target));
      const double ratio = dist / std::abs(delta);
      const double relaxed = bland_ ? ratio : (dist + tol_for(target)) / std::abs(delta);
      theta_max = std::min(theta_max, relaxed);
      cands.push_back({p, ratio, target});
    }
    int leave = -1;
    double theta = kInf;
    double leave_target = 0.0;
    {
      double best_alpha = 0.0;
      int best_var = total;
      for (const auto& c : cands) {
        if (c.ratio > theta_max + (bland_ ? 1e-12 : 0.0)) continue;
        const int v = basis_[c.p];
        const double a = std::abs(alpha[c.p]);
        const bool better = bland_ ? v < best_var : (a > best_alpha || (a == best_alpha && v < best_var));
        if (better) {
          best_alpha = a;
          best_var = v;
          leave = c.p;
          theta = c.ratio;
          leave_target = c.target;
        }
      }
    }
    const double flip = upper_[q] - lower_[q];
    const bool bound_flip = std::isfinite(flip) && (leave < 0 || flip <= theta);
    if (leave < 0 && !bound_flip) {
      if (phase1) {
        if (!etas_.empty()) {
          refactor();
          compute_basic_values();
          continue;
        }
        throw LpError("phase 1 found an unbounded ray; numerical trouble");
      }
      return finish(Status::kUnbounded, y);
    }

    const double step = bound_flip ? flip : theta;
    if (step <= 1e-12) {
      if (++degenerate_ >= opt_.degenerate_pivots_before_bland) bland_ = true;
    }
    if (step != 0.0) {
      for (int p = 0; p < m_; ++p)
        if (alpha[p] != 0.0) x_[basis_[p]] -= dir * step * alpha[p];
    }
    ++iterations_;
    if (bound_flip) {
      if (dir > 0) {
        x_[q] = upper_[q];
        state_[q] = VarState::kUpper;
      } else {
        x_[q] = lower_[q];
        state_[q] = VarState::kLower;
      }
      continue;
    }
    x_[q] += dir * step;
    const int out = basis_[leave];
    x_[out] = leave_target;
    position_[out] = -1;
    state_[out] = leave_target == lower_[out] ? VarState::kLower : VarState::kUpper;
    basis_[leave] = q;
    position_[q] = leave;
    state_[q] = VarState::kBasic;

    Eta e;
    e.pos = leave;
    e.pivot = alpha[leave];
    for (int p = 0; p < m_; ++p)
      if (p != leave && std::abs(alpha[p]) > 1e-14) {
        e.idx.push_back(p);
        e.val.push_back(alpha[p]);
      }
    etas_.push_back(std::move(e));
    if (static_cast<int>(etas_.size()) >= opt_.refactor_interval) {
      refactor();
      compute_basic_values();
    }
  }
}

LpSolution Simplex::finish(Status status, const std::vector<double>& y_scaled) {
  const auto& vars = model_.variables();
  const auto& rows = model_.constraints();
  LpSolution sol;
  sol.status = status;
  sol.iterations = iterations_;
  sol.used_bland = bland_;
  sol.primal.resize(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) {
    double v = x_[j] * col_scale_[j];
    const auto& var = vars[static_cast<std::size_t>(j)];
    if (v < var.lower && v > var.lower - tol_for(var.lower)) v = var.lower;
    if (v > var.upper && v < var.upper + tol_for(var.upper)) v = var.upper;
    sol.primal[j] = v;
  }
  sol.duals.resize(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) sol.duals[i] = y_scaled[i] * row_scale_[i];
  sol.reduced_costs.resize(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) sol.reduced_costs[j] = vars[static_cast<std::size_t>(j)].cost;
  sol.row_activity.assign(static_cast<std::size_t>(m_), 0.0);
  for (int i = 0; i < m_; ++i)
    for (const auto& t : rows[static_cast<std::size_t>(i)].terms) {
      sol.row_activity[i] += t.coef * sol.primal[t.var];
      sol.reduced_costs[t.var] -= t.coef * sol.duals[i];
    }
  sol.objective = 0.0;
  for (int j = 0; j < n_; ++j) sol.objective += vars[static_cast<std::size_t>(j)].cost * sol.primal[j];
  return sol;
}

}  // namespace

namespace {

struct AuditState {
  std::mutex mu;
  bool on = false;
  double tol = 1e-7;
  CertificateAudit stats;
};

AuditState& audit_state() {
  static AuditState a;
  return a;
}

}  // namespace

void enable_certificate_audit(double tol) {
  auto& a = audit_state();
  std::lock_guard lock(a.mu);
  a.on = true;
  a.tol = tol;
  a.stats = {};
}

void disable_certificate_audit() {
  auto& a = audit_state();
  std::lock_guard lock(a.mu);
  a.on = false;
}

CertificateAudit certificate_audit() {
  auto& a = audit_state();
  std::lock_guard lock(a.mu);
  return a.stats;
}

LpSolution solve(const LpModel& model, const SolverOptions& options) {
  Simplex s(model, options);
  auto sol = s.run();
  auto& a = audit_state();
  bool on = false;
  {
    std::lock_guard lock(a.mu);
    on = a.on;
  }
  if (on && sol.status == Status::kOptimal) {
    const auto rep = check_certificates(model, sol);
    const double r = std::max({rep.primal_infeasibility, rep.dual_infeasibility, rep.complementarity});
    std::lock_guard lock(a.mu);
    ++a.stats.solves;
    if (!rep.passes(a.tol)) ++a.stats.failures;
    a.stats.worst = std::max(a.stats.worst, r);
  }
  return sol;
}

CertificateReport check_certificates(const LpModel& model, const LpSolution& sol) {
  CertificateReport rep;
  const auto& vars = model.variables();
  const auto& rows = model.constraints();
  double cmax = 0.0;
  for (const auto& v : vars) cmax = std::max(cmax, std::abs(v.cost));
  const double zero = 1e-9;

  auto account = [&](double x, double lo, double up, double d, double dscale, double& dual_obj) {
    const double plo = std::isfinite(lo) ? (lo - x) / (1.0 + std::abs(lo)) : 0.0;
    const double pup = std::isfinite(up) ? (x - up) / (1.0 + std::abs(up)) : 0.0;
    rep.primal_infeasibility = std::max({rep.primal_infeasibility, plo, pup});
    const double sd = d / dscale;
    if (!std::isfinite(lo)) rep.dual_infeasibility = std::max(rep.dual_infeasibility, sd);
    if (!std::isfinite(up)) rep.dual_infeasibility = std::max(rep.dual_infeasibility, -sd);
    if (sd > zero) {
      const double slack = std::isfinite(lo) ? std::abs(x - lo) / (1.0 + std::abs(lo)) : kInf;
      rep.complementarity = std::max(rep.complementarity, std::min(slack, sd));
      if (std::isfinite(lo)) dual_obj += d * lo;
      else dual_obj = -kInf;
    } else if (sd < -zero) {
      const double slack = std::isfinite(up) ? std::abs(up - x) / (1.0 + std::abs(up)) : kInf;
      rep.complementarity = std::max(rep.complementarity, std::min(slack, -sd));
      if (std::isfinite(up)) dual_obj += d * up;
      else dual_obj = -kInf;
    }
  };

  double dual_obj = 0.0;
  for (std::size_t j = 0; j < vars.size(); ++j)
    account(sol.primal[j], vars[j].lower, vars[j].upper, sol.reduced_costs[j], 1.0 + std::abs(vars[j].cost),
            dual_obj);
  // A row behaves like a column -e_i whose reduced cost is y_i.
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double act = 0.0;
    for (const auto& t : rows[i].terms) act += t.coef * sol.primal[static_cast<std::size_t>(t.var)];
    const double lo = rows[i].sense == Sense::kLessEqual ? -kInf : rows[i].rhs;
    const double up = rows[i].sense == Sense::kGreaterEqual ? kInf : rows[i].rhs;
    account(act, lo, up, sol.duals[i], 1.0 + cmax, dual_obj);
  }
  rep.dual_objective = dual_obj;
  rep.relative_gap = std::abs(sol.objective - dual_obj) / std::max(1.0, std::abs(sol.objective));
  return rep;
}

EpigraphCost add_epigraph_cost(LpModel& model, const BidCurve& curve, int p_var, const std::string& name,
                               double weight) {
  if (curve.empty()) throw std::invalid_argument("empty bid curve for " + name);
  curve.validate();
  EpigraphCost out;
  out.cost_var = model.add_variable(name + "_cost", -kInf, kInf, weight);
  const auto& segs = curve.segments();
  for (std::size_t s = 0; s < segs.size(); ++s) {
    out.rows.push_back(model.add_constraint(name + "_seg" + std::to_string(s + 1),
                                            {{out.cost_var, 1.0}, {p_var, -segs[s].kappa}},
                                            Sense::kGreaterEqual, segs[s].beta));
  }
  return out;
}

SegmentCost add_segment_cost(LpModel& model, const BidCurve& curve, int p_var, const std::string& name) {
  if (curve.empty()) throw std::invalid_argument("empty bid curve for " + name);
  curve.validate();
  const auto& pv = model.variables().at(static_cast<std::size_t>(p_var));
  const auto& segs = curve.segments();
  SegmentCost out;
  const double base = curve.p_min();
  out.offset = curve.cost(base);
  std::vector<Term> link{{p_var, 1.0}};
  for (std::size_t s = 0; s < segs.size(); ++s) {
    double lo = 0.0, hi = segs[s].q_hi - segs[s].q_lo;
    if (s == 0 && pv.lower < base) lo = pv.lower - base;
    if (s + 1 == segs.size() && pv.upper > segs[s].q_hi) hi = std::isfinite(pv.upper) ? hi + pv.upper - segs[s].q_hi : kInf;
    const int d = model.add_variable(name + "_d" + std::to_string(s + 1), lo, hi, segs[s].kappa);
    out.segment_vars.push_back(d);
    link.push_back({d, -1.0});
  }
  out.link_row = model.add_constraint(name + "_link", std::move(link), Sense::kEqual, base);
  return out;
}

}  // namespace rted::lp
