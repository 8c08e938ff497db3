#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rted/case.hpp"
#include "rted/lp.hpp"
#include "rted/security.hpp"

namespace rted {

// Distribution factors, phi[dera][member] in case order.
struct DfVector {
  std::vector<std::vector<double>> phi;

  static DfVector uniform(const SystemCase& sc);
  // Throws ValidationError unless every DERA row is non-negative and sums
  // to 1 within tol.
  void validate(const SystemCase& sc, double tol = 1e-9) const;
  bool operator==(const DfVector&) const = default;
};

struct IntervalInput {
  std::size_t t = 0;
  std::vector<double> demand;    // MW per bus index
  std::vector<double> prev_gen;  // MW per generator; empty disables ramp rows
  double ramp_scale = 1.0;       // multiplies ramp limits (hourly steps use 12)
};

struct DispatchOptions {
  bool soft = false;  // slack on security and balance rows priced at penalty_price
  double penalty_price = 5000.0;
};

// LP plus the bookkeeping needed to read dispatch, flows and prices back.
struct DispatchModel {
  lp::LpModel lp;
  bool full = false;
  std::size_t t = 0;
  std::vector<int> gen_p;
  std::vector<int> dera_p;
  double cost_offset = 0.0;  // constant part of the bid costs, outside the LP
  std::vector<std::vector<int>> tder_p;  // full model only
  std::vector<std::vector<double>> phi;  // DF model only
  int balance_row = -1;
  std::vector<ConstraintRef> security;
  std::vector<int> security_rows;
  std::vector<Eigen::RowVectorXd> security_coef;  // per bus
  std::vector<int> slack_vars;
  std::vector<double> demand;
  const SystemCase* sc = nullptr;
};

struct RtedSolution {
  lp::Status status = lp::Status::kInfeasible;
  std::vector<double> p_gen;
  std::vector<double> p_dera;
  std::vector<std::vector<double>> p_tder;  // full model, or Phi * P_a in the DF model
  std::vector<double> p_line;               // pre-contingency flow per line
  Eigen::VectorXd injection;                // net MW per bus
  double cost_total = 0.0;
  double slack_mw = 0.0;
  std::vector<double> lmp;
  bool lmp_degenerate = false;
  double solve_ms = 0.0;
  int lp_iterations = 0;
  std::vector<ConstraintRef> active_set;
  bool soft = false;
};

DispatchModel build_rted(const SystemCase& sc, const SecurityModel& sec, const DfVector& dfs,
                         const IntervalInput& in, const std::vector<ConstraintRef>& monitored,
                         const DispatchOptions& opt = {});

DispatchModel build_full_model(const SystemCase& sc, const SecurityModel& sec, const IntervalInput& in,
                               const std::vector<ConstraintRef>& monitored, const DispatchOptions& opt = {});

RtedSolution solve_dispatch(const DispatchModel& model, const SecurityModel& sec,
                            const lp::SolverOptions& solver = {});

// LMP_i = y_balance + sum over security rows of y_r * coef_r,i, where y is
// d objective / d rhs. Sets degenerate when the certificate residual > 1e-7.
std::vector<double> extract_lmp(const DispatchModel& model, const lp::LpSolution& sol, bool* degenerate = nullptr);

struct SelfDispatchResult {
  std::vector<double> p_tder;
  double cost = 0.0;
  std::vector<double> realized_df;
};

// Splits the instruction among members at least cost. Throws
// std::invalid_argument("infeasible instruction") outside the DERA limits.
SelfDispatchResult self_dispatch(const Dera& dera, double instruction, std::size_t t);

// Realized DFs of a member split; uniform when the total is ~0.
std::vector<double> normalized_split(const std::vector<double>& p);

}  // namespace rted
