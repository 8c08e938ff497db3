#pragma once

#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rted/bid_curve.hpp"

namespace rted::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { kLessEqual, kEqual, kGreaterEqual };
enum class Status { kOptimal, kInfeasible, kUnbounded };

const char* to_string(Status s);

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  double cost = 0.0;
};

struct Term {
  int var = 0;
  double coef = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::kLessEqual;
  double rhs = 0.0;
};

// Minimization LP over bounded variables and linear rows.
class LpModel {
 public:
  int add_variable(std::string name, double lower, double upper, double cost = 0.0);
  int add_constraint(std::string name, std::vector<Term> terms, Sense sense, double rhs);

  void set_cost(int var, double cost) { vars_.at(static_cast<std::size_t>(var)).cost = cost; }
  void set_bounds(int var, double lower, double upper);
  void scale_objective(double factor);

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return rows_; }
  int num_variables() const { return static_cast<int>(vars_.size()); }
  int num_constraints() const { return static_cast<int>(rows_.size()); }

  // Throws std::invalid_argument when a term references a missing variable,
  // a bound pair is inverted, or a right-hand side is not finite.
  void validate() const;

  // Stable human-readable dump:
  //   minimize / subject to / bounds sections, one item per line, in
  //   insertion order, coefficients printed with 17 significant digits.
  void write_text(std::ostream& out) const;

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
};

struct LpSolution {
  Status status = Status::kInfeasible;
  std::vector<double> primal;          // per variable
  std::vector<double> duals;           // per constraint: d objective / d rhs
  std::vector<double> reduced_costs;   // per variable: c_j - a_j^T y
  std::vector<double> row_activity;    // per constraint: a_i^T x
  double objective = 0.0;
  int iterations = 0;
  bool used_bland = false;
};

class LpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  int max_iterations = 200000;
  int degenerate_pivots_before_bland = 1000;
  int refactor_interval = 64;
  double primal_tolerance = 1e-9;
  double dual_tolerance = 1e-9;
  double pivot_tolerance = 1e-9;
  bool equilibrate = true;
};

// Bounded-variable primal revised simplex. Deterministic: ties go to the
// lowest index. Throws LpError if the iteration cap is hit.
LpSolution solve(const LpModel& model, const SolverOptions& options = {});

// Optimality residuals of a solution, measured in the model's own units.
struct CertificateReport {
  double primal_infeasibility = 0.0;    // scaled by 1 + |bound|
  double dual_infeasibility = 0.0;      // scaled by 1 + |cost|
  double complementarity = 0.0;         // min(scaled slack, scaled |reduced cost|)
  double dual_objective = 0.0;
  double relative_gap = 0.0;

  bool passes(double tol) const {
    return primal_infeasibility <= tol && dual_infeasibility <= tol && complementarity <= tol;
  }
};

CertificateReport check_certificates(const LpModel& model, const LpSolution& solution);

// Process-wide audit, off by default. While enabled, solve() checks the
// certificates of every optimal result against tol.
struct CertificateAudit {
  std::size_t solves = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest of the three residuals seen
};

void enable_certificate_audit(double tol = 1e-7);
void disable_certificate_audit();
CertificateAudit certificate_audit();

// Epigraph of a max-affine cost: cost_var >= kappa_s * p + beta_s for every
// segment. cost_var carries objective coefficient `weight`.
struct EpigraphCost {
  int cost_var = -1;
  std::vector<int> rows;
};

EpigraphCost add_epigraph_cost(LpModel& model, const BidCurve& curve, int p_var,
                               const std::string& name, double weight = 1.0);

// Same cost through bounded segment variables: p - sum_s d_s = q_lo(curve)
// with d_s in [0, width_s] priced at kappa_s. The first segment stretches
// below and the last above the curve when p's own bounds are wider. The
// constant cost(q_lo) is returned in `offset` and is not part of the LP.
struct SegmentCost {
  std::vector<int> segment_vars;
  int link_row = -1;
  double offset = 0.0;
};

SegmentCost add_segment_cost(LpModel& model, const BidCurve& curve, int p_var, const std::string& name);

}  // namespace rted::lp
