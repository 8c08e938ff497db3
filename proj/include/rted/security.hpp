#pragma once

#include <algorithm>
#include <compare>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rted/case.hpp"
#include "rted/sensitivity.hpp"

namespace rted {

// One side of a pre- or post-contingency line limit.
struct ConstraintRef {
  enum class Kind { kPre, kPost };
  enum class Bound { kUpper, kLower };

  Kind kind = Kind::kPre;
  int line_id = 0;
  int outage_id = -1;  // only for kPost
  Bound bound = Bound::kUpper;

  auto operator<=>(const ConstraintRef&) const = default;
  std::string label() const;
};

struct Violation {
  ConstraintRef ref;
  double zeta = 0.0;  // MW
};

// max{P_min - P, 0, P - P_max}
inline double violation_metric(double flow, double flow_min, double flow_max) {
  return std::max({flow_min - flow, 0.0, flow - flow_max});
}

// Candidate security constraints over limited lines and the vulnerable set,
// with the bus-coefficient form of each flow expression. Keeps a reference to
// the case, which must outlive it.
class SecurityModel {
 public:
  SecurityModel(const SystemCase& sc, SensitivitySet sens);

  const SensitivitySet& sens() const { return sens_; }
  std::size_t line_pos(int line_id) const;
  std::size_t num_buses() const { return static_cast<std::size_t>(sens_.isf.cols()); }

  // Flow expression coefficients per bus (Gamma_l + LODF_lm Gamma_m).
  Eigen::RowVectorXd coefficients(const ConstraintRef& ref) const;
  double limit(const ConstraintRef& ref) const;
  void check(const ConstraintRef& ref) const;

  // Both bounds of every limited line, pre- and post-contingency.
  std::vector<ConstraintRef> all_candidates() const;
  // Line-level count: limited lines plus (limited line, outage) pairs.
  std::size_t num_candidate_lines() const;

  // Pre-contingency flows for net injections per bus.
  Eigen::VectorXd flows(const Eigen::VectorXd& injection) const;
  // Every candidate with zeta > tol; one entry per violated bound.
  std::vector<Violation> violations(const Eigen::VectorXd& injection, double tol) const;
  double max_violation(const Eigen::VectorXd& injection) const;
  double total_violation(const Eigen::VectorXd& injection, double tol) const;

 private:
  const SystemCase* case_;
  SensitivitySet sens_;
  std::vector<std::size_t> limited_;  // line positions
  std::vector<int> vulnerable_slot_;  // line position -> vulnerable column, -1
};

std::string to_string(ConstraintRef::Kind k);
std::string to_string(ConstraintRef::Bound b);

}  // namespace rted
