#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rted/case.hpp"

namespace rted {

// Solves the reduced DC susceptance system. Dense LLT today; a sparse
// factorization can implement the same interface.
class SusceptanceSolver {
 public:
  virtual ~SusceptanceSolver() = default;
  // Factorizes B (reference row/column removed). Throws on singular input.
  virtual void factorize(const Eigen::MatrixXd& reduced_b) = 0;
  virtual Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const = 0;
};

std::unique_ptr<SusceptanceSolver> make_dense_solver();

// ISF (PTDF) and LODF matrices. Rows follow case.lines order, ISF columns
// follow case.buses order, LODF columns follow vulnerable_lines order.
struct SensitivitySet {
  Eigen::MatrixXd isf;
  Eigen::MatrixXd lodf;
  int reference_bus = 0;
  std::vector<int> vulnerable_lines;     // line ids
  std::vector<std::size_t> vulnerable_index;  // positions in case.lines
};

// Injection shift factors with the case's reference bus as slack.
SensitivitySet compute_isf(const SystemCase& sc);
// Same, with an explicit slack bus id.
SensitivitySet compute_isf(const SystemCase& sc, int reference_bus);

// Fills lodf for the given vulnerable lines (ids). Throws when an outage
// would island the network.
SensitivitySet compute_lodf(SensitivitySet sens, const SystemCase& sc,
                            const std::vector<int>& vulnerable_lines);

// P_l = sum_i isf(l, i) * injection_i.
Eigen::VectorXd dc_flows(const SensitivitySet& sens, std::span<const double> injections);
Eigen::VectorXd dc_flows(const SensitivitySet& sens, const Eigen::VectorXd& injections);

// Post-contingency flow on line position l after outage of vulnerable entry m.
inline double post_contingency_flow(const SensitivitySet& sens, const Eigen::VectorXd& flows,
                                    std::size_t l, std::size_t m) {
  return flows(static_cast<Eigen::Index>(l)) +
         sens.lodf(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) *
             flows(static_cast<Eigen::Index>(sens.vulnerable_index[m]));
}

// Line positions whose removal disconnects the network.
std::vector<bool> find_bridges(const SystemCase& sc);

// The k limited lines with the largest flow_max (ties by lower id);
// bridges are skipped.
std::vector<int> select_vulnerable(const SystemCase& sc, std::size_t k);

// Writes the ISF matrix as CSV, one row per line, 12 significant digits.
void write_isf_csv(const SensitivitySet& sens, const SystemCase& sc, std::ostream& out);

}  // namespace rted
