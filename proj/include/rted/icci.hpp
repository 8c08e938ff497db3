#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rted/case.hpp"
#include "rted/dispatch.hpp"
#include "rted/security.hpp"

namespace rted {

struct IcciOptions {
  int k = 5;           // lines added per iteration
  double tol = 1e-6;   // MW
  int max_iter = 50;
};

struct IcciResult {
  RtedSolution solution;
  std::vector<ConstraintRef> added;    // bounds in order of addition
  std::vector<ConstraintRef> working;  // initial set plus additions
  int iterations = 0;
  double max_violation = 0.0;  // over all candidates at the final solution
  double solve_ms = 0.0;       // LP time summed over iterations
  double elapsed_ms = 0.0;     // LP time plus model building and screening
  int lp_iterations = 0;
};

class IcciError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Builds the relaxed dispatch model holding exactly the given constraints.
using ModelBuilder = std::function<DispatchModel(const std::vector<ConstraintRef>&)>;

// Lazy constraint generation. Returns early, with the solver status in
// result.solution, when a relaxed model is not optimal.
IcciResult icci_loop(const ModelBuilder& builder, const SecurityModel& sec,
                     const std::vector<ConstraintRef>& initial, const IcciOptions& options = {},
                     const lp::SolverOptions& solver = {});

// Orders violations by (zeta desc, line id asc, pre before post, outage id
// asc) and returns at most k line entries, each as its violated bound.
std::vector<Violation> rank_violations(std::vector<Violation> violations, int k);

// Both bounds of a line entry, upper first.
std::vector<ConstraintRef> both_bounds(const ConstraintRef& ref);

struct CrucialSet {
  std::vector<ConstraintRef> day_ahead;
  std::vector<ConstraintRef> realtime;
  // day_ahead followed by realtime entries not already present.
  std::vector<ConstraintRef> working() const;
};

std::string crucial_set_to_json(const std::vector<ConstraintRef>& set);
std::vector<ConstraintRef> crucial_set_from_json(const std::string& text);
void save_crucial_set(const std::vector<ConstraintRef>& set, const std::string& path);
std::vector<ConstraintRef> load_crucial_set(const std::string& path);

struct DayAheadResult {
  std::vector<ConstraintRef> constraints;
  std::vector<int> iterations;  // per hour
  int soft_hours = 0;
};

// Hourly economic dispatch over `hours` steps starting at interval `start`,
// each step using the mean demand of its intervals, generators ramp-linked
// between hours, ICCI per hour; the union of crucial constraints is returned.
DayAheadResult day_ahead_baseline(const SystemCase& sc, const SecurityModel& sec, const LoadProfile& profile,
                                  std::size_t start, int hours, const IcciOptions& options = {},
                                  double penalty_price = 5000.0);

}  // namespace rted
