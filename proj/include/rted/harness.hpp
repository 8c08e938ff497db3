#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rted/df_strategies.hpp"
#include "rted/dispatch.hpp"
#include "rted/icci.hpp"
#include "rted/scenario.hpp"

namespace rted {

struct RunConfig {
  std::size_t start = 0;    // first profile interval
  std::size_t horizon = 0;  // intervals to simulate
  Strategy strategy = Strategy::kConst;
  int knn_k = 5;
  std::string stgcn_model;  // weight manifest, required for kStgcn
  int warmup = -1;          // CONST intervals before predicting; -1 = model window or 12
  std::size_t history_capacity = 8640;
  IcciOptions icci;
  bool use_icci = true;     // false puts every candidate in each solve
  int day_ahead_hours = 24; // 0 skips the day-ahead baseline
  double penalty_price = 5000.0;
  bool compute_accuracy = true;  // solves the full-model oracle every interval
  bool record_timings = true;    // false stores zero times, for byte-stable output

  void validate(const Scenario& s) const;
};

struct CostBreakdown {
  double generation = 0.0;
  double dera = 0.0;
  double penalty = 0.0;

  double total() const { return generation + dera + penalty; }
};

// Generator bids at the cleared outputs, DERA bids at the instructions and
// penalty_price per MW of realized violation.
CostBreakdown interval_cost(const SystemCase& sc, std::size_t t, const std::vector<double>& p_gen,
                            const std::vector<double>& instruction, double zeta_total, double penalty_price);

struct IntervalRecord {
  std::size_t t = 0;
  std::string strategy;
  bool warmup = false;  // CONST stood in for the strategy
  std::vector<double> demand;
  DfVector predicted;
  std::vector<double> p_gen;
  std::vector<double> instruction;              // per DERA
  std::vector<std::vector<double>> p_tder;      // realized member outputs
  DfVector realized;
  std::vector<double> lmp;
  double objective = 0.0;
  std::vector<ConstraintRef> added;             // new real-time crucial bounds
  std::vector<Violation> violations;            // realized
  double zeta_total = 0.0;
  double balance_residual = 0.0;  // MW, generation + members - demand
  double generation_cost = 0.0;
  double dera_cost = 0.0;
  double penalty = 0.0;
  double cost = 0.0;
  double accuracy = 0.0;          // NaN when the oracle was not solved
  int icci_iters = 0;
  bool soft = false;
  double predict_ms = 0.0;
  double solve_ms = 0.0;
  double self_dispatch_ms = 0.0;
  std::string features_digest;
};

struct RunSummary {
  std::string strategy;
  std::size_t intervals = 0;
  double mean_cost = 0.0;
  double total_penalty = 0.0;
  double mean_accuracy = 0.0;  // NaN when no interval has one
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double mean_icci_iters = 0.0;
  int max_icci_iters = 0;
  std::size_t soft_intervals = 0;
  std::size_t crucial_bounds = 0;  // day-ahead plus real-time additions
  double max_balance_residual = 0.0;

  bool operator==(const RunSummary&) const;
};

RunSummary summarize(const std::string& strategy, const std::vector<IntervalRecord>& records,
                     std::size_t day_ahead_bounds);

// Sum of realized interval costs.
double realized_cost(const std::vector<IntervalRecord>& records);

struct RunResult {
  RunSummary summary;
  std::vector<IntervalRecord> records;
  CrucialSet crucial;
};

// Work shared between runs on one scenario: the day-ahead set and, when no
// generator has a finite ramp limit, the full-model oracle per interval.
class RunContext {
 public:
  struct Oracle {
    RtedSolution solution;
    DfVector dfs;
    int iterations = 0;
    double elapsed_ms = 0.0;
  };

  explicit RunContext(const Scenario& s) : scenario_(&s) {}

  const std::vector<ConstraintRef>& day_ahead(const RunConfig& cfg);
  // Full-model dispatch of interval t; cached when ramp-free.
  const Oracle& oracle(std::size_t t, const std::vector<double>& demand, const std::vector<double>& prev_gen,
                       const RunConfig& cfg);
  bool cacheable() const;

 private:
  const Scenario* scenario_;
  std::optional<std::vector<ConstraintRef>> day_ahead_;
  std::vector<ConstraintRef> oracle_set_;
  std::map<std::size_t, Oracle> cache_;
  Oracle scratch_;
};

RunResult run_rolling(const Scenario& s, const RunConfig& cfg);
RunResult run_rolling(const Scenario& s, const RunConfig& cfg, RunContext& ctx);

// Runs each strategy with identical inputs.
std::vector<RunResult> compare_strategies(const Scenario& s, const RunConfig& base,
                                          const std::vector<Strategy>& strategies);

// Ledger: one JSON document per line, a header then one record per interval.
std::string record_to_json(const IntervalRecord& r);
IntervalRecord record_from_json(const std::string& line);
void write_ledger(const std::string& path, const std::string& strategy, const std::vector<IntervalRecord>& records);
std::vector<IntervalRecord> read_ledger(const std::string& path);

// interval,strategy,cost,penalty,accuracy,solve_ms,icci_iters
void write_intervals_csv(std::ostream& out, const std::vector<RunResult>& runs);
// Table of run summaries; with an oracle run present, cost deviations from it.
std::string format_summary(const std::vector<RunResult>& runs);
// summary.txt, intervals.csv and ledger/<strategy>.jsonl under dir.
void write_outputs(const std::string& dir, const std::vector<RunResult>& runs);

}  // namespace rted
