#include "rted/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rted/history.hpp"
#include "rted/stgcn.hpp"

namespace rted {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool has_finite_ramp(const SystemCase& sc) {
  return std::any_of(sc.generators.begin(), sc.generators.end(),
                     [](const Generator& g) { return std::isfinite(g.ramp_up) || std::isfinite(g.ramp_down); });
}

// ICCI with a hard model first and the penalized model as fallback.
IcciResult solve_with_retry(const std::function<DispatchModel(const std::vector<ConstraintRef>&, bool)>& build,
                            const SecurityModel& sec, const std::vector<ConstraintRef>& working,
                            const RunConfig& cfg, std::size_t t) {
  auto run = [&](bool soft) {
    const ModelBuilder b = [&](const std::vector<ConstraintRef>& set) { return build(set, soft); };
    if (cfg.use_icci) return icci_loop(b, sec, working, cfg.icci);
    IcciResult r;
    const auto t0 = Clock::now();
    const auto all = sec.all_candidates();
    r.solution = solve_dispatch(b(all), sec);
    r.working = all;
    r.iterations = 1;
    r.solve_ms = r.solution.solve_ms;
    r.elapsed_ms = ms_since(t0);
    r.max_violation = r.solution.status == lp::Status::kOptimal ? sec.max_violation(r.solution.injection) : 0.0;
    return r;
  };
  IcciResult r = run(false);
  if (r.solution.status != lp::Status::kOptimal) {
    spdlog::warn("interval {}: dispatch infeasible under hard limits, retrying with penalized slack", t);
    const double hard_ms = r.elapsed_ms;
    r = run(true);
    r.elapsed_ms += hard_ms;
    if (r.solution.status != lp::Status::kOptimal)
      throw std::runtime_error("interval " + std::to_string(t) + " has no solution even with slack");
    r.solution.soft = true;
  }
  return r;
}

void append_new(std::vector<ConstraintRef>& set, const std::vector<ConstraintRef>& add) {
  for (const auto& c : add)
    if (std::find(set.begin(), set.end(), c) == set.end()) set.push_back(c);
}

}  // namespace

void RunConfig::validate(const Scenario& s) const {
  if (start + horizon > s.profile().horizon())
    throw std::invalid_argument("horizon runs past the load profile (" + std::to_string(s.profile().horizon()) +
                                " intervals)");
  if (!(penalty_price >= 0.0)) throw std::invalid_argument("penalty_price must be non-negative");
  if (knn_k < 1) throw std::invalid_argument("knn k must be positive");
  if (history_capacity == 0) throw std::invalid_argument("history capacity must be positive");
  if (strategy == Strategy::kStgcn && stgcn_model.empty())
    throw std::invalid_argument("the stgcn strategy needs a model file");
  if (icci.k < 1 || icci.max_iter < 1) throw std::invalid_argument("ICCI k and max_iter must be positive");
  if (day_ahead_hours < 0) throw std::invalid_argument("day_ahead_hours must be non-negative");
}

CostBreakdown interval_cost(const SystemCase& sc, std::size_t t, const std::vector<double>& p_gen,
                            const std::vector<double>& instruction, double zeta_total, double penalty_price) {
  if (p_gen.size() != sc.generators.size() || instruction.size() != sc.deras.size())
    throw std::invalid_argument("dispatch vectors do not match the case");
  CostBreakdown c;
  for (std::size_t g = 0; g < p_gen.size(); ++g) c.generation += sc.generators[g].bid_curve_t.at(t).cost(p_gen[g]);
  for (std::size_t a = 0; a < instruction.size(); ++a) c.dera += sc.deras[a].bid_curve_t.at(t).cost(instruction[a]);
  c.penalty = penalty_price * zeta_total;
  return c;
}

bool RunSummary::operator==(const RunSummary& o) const {
  auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  return strategy == o.strategy && intervals == o.intervals && same(mean_cost, o.mean_cost) &&
         same(total_penalty, o.total_penalty) && same(mean_accuracy, o.mean_accuracy) &&
         same(mean_solve_ms, o.mean_solve_ms) && same(max_solve_ms, o.max_solve_ms) &&
         same(mean_icci_iters, o.mean_icci_iters) && max_icci_iters == o.max_icci_iters &&
         soft_intervals == o.soft_intervals && crucial_bounds == o.crucial_bounds &&
         same(max_balance_residual, o.max_balance_residual);
}

RunSummary summarize(const std::string& strategy, const std::vector<IntervalRecord>& records,
                     std::size_t day_ahead_bounds) {
  RunSummary s;
  s.strategy = strategy;
  s.intervals = records.size();
  s.crucial_bounds = day_ahead_bounds;
  s.mean_accuracy = kNaN;
  if (records.empty()) return s;
  double cost = 0.0, acc = 0.0, solve = 0.0, iters = 0.0;
  std::size_t n_acc = 0;
  for (const auto& r : records) {
    cost += r.cost;
    s.total_penalty += r.penalty;
    if (!std::isnan(r.accuracy)) {
      acc += r.accuracy;
      ++n_acc;
    }
    solve += r.solve_ms;
    s.max_solve_ms = std::max(s.max_solve_ms, r.solve_ms);
    iters += r.icci_iters;
    s.max_icci_iters = std::max(s.max_icci_iters, r.icci_iters);
    if (r.soft) ++s.soft_intervals;
    s.crucial_bounds += r.added.size();
    s.max_balance_residual = std::max(s.max_balance_residual, std::abs(r.balance_residual));
  }
  const auto n = static_cast<double>(records.size());
  s.mean_cost = cost / n;
  if (n_acc > 0) s.mean_accuracy = acc / static_cast<double>(n_acc);
  s.mean_solve_ms = solve / n;
  s.mean_icci_iters = iters / n;
  return s;
}

double realized_cost(const std::vector<IntervalRecord>& records) {
  double c = 0.0;
  for (const auto& r : records) c += r.cost;
  return c;
}

// RunContext ----------------------------------------------------------------

bool RunContext::cacheable() const { return !has_finite_ramp(scenario_->system()); }

const std::vector<ConstraintRef>& RunContext::day_ahead(const RunConfig& cfg) {
  if (!day_ahead_) {
    if (cfg.day_ahead_hours > 0 && cfg.use_icci) {
      const auto t0 = Clock::now();
      const auto da = day_ahead_baseline(scenario_->system(), scenario_->security(), scenario_->profile(), cfg.start,
                                         cfg.day_ahead_hours, cfg.icci, cfg.penalty_price);
      spdlog::info("day-ahead baseline: {} bounds over {} hours in {:.0f} ms", da.constraints.size(),
                   cfg.day_ahead_hours, ms_since(t0));
      day_ahead_ = da.constraints;
    } else {
      day_ahead_.emplace();
    }
    oracle_set_ = *day_ahead_;
  }
  return *day_ahead_;
}

const RunContext::Oracle& RunContext::oracle(std::size_t t, const std::vector<double>& demand,
                                             const std::vector<double>& prev_gen, const RunConfig& cfg) {
  const bool cache = cacheable();
  if (cache) {
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
  }
  day_ahead(cfg);
  const auto& sc = scenario_->system();
  const auto& sec = scenario_->security();
  IntervalInput in{t, demand, cache ? std::vector<double>{} : prev_gen, 1.0};
  DispatchOptions opt;
  opt.penalty_price = cfg.penalty_price;
  auto r = solve_with_retry(
      [&](const std::vector<ConstraintRef>& set, bool soft) {
        DispatchOptions o = opt;
        o.soft = soft;
        return build_full_model(sc, sec, in, set, o);
      },
      sec, oracle_set_, cfg, t);
  append_new(oracle_set_, r.added);
  Oracle o;
  for (const auto& row : r.solution.p_tder) o.dfs.phi.push_back(normalized_split(row));
  o.solution = std::move(r.solution);
  o.iterations = r.iterations;
  o.elapsed_ms = r.elapsed_ms;
  if (cache) return cache_.emplace(t, std::move(o)).first->second;
  scratch_ = std::move(o);
  return scratch_;
}

// Rolling run ---------------------------------------------------------------

RunResult run_rolling(const Scenario& s, const RunConfig& cfg) {
  RunContext ctx(s);
  return run_rolling(s, cfg, ctx);
}

RunResult run_rolling(const Scenario& s, const RunConfig& cfg, RunContext& ctx) {
  cfg.validate(s);
  const auto& sc = s.system();
  const auto& sec = s.security();
  const std::string name = to_string(cfg.strategy);
  RunResult out;

  std::optional<stgcn::Model> model;
  if (cfg.strategy == Strategy::kStgcn) model = stgcn::load_model(cfg.stgcn_model);
  const int warmup = cfg.warmup >= 0 ? cfg.warmup : (model ? model->hyper.window : 12);

  if (cfg.horizon == 0) {
    out.summary = summarize(name, out.records, 0);
    return out;
  }
  out.crucial.day_ahead = ctx.day_ahead(cfg);

  DfHistory history(cfg.history_capacity);
  std::vector<double> prev_gen;
  std::vector<double> prev_gen_feature;
  for (const auto& g : sc.generators) prev_gen_feature.push_back(g.p_prev);

  for (std::size_t step = 0; step < cfg.horizon; ++step) {
    const std::size_t t = cfg.start + step;
    IntervalRecord rec;
    rec.t = t;
    rec.strategy = name;
    rec.demand = nodal_demand(sc, s.profile(), t);
    rec.accuracy = kNaN;

    const RunContext::Oracle* oracle = nullptr;
    if (cfg.compute_accuracy || cfg.strategy == Strategy::kOracle) oracle = &ctx.oracle(t, rec.demand, prev_gen, cfg);

    IntervalInput in{t, rec.demand, prev_gen, 1.0};
    DispatchOptions dopt;
    dopt.penalty_price = cfg.penalty_price;

    if (cfg.strategy == Strategy::kOracle) {
      // The full-model dispatch is deployed as is: members produce their
      // cleared outputs and the instruction is their sum.
      const auto& sol = oracle->solution;
      rec.predicted = oracle->dfs;
      rec.p_gen = sol.p_gen;
      rec.p_tder = sol.p_tder;
      for (const auto& row : sol.p_tder) {
        double sum = 0.0;
        for (double p : row) sum += p;
        rec.instruction.push_back(sum);
      }
      rec.lmp = sol.lmp;
      rec.objective = sol.cost_total;
      rec.icci_iters = oracle->iterations;
      rec.solve_ms = oracle->elapsed_ms;
      rec.soft = sol.soft;
    } else {
      // Step (iii): DF prediction.
      const auto tp = Clock::now();
      DfPrediction pred;
      const bool warm = cfg.strategy != Strategy::kConst &&
                        (static_cast<int>(step) < warmup ||
                         (cfg.strategy == Strategy::kKnn && history.size() < static_cast<std::size_t>(cfg.knn_k)) ||
                         (cfg.strategy == Strategy::kStgcn && history.size() < static_cast<std::size_t>(model->hyper.window)));
      if (cfg.strategy == Strategy::kConst || warm) {
        pred = predict_const(sc);
      } else if (cfg.strategy == Strategy::kMer) {
        pred = predict_mer(sc, history);
      } else if (cfg.strategy == Strategy::kKnn) {
        pred = predict_knn(sc, history, rec.demand, cfg.knn_k);
      } else {
        const auto w = stgcn::build_window(sc, *model, history, rec.demand, t, prev_gen_feature);
        pred = predict_stgcn(sc, *model, w);
      }
      rec.warmup = warm;
      rec.predict_ms = ms_since(tp);
      pred.dfs.validate(sc);
      rec.predicted = pred.dfs;
      rec.features_digest = pred.features_digest;

      // Step (iv): ICCI-reduced RTED seeded with the day-ahead set.
      auto r = solve_with_retry(
          [&](const std::vector<ConstraintRef>& set, bool soft) {
            DispatchOptions o = dopt;
            o.soft = soft;
            return build_rted(sc, sec, pred.dfs, in, set, o);
          },
          sec, out.crucial.working(), cfg, t);
      append_new(out.crucial.realtime, r.added);
      for (const auto& c : r.added)
        if (std::find(out.crucial.day_ahead.begin(), out.crucial.day_ahead.end(), c) == out.crucial.day_ahead.end())
          rec.added.push_back(c);
      rec.p_gen = r.solution.p_gen;
      rec.instruction = r.solution.p_dera;
      rec.lmp = r.solution.lmp;
      rec.objective = r.solution.cost_total;
      rec.icci_iters = r.iterations;
      rec.solve_ms = r.elapsed_ms;
      rec.soft = r.solution.soft;

      // Step (v): each DERA splits its instruction.
      const auto ts = Clock::now();
      for (std::size_t a = 0; a < sc.deras.size(); ++a) {
        const double lo = sc.deras[a].p_min_t.at(t), hi = sc.deras[a].p_max_t.at(t);
        rec.p_tder.push_back(self_dispatch(sc.deras[a], std::clamp(rec.instruction[a], lo, hi), t).p_tder);
      }
      rec.self_dispatch_ms = ms_since(ts);
    }

    // Realized outcome from actual member outputs.
    for (const auto& row : rec.p_tder) rec.realized.phi.push_back(normalized_split(row));
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sc.buses.size()));
    for (std::size_t i = 0; i < rec.demand.size(); ++i) inj(static_cast<Eigen::Index>(i)) -= rec.demand[i];
    for (std::size_t g = 0; g < sc.generators.size(); ++g)
      inj(static_cast<Eigen::Index>(sc.bus_index(sc.generators[g].bus_id))) += rec.p_gen[g];
    for (std::size_t a = 0; a < sc.deras.size(); ++a)
      for (std::size_t e = 0; e < sc.deras[a].tders.size(); ++e)
        inj(static_cast<Eigen::Index>(sc.bus_index(sc.deras[a].tders[e].bus_id))) += rec.p_tder[a][e];
    rec.balance_residual = inj.sum();
    rec.violations = sec.violations(inj, cfg.icci.tol);
    for (const auto& v : rec.violations) rec.zeta_total += v.zeta;
    const auto cost = interval_cost(sc, t, rec.p_gen, rec.instruction, rec.zeta_total, cfg.penalty_price);
    rec.generation_cost = cost.generation;
    rec.dera_cost = cost.dera;
    rec.penalty = cost.penalty;
    rec.cost = cost.total();
    if (oracle) rec.accuracy = df_accuracy(rec.predicted, oracle->dfs);
    if (!cfg.record_timings) rec.predict_ms = rec.solve_ms = rec.self_dispatch_ms = 0.0;

    history.push({rec.realized, rec.demand, rec.instruction});
    prev_gen = rec.p_gen;
    prev_gen_feature = rec.p_gen;
    out.records.push_back(std::move(rec));
  }
  out.summary = summarize(name, out.records, out.crucial.day_ahead.size());
  return out;
}

std::vector<RunResult> compare_strategies(const Scenario& s, const RunConfig& base,
                                          const std::vector<Strategy>& strategies) {
  if (strategies.size() < 2) throw std::invalid_argument("compare needs at least two strategies");
  RunContext ctx(s);
  std::vector<RunResult> out;
  for (auto st : strategies) {
    RunConfig c = base;
    c.strategy = st;
    spdlog::info("running strategy {}", to_string(st));
    out.push_back(run_rolling(s, c, ctx));
  }
  return out;
}

// Ledger ---------------------------------------------------------------------

namespace {

json ref_json(const ConstraintRef& c) {
  json j{{"kind", to_string(c.kind)}, {"line", c.line_id}, {"bound", to_string(c.bound)}};
  if (c.kind == ConstraintRef::Kind::kPost) j["outage"] = c.outage_id;
  return j;
}

ConstraintRef ref_from(const json& j) {
  ConstraintRef c;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "pre") c.kind = ConstraintRef::Kind::kPre;
  else if (kind == "post") c.kind = ConstraintRef::Kind::kPost;
  else throw std::invalid_argument("unknown constraint kind " + kind);
  c.line_id = j.at("line").get<int>();
  if (c.kind == ConstraintRef::Kind::kPost) c.outage_id = j.at("outage").get<int>();
  const auto b = j.at("bound").get<std::string>();
  if (b == "upper") c.bound = ConstraintRef::Bound::kUpper;
  else if (b == "lower") c.bound = ConstraintRef::Bound::kLower;
  else throw std::invalid_argument("unknown bound " + b);
  return c;
}

json num(double x) { return std::isnan(x) ? json(nullptr) : json(x); }
double num_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

constexpr const char* kLedgerFormat = "rted-ledger";
constexpr int kLedgerVersion = 1;

}  // namespace

std::string record_to_json(const IntervalRecord& r) {
  json adds = json::array(), viol = json::array();
  for (const auto& c : r.added) adds.push_back(ref_json(c));
  for (const auto& v : r.violations) {
    auto j = ref_json(v.ref);
    j["zeta"] = v.zeta;
    viol.push_back(j);
  }
  json j{{"t", r.t},
         {"strategy", r.strategy},
         {"warmup", r.warmup},
         {"demand", r.demand},
         {"predicted_df", r.predicted.phi},
         {"p_gen", r.p_gen},
         {"instruction", r.instruction},
         {"p_tder", r.p_tder},
         {"realized_df", r.realized.phi},
         {"lmp", r.lmp},
         {"objective", r.objective},
         {"added", adds},
         {"violations", viol},
         {"zeta_total", r.zeta_total},
         {"balance_residual", r.balance_residual},
         {"generation_cost", r.generation_cost},
         {"dera_cost", r.dera_cost},
         {"penalty", r.penalty},
         {"cost", r.cost},
         {"accuracy", num(r.accuracy)},
         {"icci_iters", r.icci_iters},
         {"soft", r.soft},
         {"predict_ms", r.predict_ms},
         {"solve_ms", r.solve_ms},
         {"self_dispatch_ms", r.self_dispatch_ms},
         {"features_digest", r.features_digest}};
  return j.dump();
}

IntervalRecord record_from_json(const std::string& line) {
  const auto j = json::parse(line);
  IntervalRecord r;
  r.t = j.at("t").get<std::size_t>();
  r.strategy = j.at("strategy").get<std::string>();
  r.warmup = j.at("warmup").get<bool>();
  r.demand = j.at("demand").get<std::vector<double>>();
  r.predicted.phi = j.at("predicted_df").get<std::vector<std::vector<double>>>();
  r.p_gen = j.at("p_gen").get<std::vector<double>>();
  r.instruction = j.at("instruction").get<std::vector<double>>();
  r.p_tder = j.at("p_tder").get<std::vector<std::vector<double>>>();
  r.realized.phi = j.at("realized_df").get<std::vector<std::vector<double>>>();
  r.lmp = j.at("lmp").get<std::vector<double>>();
  r.objective = j.at("objective").get<double>();
  for (const auto& c : j.at("added")) r.added.push_back(ref_from(c));
  for (const auto& v : j.at("violations")) r.violations.push_back({ref_from(v), v.at("zeta").get<double>()});
  r.zeta_total = j.at("zeta_total").get<double>();
  r.balance_residual = j.at("balance_residual").get<double>();
  r.generation_cost = j.at("generation_cost").get<double>();
  r.dera_cost = j.at("dera_cost").get<double>();
  r.penalty = j.at("penalty").get<double>();
  r.cost = j.at("cost").get<double>();
  r.accuracy = num_from(j.at("accuracy"));
  r.icci_iters = j.at("icci_iters").get<int>();
  r.soft = j.at("soft").get<bool>();
  r.predict_ms = j.at("predict_ms").get<double>();
  r.solve_ms = j.at("solve_ms").get<double>();
  r.self_dispatch_ms = j.at("self_dispatch_ms").get<double>();
  r.features_digest = j.at("features_digest").get<std::string>();
  return r;
}

void write_ledger(const std::string& path, const std::string& strategy, const std::vector<IntervalRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ledger " + path);
  out << json{{"format", kLedgerFormat}, {"version", kLedgerVersion}, {"strategy", strategy}}.dump() << "\n";
  for (const auto& r : records) out << record_to_json(r) << "\n";
  if (!out) throw std::runtime_error("error writing ledger " + path);
}

std::vector<IntervalRecord> read_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read ledger " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("ledger " + path + " is empty");
  const auto head = json::parse(line);
  if (head.value("format", "") != kLedgerFormat) throw std::invalid_argument(path + " is not a run ledger");
  if (head.value("version", 0) != kLedgerVersion) throw std::invalid_argument("unsupported ledger version in " + path);
  std::vector<IntervalRecord> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_json(line));
  return out;
}

// Reports -------------------------------------------------------------------

void write_intervals_csv(std::ostream& out, const std::vector<RunResult>& runs) {
  out << "interval,strategy,cost,penalty,accuracy,solve_ms,icci_iters\n";
  for (const auto& run : runs)
    for (const auto& r : run.records)
      out << fmt::format("{},{},{:.6f},{:.6f},{},{:.3f},{}\n", r.t, r.strategy, r.cost, r.penalty,
                         std::isnan(r.accuracy) ? std::string("") : fmt::format("{:.4f}", r.accuracy), r.solve_ms,
                         r.icci_iters);
}

std::string format_summary(const std::vector<RunResult>& runs) {
  const RunResult* bench = nullptr;
  for (const auto& r : runs)
    if (r.summary.strategy == "oracle") bench = &r;
  std::string s;
  s += fmt::format("{:<8} {:>9} {:>14} {:>14} {:>10} {:>10} {:>10} {:>9} {:>6} {:>8}", "strategy", "intervals",
                   "mean_cost", "penalty", "accuracy", "solve_ms", "max_ms", "icci_it", "soft", "crucial");
  if (bench) s += fmt::format(" {:>12}", "vs_oracle");
  s += "\n";
  for (const auto& r : runs) {
    const auto& m = r.summary;
    s += fmt::format("{:<8} {:>9} {:>14.2f} {:>14.2f} {:>10} {:>10.3f} {:>10.3f} {:>9.3f} {:>6} {:>8}", m.strategy,
                     m.intervals, m.mean_cost, m.total_penalty,
                     std::isnan(m.mean_accuracy) ? std::string("-") : fmt::format("{:.3f}", m.mean_accuracy),
                     m.mean_solve_ms, m.max_solve_ms, m.mean_icci_iters, m.soft_intervals, m.crucial_bounds);
    if (bench) s += fmt::format(" {:>12.2f}", m.mean_cost - bench->summary.mean_cost);
    s += "\n";
  }
  return s;
}

void write_outputs(const std::string& dir, const std::vector<RunResult>& runs) {
  fs::create_directories(fs::path(dir) / "ledger");
  {
    std::ofstream out(fs::path(dir) / "summary.txt");
    out << format_summary(runs);
  }
  {
    std::ofstream out(fs::path(dir) / "intervals.csv");
    write_intervals_csv(out, runs);
  }
  for (const auto& r : runs)
    write_ledger((fs::path(dir) / "ledger" / (r.summary.strategy + ".jsonl")).string(), r.summary.strategy, r.records);
}

}  // namespace rted
