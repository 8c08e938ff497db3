#include "rted/icci.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace rted {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool entry_less(const ConstraintRef& a, const ConstraintRef& b) {
  if (a.line_id != b.line_id) return a.line_id < b.line_id;
  if (a.kind != b.kind) return a.kind == ConstraintRef::Kind::kPre;
  return a.outage_id < b.outage_id;
}

}  // namespace

std::vector<ConstraintRef> both_bounds(const ConstraintRef& ref) {
  ConstraintRef up = ref, lo = ref;
  up.bound = ConstraintRef::Bound::kUpper;
  lo.bound = ConstraintRef::Bound::kLower;
  return {up, lo};
}

std::vector<Violation> rank_violations(std::vector<Violation> v, int k) {
  std::stable_sort(v.begin(), v.end(), [](const Violation& a, const Violation& b) {
    if (a.zeta != b.zeta) return a.zeta > b.zeta;
    return entry_less(a.ref, b.ref);
  });
  std::vector<Violation> out;
  std::set<std::tuple<int, int, int>> taken;
  for (const auto& x : v) {
    if (static_cast<int>(out.size()) >= k) break;
    const auto key = std::make_tuple(x.ref.line_id, static_cast<int>(x.ref.kind), x.ref.outage_id);
    if (!taken.insert(key).second) continue;
    out.push_back(x);
  }
  return out;
}

IcciResult icci_loop(const ModelBuilder& builder, const SecurityModel& sec, const std::vector<ConstraintRef>& initial,
                     const IcciOptions& options, const lp::SolverOptions& solver) {
  if (options.k < 1) throw std::invalid_argument("ICCI needs k >= 1");
  const auto start = Clock::now();
  IcciResult res;
  std::set<ConstraintRef> in_set;
  for (const auto& r : initial)
    if (in_set.insert(r).second) res.working.push_back(r);

  while (true) {
    ++res.iterations;
    const DispatchModel model = builder(res.working);
    res.solution = solve_dispatch(model, sec, solver);
    res.solve_ms += res.solution.solve_ms;
    res.lp_iterations += res.solution.lp_iterations;
    if (res.solution.status != lp::Status::kOptimal) break;
    auto viol = sec.violations(res.solution.injection, options.tol);
    // Constraints already in the model can only be exceeded through slack
    // in soft mode; adding them again would not change anything.
    std::erase_if(viol, [&](const Violation& v) { return in_set.count(v.ref) != 0; });
    if (viol.empty()) break;
    if (res.iterations >= options.max_iter) {
      double worst = 0.0;
      for (const auto& v : viol) worst = std::max(worst, v.zeta);
      throw IcciError("ICCI did not converge in " + std::to_string(options.max_iter) +
                      " iterations; worst remaining violation " + std::to_string(worst) + " MW");
    }
    for (const auto& v : rank_violations(std::move(viol), options.k))
      for (const auto& b : both_bounds(v.ref))
        if (in_set.insert(b).second) {
          res.working.push_back(b);
          res.added.push_back(b);
        }
  }
  if (res.solution.status == lp::Status::kOptimal) res.max_violation = sec.max_violation(res.solution.injection);
  res.elapsed_ms = ms_since(start);
  return res;
}

std::vector<ConstraintRef> CrucialSet::working() const {
  std::vector<ConstraintRef> out = day_ahead;
  std::set<ConstraintRef> seen(day_ahead.begin(), day_ahead.end());
  for (const auto& r : realtime)
    if (seen.insert(r).second) out.push_back(r);
  return out;
}

std::string crucial_set_to_json(const std::vector<ConstraintRef>& set) {
  nlohmann::json j;
  j["format"] = "rted-crucial-set";
  j["version"] = 1;
  auto& arr = j["constraints"] = nlohmann::json::array();
  for (const auto& r : set) {
    nlohmann::json e{{"kind", to_string(r.kind)}, {"line", r.line_id}, {"bound", to_string(r.bound)}};
    if (r.kind == ConstraintRef::Kind::kPost) e["outage"] = r.outage_id;
    arr.push_back(e);
  }
  return j.dump(2) + "\n";
}

std::vector<ConstraintRef> crucial_set_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "rted-crucial-set") throw std::runtime_error("not a crucial-set file");
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported crucial-set version");
  std::vector<ConstraintRef> out;
  for (const auto& e : j.at("constraints")) {
    ConstraintRef r;
    const auto kind = e.at("kind").get<std::string>();
    if (kind != "pre" && kind != "post") throw std::runtime_error("bad constraint kind " + kind);
    r.kind = kind == "pre" ? ConstraintRef::Kind::kPre : ConstraintRef::Kind::kPost;
    r.line_id = e.at("line").get<int>();
    if (r.kind == ConstraintRef::Kind::kPost) r.outage_id = e.at("outage").get<int>();
    const auto bound = e.at("bound").get<std::string>();
    if (bound != "upper" && bound != "lower") throw std::runtime_error("bad bound " + bound);
    r.bound = bound == "upper" ? ConstraintRef::Bound::kUpper : ConstraintRef::Bound::kLower;
    out.push_back(r);
  }
  return out;
}

void save_crucial_set(const std::vector<ConstraintRef>& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << crucial_set_to_json(set);
}

std::vector<ConstraintRef> load_crucial_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return crucial_set_from_json(ss.str());
}

DayAheadResult day_ahead_baseline(const SystemCase& sc, const SecurityModel& sec, const LoadProfile& profile,
                                  std::size_t start, int hours, const IcciOptions& options, double penalty_price) {
  const auto per_hour = static_cast<std::size_t>(std::max(1.0, std::round(60.0 / profile.interval_minutes)));
  DayAheadResult out;
  std::set<ConstraintRef> seen;
  std::vector<double> prev;
  for (int h = 0; h < hours; ++h) {
    const std::size_t t0 = start + static_cast<std::size_t>(h) * per_hour;
    IntervalInput in;
    in.t = t0;
    in.demand.assign(sc.buses.size(), 0.0);
    std::size_t count = 0;
    for (std::size_t t = t0; t < t0 + per_hour && (t < profile.horizon() || count == 0); ++t, ++count) {
      const auto d = nodal_demand(sc, profile, t);
      for (std::size_t i = 0; i < d.size(); ++i) in.demand[i] += d[i];
    }
    for (double& d : in.demand) d /= static_cast<double>(count);
    in.prev_gen = prev;
    in.ramp_scale = static_cast<double>(per_hour);
    DispatchOptions dopt;
    dopt.penalty_price = penalty_price;
    auto run = [&](bool soft) {
      dopt.soft = soft;
      return icci_loop([&](const std::vector<ConstraintRef>& set) { return build_full_model(sc, sec, in, set, dopt); },
                       sec, out.constraints, options);
    };
    IcciResult r = run(false);
    if (r.solution.status != lp::Status::kOptimal) {
      spdlog::warn("day-ahead hour {} infeasible under hard limits; using penalized slack", h);
      r = run(true);
      ++out.soft_hours;
      if (r.solution.status != lp::Status::kOptimal)
        throw IcciError("day-ahead hour " + std::to_string(h) + " has no solution");
    }
    for (const auto& c : r.added)
      if (seen.insert(c).second) out.constraints.push_back(c);
    out.iterations.push_back(r.iterations);
    prev = r.solution.p_gen;
  }
  return out;
}

}  // namespace rted
