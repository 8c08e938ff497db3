#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "rted/icci.hpp"
#include "support/dispatch_cases.hpp"

using namespace rted;

namespace {

using Kind = ConstraintRef::Kind;
using Bound = ConstraintRef::Bound;

ConstraintRef pre(int line, Bound b = Bound::kUpper) { return {Kind::kPre, line, -1, b}; }
ConstraintRef post(int line, int out, Bound b = Bound::kUpper) { return {Kind::kPost, line, out, b}; }

// Triangle with only line 1-3 rated: the unconstrained dispatch pushes 60 MW
// over it, so a 50 MW rating is violated and nothing else is.
SystemCase one_corridor_case(double rating = 50.0) {
  auto sc = parse_case(toy::triangle_text(0.0));
  sc.lines[1].flow_max = rating;
  sc.lines[1].flow_min = -rating;
  return sc;
}

ModelBuilder full_builder(const SystemCase& sc, const SecurityModel& sec, const IntervalInput& in) {
  return [&sc, &sec, in](const std::vector<ConstraintRef>& set) { return build_full_model(sc, sec, in, set); };
}

ModelBuilder df_builder(const SystemCase& sc, const SecurityModel& sec, DfVector df, const IntervalInput& in) {
  return [&sc, &sec, df = std::move(df), in](const std::vector<ConstraintRef>& set) {
    return build_rted(sc, sec, df, in, set);
  };
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("violation metric") {
  CHECK(violation_metric(50, -100, 100) == 0.0);
  CHECK(violation_metric(120, -100, 100) == 20.0);
  CHECK(violation_metric(-130, -100, 100) == 30.0);
  CHECK(violation_metric(100, -100, 100) == 0.0);
}

TEST_CASE("ranking orders by violation, then line, then pre before post") {
  std::vector<Violation> v{{post(2, 5), 3.0}, {pre(4), 3.0}, {pre(2, Bound::kLower), 3.0},
                           {post(2, 1), 3.0}, {pre(9), 7.0},  {pre(1), 1.0}};
  const auto r = rank_violations(v, 4);
  REQUIRE(r.size() == 4);
  CHECK(r[0].ref == pre(9));
  CHECK(r[1].ref == pre(2, Bound::kLower));
  CHECK(r[2].ref == post(2, 1));
  CHECK(r[3].ref == post(2, 5));

  // Two bounds of the same line entry count once toward k.
  std::vector<Violation> w{{pre(3), 5.0}, {pre(3, Bound::kLower), 4.0}, {pre(7), 1.0}};
  const auto r2 = rank_violations(w, 2);
  REQUIRE(r2.size() == 2);
  CHECK(r2[0].ref == pre(3));
  CHECK(r2[1].ref == pre(7));
  CHECK(rank_violations(w, 10).size() == 2);
}

TEST_CASE("both bounds") {
  const auto b = both_bounds(post(3, 7, Bound::kLower));
  REQUIRE(b.size() == 2);
  CHECK(b[0] == post(3, 7, Bound::kUpper));
  CHECK(b[1] == post(3, 7, Bound::kLower));
}

TEST_CASE("nothing violated: one iteration, no additions") {
  const auto sc = one_corridor_case(1000.0);
  SecurityModel sec(sc, compute_isf(sc));
  IntervalInput in{0, base_nodal_demand(sc), {}, 1.0};
  const auto r = icci_loop(full_builder(sc, sec, in), sec, {});
  CHECK(r.iterations == 1);
  CHECK(r.added.empty());
  CHECK(r.solution.status == lp::Status::kOptimal);
  CHECK(r.solution.cost_total == doctest::Approx(900.0));
}

TEST_CASE("single overloaded corridor: two iterations and the full-solve objective") {
  const auto sc = one_corridor_case(50.0);
  SecurityModel sec(sc, compute_isf(sc));
  IntervalInput in{0, base_nodal_demand(sc), {}, 1.0};
  const auto r = icci_loop(full_builder(sc, sec, in), sec, {});
  CHECK(r.iterations == 2);
  const auto up = pre(2, Bound::kUpper);
  CHECK(std::find(r.added.begin(), r.added.end(), up) != r.added.end());
  CHECK(r.added == both_bounds(up));

  const auto all = sec.all_candidates();
  const auto full = solve_dispatch(build_full_model(sc, sec, in, all), sec);
  REQUIRE(full.status == lp::Status::kOptimal);
  CHECK(std::abs(r.solution.cost_total - full.cost_total) <= 1e-8 * std::max(1.0, full.cost_total));
  // 1-3 at 50 MW: flow13 = (2 P1 + P2) / 3 with P1 + P2 = 90 gives P1 = 60.
  CHECK(r.solution.p_gen[0] == doctest::Approx(60.0));
  CHECK(r.max_violation <= 1e-6);
}

TEST_CASE("iteration cap raises with the worst remaining violation") {
  const auto sc = one_corridor_case(50.0);
  SecurityModel sec(sc, compute_isf(sc));
  IntervalInput in{0, base_nodal_demand(sc), {}, 1.0};
  IcciOptions opt;
  opt.max_iter = 1;
  CHECK_THROWS_AS(icci_loop(full_builder(sc, sec, in), sec, {}, opt), IcciError);
  opt.k = 0;
  CHECK_THROWS_AS(icci_loop(full_builder(sc, sec, in), sec, {}, opt), std::invalid_argument);
}

TEST_CASE("infeasible relaxed model returns its status") {
  auto sc = one_corridor_case(50.0);
  for (auto& l : sc.lines) {
    l.flow_max = 1.0;
    l.flow_min = -1.0;
  }
  SecurityModel sec(sc, compute_isf(sc));
  IntervalInput in{0, base_nodal_demand(sc), {}, 1.0};
  const auto r = icci_loop(full_builder(sc, sec, in), sec, {});
  CHECK(r.solution.status == lp::Status::kInfeasible);
}

TEST_CASE("ICCI matches the all-constraints solve on random instances") {
  std::mt19937_64 rng(5);
  int congested = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const auto in = toy::random_instance(6 + static_cast<int>(seed % 9), seed, seed % 2 == 0);
    const auto& sc = in.sc;
    SecurityModel sec(sc, compute_lodf(compute_isf(sc), sc, in.vulnerable));
    IntervalInput iv{0, in.demand, {}, 1.0};
    const auto all = sec.all_candidates();
    const auto full_all = solve_dispatch(build_full_model(sc, sec, iv, all), sec);
    REQUIRE(full_all.status == lp::Status::kOptimal);

    const auto r = icci_loop(full_builder(sc, sec, iv), sec, {});
    REQUIRE(r.solution.status == lp::Status::kOptimal);
    CHECK(rel_gap(r.solution.cost_total, full_all.cost_total) <= 1e-6);
    CHECK(r.max_violation <= 1e-6);
    if (!r.added.empty()) ++congested;

    // The working set only grows: it is the initial set followed by additions,
    // without repeats.
    CHECK(r.working == r.added);
    CHECK(std::set<ConstraintRef>(r.added.begin(), r.added.end()).size() == r.added.size());

    // Seeding with extra, non-crucial constraints leaves the optimum alone.
    std::vector<ConstraintRef> seed_set;
    for (const auto& c : all)
      if (rng() % 4 == 0) seed_set.push_back(c);
    const auto r2 = icci_loop(full_builder(sc, sec, iv), sec, seed_set);
    REQUIRE(r2.solution.status == lp::Status::kOptimal);
    CHECK(rel_gap(r2.solution.cost_total, r.solution.cost_total) <= 1e-6);
    CHECK(r2.working.size() == seed_set.size() + r2.added.size());

    // Same for the DF-based model.
    if (!sc.deras.empty()) {
      const auto df = DfVector::uniform(sc);
      const auto df_all = solve_dispatch(build_rted(sc, sec, df, iv, all), sec);
      const auto rd = icci_loop(df_builder(sc, sec, df, iv), sec, {});
      CHECK(rd.solution.status == df_all.status);
      if (df_all.status == lp::Status::kOptimal) {
        CHECK(rel_gap(rd.solution.cost_total, df_all.cost_total) <= 1e-6);
        CHECK(rd.max_violation <= 1e-6);
      }
    }
  }
  CHECK(congested >= 12);
}

TEST_CASE("crucial set JSON round trip") {
  const std::vector<ConstraintRef> set{pre(3), pre(3, Bound::kLower), post(7, 2), post(7, 2, Bound::kLower)};
  const auto text = crucial_set_to_json(set);
  CHECK(crucial_set_from_json(text) == set);
  CHECK(crucial_set_from_json(crucial_set_to_json({})).empty());
  CHECK_THROWS(crucial_set_from_json(R"({"format":"rted-crucial-set","version":9,"constraints":[]})"));
  CHECK_THROWS(crucial_set_from_json(R"({"format":"other","version":1,"constraints":[]})"));
  CHECK_THROWS(crucial_set_from_json(
      R"({"format":"rted-crucial-set","version":1,"constraints":[{"kind":"x","line":1,"bound":"upper"}]})"));
}

TEST_CASE("working set is the day-ahead set followed by new real-time entries") {
  CrucialSet cs;
  cs.day_ahead = {pre(1), pre(1, Bound::kLower)};
  cs.realtime = {pre(1), pre(4), post(4, 2)};
  const auto w = cs.working();
  REQUIRE(w.size() == 4);
  CHECK(w[0] == pre(1));
  CHECK(w[1] == pre(1, Bound::kLower));
  CHECK(w[2] == pre(4));
  CHECK(w[3] == post(4, 2));
}

namespace {

LoadProfile flat_profile(const SystemCase& sc, double scale, std::size_t intervals) {
  LoadProfile p;
  const auto base = base_nodal_demand(sc);
  for (std::size_t t = 0; t < intervals; ++t) {
    auto d = base;
    for (auto& x : d) x *= scale;
    p.demand.push_back(d);
  }
  return p;
}

}  // namespace

TEST_CASE("day-ahead: flat low load gives an empty set") {
  const auto sc = one_corridor_case(50.0);
  SecurityModel sec(sc, compute_isf(sc));
  const auto p = flat_profile(sc, 0.5, 48);
  const auto da = day_ahead_baseline(sc, sec, p, 0, 4);
  CHECK(da.constraints.empty());
  CHECK(da.iterations == std::vector<int>{1, 1, 1, 1});
  CHECK(da.soft_hours == 0);
}

TEST_CASE("day-ahead: a persistently congested corridor is found and only it") {
  const auto sc = one_corridor_case(50.0);
  SecurityModel sec(sc, compute_isf(sc));
  const auto p = flat_profile(sc, 1.0, 48);
  const auto da = day_ahead_baseline(sc, sec, p, 0, 4);
  CHECK(da.constraints == both_bounds(pre(2)));

  // Oracle: the all-constraints solve of each hour binds exactly that bound.
  IntervalInput in{0, base_nodal_demand(sc), {}, 12.0};
  const auto full = solve_dispatch(build_full_model(sc, sec, in, sec.all_candidates()), sec);
  REQUIRE(full.status == lp::Status::kOptimal);
  REQUIRE(full.active_set.size() == 1);
  CHECK(full.active_set[0] == pre(2));

  // Real-time working sets seeded from the day-ahead set contain it.
  CrucialSet cs;
  cs.day_ahead = da.constraints;
  const auto r = icci_loop(full_builder(sc, sec, in), sec, cs.working());
  cs.realtime = r.added;
  for (const auto& c : da.constraints)
    CHECK(std::find(r.working.begin(), r.working.end(), c) != r.working.end());
  CHECK(r.iterations == 1);
}
