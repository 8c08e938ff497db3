#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "rted/harness.hpp"
#include "rted/sensitivity.hpp"
#include "support/dispatch_cases.hpp"

using namespace rted;
namespace fs = std::filesystem;

namespace {

std::vector<double> wavy_curve(std::size_t n, double lo, double hi) {
  std::vector<double> c(n);
  for (std::size_t t = 0; t < n; ++t)
    c[t] = lo + (hi - lo) * 0.5 * (1.0 + std::sin(0.7 * static_cast<double>(t)));
  return c;
}

Scenario instance_scenario(int n, std::uint64_t seed, bool deras, std::size_t horizon, int group_size = 3) {
  auto in = toy::random_instance(n, seed, false);
  if (deras) {
    in.sc = build_deras(in.sc, {0.3, group_size, 0.0, seed});
    std::mt19937_64 rng(seed + 99);
    toy::price_deras(in.sc, rng);
  }
  auto profile = profile_from_curve(in.sc, wavy_curve(horizon, 0.88, 1.0));
  return Scenario(std::move(in.sc), std::move(profile), in.vulnerable);
}

TDer member(int id, int bus, double pmax, const BidCurve& c) {
  TDer e;
  e.id = id;
  e.bus_id = bus;
  e.p_min_t = TimeSeries(0.0);
  e.p_max_t = TimeSeries(pmax);
  e.cost_curve_t.set_constant(c);
  return e;
}

// Bus 1 cheap generation, bus 2 dear generation, load at bus 3. One DERA
// with members at buses 2 and 3 whose curves are shares of the DERA bid.
// Line 1-3 carries two thirds of any bus 1 to bus 3 transfer.
SystemCase three_bus(double rating_13, double share_2 = 0.5, double load = 90.0) {
  SystemCase sc;
  sc.buses = {{1, true}, {2, false}, {3, false}};
  auto line = [](int id, int a, int b, double r) {
    Line l;
    l.id = id;
    l.from_bus = a;
    l.to_bus = b;
    l.reactance_pu = 0.1;
    l.flow_max = r;
    l.flow_min = -r;
    return l;
  };
  const double inf = std::numeric_limits<double>::infinity();
  sc.lines = {line(1, 1, 2, inf), line(2, 1, 3, rating_13), line(3, 2, 3, inf)};
  sc.generators.push_back(toy::make_gen(1, 1, 200.0, toy::linear_curve(10.0, 200.0)));
  sc.generators.push_back(toy::make_gen(2, 2, 200.0, toy::linear_curve(50.0, 200.0)));
  sc.loads.push_back({3, load});
  Dera a;
  a.id = 1;
  a.p_min_t = TimeSeries(0.0);
  a.p_max_t = TimeSeries(40.0);
  const auto bid = BidCurve::from_prices(std::vector<double>{30.0, 35.0, 45.0}, 0.0, 40.0, 0.0);
  a.bid_curve_t.set_constant(bid);
  a.tders.push_back(member(1, 2, 40.0 * share_2, bid.scaled(share_2)));
  a.tders.push_back(member(2, 3, 40.0 * (1.0 - share_2), bid.scaled(1.0 - share_2)));
  sc.deras.push_back(a);
  sc.index_buses();
  sc.validate();
  return sc;
}

Scenario three_bus_scenario(double rating_13, std::size_t horizon, double share_2 = 0.5) {
  auto sc = three_bus(rating_13, share_2);
  auto profile = profile_from_curve(sc, wavy_curve(horizon, 0.9, 1.1));
  std::vector<int> vulnerable;
  return Scenario(std::move(sc), std::move(profile), vulnerable);
}

RunConfig config(Strategy st, std::size_t horizon) {
  RunConfig c;
  c.strategy = st;
  c.horizon = horizon;
  c.warmup = 2;
  c.knn_k = 2;
  c.day_ahead_hours = 1;
  c.record_timings = false;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("rted_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("zero horizon yields an empty summary") {
  const auto s = three_bus_scenario(1e3, 4);
  const auto r = run_rolling(s, config(Strategy::kConst, 0));
  CHECK(r.records.empty());
  CHECK(r.summary.intervals == 0);
  CHECK(r.summary.mean_cost == 0.0);
}

TEST_CASE("run configuration is validated") {
  const auto s = three_bus_scenario(1e3, 4);
  auto c = config(Strategy::kConst, 5);
  CHECK_THROWS(run_rolling(s, c));
  c.horizon = 4;
  c.penalty_price = -1.0;
  CHECK_THROWS(run_rolling(s, c));
  c.penalty_price = 5000.0;
  c.strategy = Strategy::kStgcn;
  CHECK_THROWS(run_rolling(s, c));
  CHECK_THROWS(compare_strategies(s, config(Strategy::kConst, 2), {Strategy::kConst}));
}

TEST_CASE("a 2 MW realized overload costs 10000 at the default penalty") {
  const auto sc = three_bus(1e3);
  const std::vector<double> pg{50.0, 0.0}, instr{40.0};
  const auto a = interval_cost(sc, 0, pg, instr, 0.0, 5000.0);
  const auto b = interval_cost(sc, 0, pg, instr, 2.0, 5000.0);
  CHECK(b.penalty == doctest::Approx(10000.0));
  CHECK(b.total() - a.total() == doctest::Approx(10000.0));
  CHECK(a.generation == doctest::Approx(500.0));
  CHECK(a.dera == doctest::Approx(sc.deras[0].bid_curve_t.at(0).cost(40.0)));
}

TEST_CASE("without DERAs or violations the realized cost is the RTED objective") {
  const auto s = instance_scenario(12, 3, false, 6);
  const auto r = run_rolling(s, config(Strategy::kConst, 6));
  REQUIRE(r.records.size() == 6);
  for (const auto& rec : r.records) {
    CHECK(rec.zeta_total <= 1e-6);
    CHECK(rec.cost == doctest::Approx(rec.objective).epsilon(1e-9));
  }
  CHECK(realized_cost(r.records) == doctest::Approx(r.summary.mean_cost * 6).epsilon(1e-12));
}

TEST_CASE("singleton DERAs make every strategy match the full model") {
  const auto s = instance_scenario(14, 21, true, 10, 1);
  for (const auto& a : s.system().deras) REQUIRE(a.tders.size() == 1);
  const auto oracle = run_rolling(s, config(Strategy::kOracle, 10));
  for (auto st : {Strategy::kConst, Strategy::kMer, Strategy::kKnn}) {
    CAPTURE(to_string(st));
    const auto r = run_rolling(s, config(st, 10));
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      CHECK(!r.records[i].soft);
      CHECK(r.records[i].cost == doctest::Approx(oracle.records[i].cost).epsilon(1e-6));
      CHECK(r.records[i].accuracy == doctest::Approx(100.0));
    }
  }
}

TEST_CASE("CONST costs at least the oracle on a congested three-bus case") {
  const auto s = three_bus_scenario(30.0, 8, 0.7);
  RunContext ctx(s);
  const auto oracle = run_rolling(s, config(Strategy::kOracle, 8), ctx);
  const auto cons = run_rolling(s, config(Strategy::kConst, 8), ctx);
  // The line binds in the oracle dispatch, so prices separate.
  const auto& lmp = oracle.records[0].lmp;
  CHECK(std::abs(lmp[2] - lmp[0]) > 1.0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(cons.records[i].cost >= oracle.records[i].cost - 1e-6);
  CHECK(cons.summary.mean_cost > oracle.summary.mean_cost);
  CHECK(oracle.summary.total_penalty == 0.0);
}

TEST_CASE("power balances and the oracle dominates on random instances") {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    CAPTURE(seed);
    const auto s = instance_scenario(16, seed, true, 12);
    const auto runs = compare_strategies(s, config(Strategy::kConst, 12),
                                         {Strategy::kOracle, Strategy::kConst, Strategy::kMer, Strategy::kKnn});
    for (const auto& r : runs) {
      for (const auto& rec : r.records) {
        CHECK(std::abs(rec.balance_residual) <= 1e-6);
        double total = -std::accumulate(rec.demand.begin(), rec.demand.end(), 0.0);
        for (double p : rec.p_gen) total += p;
        for (const auto& row : rec.p_tder)
          for (double p : row) total += p;
        CHECK(std::abs(total) <= 1e-6);
        rec.realized.validate(s.system());
        rec.predicted.validate(s.system());
        CHECK(rec.penalty == doctest::Approx(5000.0 * rec.zeta_total));
      }
      CHECK(runs[0].summary.mean_cost <= r.summary.mean_cost + 1e-6);
    }
    for (const auto& rec : runs[0].records) CHECK(rec.zeta_total <= 1e-6);
  }
}

TEST_CASE("ICCI objectives match the all-constraints solve on sampled intervals") {
  const auto s = instance_scenario(18, 41, true, 20);
  const auto& sc = s.system();
  const auto all = s.security().all_candidates();
  for (auto st : {Strategy::kConst, Strategy::kMer}) {
    const auto r = run_rolling(s, config(st, 20));
    for (std::size_t i = 0; i < r.records.size(); i += 10) {
      const auto& rec = r.records[i];
      IntervalInput in{rec.t, rec.demand, {}, 1.0};
      const auto full = solve_dispatch(build_rted(sc, s.security(), rec.predicted, in, all), s.security());
      REQUIRE(full.status == lp::Status::kOptimal);
      CHECK(rec.objective == doctest::Approx(full.cost_total).epsilon(1e-6));
    }
  }
}

TEST_CASE("the crucial set only grows and contains the day-ahead set") {
  const auto s = instance_scenario(16, 8, true, 10);
  const auto r = run_rolling(s, config(Strategy::kConst, 10));
  const auto w = r.crucial.working();
  for (const auto& c : r.crucial.day_ahead) CHECK(std::find(w.begin(), w.end(), c) != w.end());
  std::size_t added = 0;
  for (const auto& rec : r.records) added += rec.added.size();
  CHECK(r.summary.crucial_bounds == r.crucial.day_ahead.size() + added);
}

TEST_CASE("CONST and MER agree when the oracle split never changes") {
  // Equal member capacities and proportional curves: every member split is
  // uniform, which is also what CONST assumes.
  auto sc = three_bus(1e3, 0.5);
  auto profile = profile_from_curve(sc, wavy_curve(10, 0.9, 1.1));
  const Scenario s(std::move(sc), std::move(profile), {});
  const auto runs = compare_strategies(s, config(Strategy::kConst, 10), {Strategy::kConst, Strategy::kMer});
  for (std::size_t i = 2; i < 10; ++i) {
    CHECK(runs[1].records[i].cost == doctest::Approx(runs[0].records[i].cost).epsilon(1e-12));
    CHECK(runs[1].records[i].predicted == runs[0].records[i].predicted);
  }
}

TEST_CASE("infeasible intervals fall back to penalized slack") {
  // Bus 3 imports at most 30 MW over line 1-3 plus what line 2-3 allows.
  auto sc = three_bus(5.0, 0.5, 120.0);
  sc.lines[2].flow_max = 5.0;
  sc.lines[2].flow_min = -5.0;
  sc.deras[0].tders[1].p_max_t = TimeSeries(1.0);
  sc.deras[0].tders[0].p_max_t = TimeSeries(39.0);
  auto profile = profile_from_curve(sc, {1.0, 1.0});
  const Scenario s(std::move(sc), std::move(profile), {});
  auto c = config(Strategy::kConst, 2);
  c.day_ahead_hours = 0;
  const auto r = run_rolling(s, c);
  CHECK(r.summary.soft_intervals == 2);
  for (const auto& rec : r.records) {
    CHECK(rec.soft);
    CHECK(rec.zeta_total > 0.0);
  }
}

TEST_CASE("ledger round trip reproduces the summary") {
  const auto s = instance_scenario(14, 12, true, 8);
  auto c = config(Strategy::kKnn, 8);
  c.compute_accuracy = false;
  const auto r = run_rolling(s, c);
  const auto dir = scratch_dir("ledger");
  const auto path = (dir / "knn.jsonl").string();
  write_ledger(path, "knn", r.records);
  const auto back = read_ledger(path);
  REQUIRE(back.size() == r.records.size());
  CHECK(std::isnan(back[0].accuracy));
  CHECK(summarize("knn", back, r.crucial.day_ahead.size()) == r.summary);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(record_to_json(back[i]) == record_to_json(r.records[i]));

  std::ofstream bad(dir / "bad.jsonl");
  bad << "{\"format\":\"something\",\"version\":1}\n";
  bad.close();
  CHECK_THROWS(read_ledger((dir / "bad.jsonl").string()));
  fs::remove_all(dir);
}

TEST_CASE("reports have one row per strategy and are byte-stable") {
  const auto s = instance_scenario(14, 13, true, 6);
  const std::vector<Strategy> sts{Strategy::kConst, Strategy::kMer, Strategy::kOracle};
  const auto a = compare_strategies(s, config(Strategy::kConst, 6), sts);
  const auto b = compare_strategies(s, config(Strategy::kConst, 6), sts);
  const auto summary = format_summary(a);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + static_cast<long>(sts.size()));
  CHECK(summary.find("vs_oracle") != std::string::npos);

  const auto da = scratch_dir("a"), db = scratch_dir("b");
  write_outputs(da.string(), a);
  write_outputs(db.string(), b);
  for (const char* f : {"summary.txt", "intervals.csv", "ledger/const.jsonl", "ledger/mer.jsonl", "ledger/oracle.jsonl"}) {
    CAPTURE(f);
    CHECK(slurp(da / f) == slurp(db / f));
  }
  const auto csv = slurp(da / "intervals.csv");
  CHECK(csv.rfind("interval,strategy,cost,penalty,accuracy,solve_ms,icci_iters\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 * 3);
  fs::remove_all(da);
  fs::remove_all(db);
}

TEST_CASE("scenario documents") {
  CHECK_THROWS(ScenarioConfig::from_json("{"));
  CHECK_THROWS(ScenarioConfig::from_json(R"({"format":"other","version":1,"case":"x.m"})"));
  CHECK_THROWS(ScenarioConfig::from_json(R"({"format":"rted-scenario","version":2,"case":"x.m"})"));
  CHECK_THROWS(ScenarioConfig::from_json(R"({"format":"rted-scenario","version":1})"));
  CHECK_THROWS(ScenarioConfig::from_json(
      R"({"format":"rted-scenario","version":1,"case":"x.m","profile":{"scale":0}})"));

  const auto c = ScenarioConfig::from_json(
      R"({"format":"rted-scenario","version":1,"case":"c.m","deras":null,
          "profile":{"synthetic_days":2,"seed":3,"scale":0.9},"vulnerable_lines":2})",
      "/data/x");
  CHECK(c.case_path == "/data/x/c.m");
  CHECK_FALSE(c.with_deras);
  CHECK(c.synthetic_days == 2);
  CHECK(c.profile_seed == 3);
  CHECK(c.load_scale == doctest::Approx(0.9));
  CHECK(c.vulnerable_lines == 2);
}

TEST_CASE("the bundled 118-bus scenario builds") {
  const auto cfg = ScenarioConfig::from_file(std::string(RTED_DATA_DIR) + "/scenario118.json");
  const auto s = build_scenario(cfg);
  CHECK(s.system().buses.size() == 118);
  CHECK(s.system().deras.size() == 10);
  // One member per load bus, grouped ten at a time; 99 buses carry load.
  CHECK(s.system().num_tders() == 99);
  for (std::size_t a = 0; a < 9; ++a) CHECK(s.system().deras[a].tders.size() == 10);
  CHECK(s.profile().horizon() == 2304);
  CHECK(s.vulnerable().size() == 5);
  // Vulnerable lines are the five largest ratings.
  std::vector<double> r;
  for (const auto& l : s.system().lines) r.push_back(l.flow_max);
  std::sort(r.rbegin(), r.rend());
  for (int id : s.vulnerable()) {
    const auto it = std::find_if(s.system().lines.begin(), s.system().lines.end(),
                                 [&](const Line& l) { return l.id == id; });
    CHECK(it->flow_max >= r[4]);
  }
  CHECK(s.security().all_candidates().size() == 2 * 1111);
}
