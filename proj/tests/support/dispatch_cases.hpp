#pragma once

#include <algorithm>
#include <random>

#include "rted/case_io.hpp"
#include "rted/dispatch.hpp"
#include "rted/sensitivity.hpp"
#include "support/toy_cases.hpp"

namespace toy {

inline rted::BidCurve linear_curve(double kappa, double pmax) {
  return rted::BidCurve({{kappa, 0.0, 0.0, pmax}});
}

inline rted::Generator make_gen(int id, int bus, double pmax, const rted::BidCurve& c, double pmin = 0.0) {
  rted::Generator g;
  g.id = id;
  g.bus_id = bus;
  g.p_min_t = rted::TimeSeries(pmin);
  g.p_max_t = rted::TimeSeries(pmax);
  g.bid_curve_t.set_constant(c);
  return g;
}

// Gives every DERA a random convex bid and members the capacity-share scaling.
inline void price_deras(rted::SystemCase& sc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& a : sc.deras) {
    const double k0 = 12.0 + 30.0 * u(rng);
    const std::vector<double> k{k0, k0 + 2 + 4 * u(rng), k0 + 8 + 6 * u(rng)};
    const auto curve = rted::BidCurve::from_prices(k, a.p_min_t.at(0), a.p_max_t.at(0), 0.0);
    a.bid_curve_t.set_constant(curve);
    for (auto& e : a.tders) e.cost_curve_t.set_constant(curve.scaled(e.p_max_t.at(0) / a.p_max_t.at(0)));
  }
}

struct Instance {
  rted::SystemCase sc;
  std::vector<double> demand;
  std::vector<int> vulnerable;
};

// Random network with generators, loads and optionally DERAs. Ratings are
// tightened around an unconstrained dispatch so that several lines bind.
inline Instance random_instance(int n, std::uint64_t seed, bool deras, int n_vulnerable = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance in;
  in.sc = random_network(n, n / 2 + 2, seed * 7 + 1, 1e5);
  auto& sc = in.sc;
  const int ngen = std::max(2, n / 3);
  double cap = 0.0;
  for (int g = 0; g < ngen; ++g) {
    const double pmax = 50.0 + 100.0 * u(rng);
    const double k0 = 10.0 + 30.0 * u(rng);
    const std::vector<double> k{k0, k0 + 1 + 7 * u(rng), k0 + 9 + 7 * u(rng)};
    sc.generators.push_back(make_gen(g + 1, 1 + static_cast<int>(rng() % static_cast<unsigned>(n)), pmax,
                                     rted::BidCurve::from_prices(k, 0.0, pmax, 0.0)));
    cap += pmax;
  }
  double total = 0.0;
  for (int i = 1; i <= n; ++i)
    if (u(rng) < 0.6) {
      sc.loads.push_back({i, 10.0 + 50.0 * u(rng)});
      total += sc.loads.back().base_mw;
    }
  if (sc.loads.empty()) {
    sc.loads.push_back({n, 30.0});
    total = 30.0;
  }
  const double scale = std::min(1.0, 0.55 * cap / total);
  for (auto& l : sc.loads) l.base_mw *= scale;
  if (deras) {
    sc = rted::build_deras(sc, {0.3, 3, 0.0, seed});
    price_deras(sc, rng);
  }
  in.demand = rted::base_nodal_demand(sc);

  // Unconstrained dispatch, then ratings that bind on some lines.
  auto sens = rted::compute_isf(sc);
  rted::SecurityModel sec0(sc, sens);
  rted::IntervalInput iv{0, in.demand, {}, 1.0};
  const auto free_sol = rted::solve_dispatch(rted::build_full_model(sc, sec0, iv, {}), sec0);
  for (std::size_t l = 0; l < sc.lines.size(); ++l) {
    const double f = std::abs(free_sol.p_line[l]);
    const double r = u(rng) < 0.35 ? std::max(5.0, 0.7 * f) : std::max(20.0, 1.6 * f + 10.0);
    sc.lines[l].flow_max = r;
    sc.lines[l].flow_min = -r;
  }
  // Relax until the fully constrained problem is feasible.
  for (int attempt = 0; attempt < 30; ++attempt) {
    in.vulnerable = rted::select_vulnerable(sc, std::min<std::size_t>(static_cast<std::size_t>(n_vulnerable), sc.lines.size()));
    rted::SecurityModel sec(sc, rted::compute_lodf(rted::compute_isf(sc), sc, in.vulnerable));
    const auto all = sec.all_candidates();
    const auto s = rted::solve_dispatch(rted::build_full_model(sc, sec, iv, all), sec);
    if (s.status == rted::lp::Status::kOptimal) break;
    for (auto& l : sc.lines) {
      l.flow_max *= 1.25;
      l.flow_min *= 1.25;
    }
  }
  return in;
}

}  // namespace toy
