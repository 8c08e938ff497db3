#include "rted/case.hpp"

#include <algorithm>
#include <queue>

namespace rted {

void SystemCase::index_buses() {
  bus_pos_.clear();
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!bus_pos_.emplace(buses[i].id, i).second)
      throw ValidationError("duplicate bus id " + std::to_string(buses[i].id));
  }
}

std::size_t SystemCase::bus_index(int bus_id) const {
  auto it = bus_pos_.find(bus_id);
  if (it == bus_pos_.end()) throw ValidationError("unknown bus id " + std::to_string(bus_id));
  return it->second;
}

std::size_t SystemCase::reference_index() const {
  std::size_t found = buses.size();
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!buses[i].is_reference) continue;
    if (found != buses.size()) throw ValidationError("multiple reference buses");
    found = i;
  }
  if (found == buses.size()) throw ValidationError("no reference bus");
  return found;
}

std::size_t SystemCase::num_tders() const {
  std::size_t n = 0;
  for (const auto& a : deras) n += a.tders.size();
  return n;
}

namespace {

void check_series_order(const TimeSeries& lo, const TimeSeries& hi, const std::string& what) {
  const std::size_t n = std::max<std::size_t>({lo.size(), hi.size(), 1});
  for (std::size_t t = 0; t < n; ++t) {
    if (lo.at(t) > hi.at(t) + 1e-9)
      throw ValidationError(what + ": p_min exceeds p_max at interval " + std::to_string(t));
  }
}

}  // namespace

void SystemCase::validate() const {
  if (buses.empty()) throw ValidationError("case has no buses");
  if (bus_pos_.size() != buses.size()) throw ValidationError("bus index is stale");
  reference_index();

  for (const auto& l : lines) {
    if (!has_bus(l.from_bus) || !has_bus(l.to_bus))
      throw ValidationError("line " + std::to_string(l.id) + " references an unknown bus");
    if (l.from_bus == l.to_bus)
      throw ValidationError("line " + std::to_string(l.id) + " is a self loop");
    if (!(l.reactance_pu > 0.0))
      throw ValidationError("line " + std::to_string(l.id) + " has non-positive reactance");
    if (!(l.flow_max > 0.0) || l.flow_min > 0.0)
      throw ValidationError("line " + std::to_string(l.id) + " has invalid flow limits");
  }

  // Connectivity over in-service lines.
  std::vector<std::vector<std::size_t>> adj(buses.size());
  for (const auto& l : lines) {
    const auto f = bus_index(l.from_bus);
    const auto t = bus_index(l.to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<char> seen(buses.size(), 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (seen[v]) continue;
      seen[v] = 1;
      ++reached;
      q.push(v);
    }
  }
  if (reached != buses.size()) throw ValidationError("network is islanded");

  for (const auto& g : generators) {
    if (!has_bus(g.bus_id))
      throw ValidationError("generator " + std::to_string(g.id) + " references an unknown bus");
    check_series_order(g.p_min_t, g.p_max_t, "generator " + std::to_string(g.id));
    if (g.ramp_up < 0.0 || g.ramp_down < 0.0)
      throw ValidationError("generator " + std::to_string(g.id) + " has a negative ramp limit");
  }
  for (const auto& d : loads) {
    if (!has_bus(d.bus_id)) throw ValidationError("load references an unknown bus");
  }
  for (const auto& a : deras) {
    const std::string name = "DERA " + std::to_string(a.id);
    if (a.tders.empty()) throw ValidationError(name + " has no T-DERs");
    std::size_t n = std::max<std::size_t>({a.p_min_t.size(), a.p_max_t.size(), 1});
    for (const auto& e : a.tders) {
      if (!has_bus(e.bus_id)) throw ValidationError(name + " has a T-DER at an unknown bus");
      check_series_order(e.p_min_t, e.p_max_t, "T-DER " + std::to_string(e.id));
      n = std::max({n, e.p_min_t.size(), e.p_max_t.size()});
    }
    for (std::size_t t = 0; t < n; ++t) {
      double lo = 0.0, hi = 0.0;
      for (const auto& e : a.tders) {
        if (e.p_min_t.at(t) < 0.0)
          throw ValidationError("T-DER " + std::to_string(e.id) + " has negative p_min");
        lo += e.p_min_t.at(t);
        hi += e.p_max_t.at(t);
      }
      const double tol = 1e-9 * std::max(1.0, hi);
      if (std::abs(lo - a.p_min_t.at(t)) > tol || std::abs(hi - a.p_max_t.at(t)) > tol)
        throw ValidationError(name + " limits differ from the sum of its members");
    }
  }
}

double LoadProfile::system_load(std::size_t t) const {
  double s = 0.0;
  for (double v : demand.at(t)) s += v;
  return s;
}

std::vector<double> base_nodal_demand(const SystemCase& sc) {
  std::vector<double> d(sc.buses.size(), 0.0);
  for (const auto& l : sc.loads) d[sc.bus_index(l.bus_id)] += l.base_mw;
  return d;
}

std::vector<double> nodal_demand(const SystemCase& sc, const LoadProfile& profile, std::size_t t) {
  if (t < profile.horizon()) return profile.demand[t];
  return base_nodal_demand(sc);
}

}  // namespace rted
