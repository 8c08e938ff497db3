#pragma once

#include <random>
#include <string>

#include "rted/case.hpp"
#include "rted/case_io.hpp"

namespace toy {

// Bus 1 is the reference. Three equal-reactance lines.
inline std::string triangle_text(double rate = 0.0) {
  const std::string r = std::to_string(rate);
  return "function mpc = tri\n"
         "mpc.version = '2';\n"
         "mpc.baseMVA = 100;\n"
         "mpc.bus = [\n"
         "  1 3 0  0 0 0 1 1 0 230 1 1.1 0.9;\n"
         "  2 2 0  0 0 0 1 1 0 230 1 1.1 0.9;\n"
         "  3 1 90 0 0 0 1 1 0 230 1 1.1 0.9;\n"
         "];\n"
         "mpc.gen = [\n"
         "  1 0 0 100 -100 1 100 1 100 0;\n"
         "  2 0 0 100 -100 1 100 1 100 0;\n"
         "];\n"
         "mpc.branch = [\n"
         "  1 2 0.01 0.1 0.02 " + r + " 0 0 0 0 1 -360 360;\n"
         "  1 3 0.01 0.1 0.02 " + r + " 0 0 0 0 1 -360 360;\n"
         "  2 3 0.01 0.1 0.02 " + r + " 0 0 0 0 1 -360 360;\n"
         "];\n"
         "mpc.gencost = [\n"
         "  1 0 0 2 0 0 100 1000;\n"
         "  1 0 0 2 0 0 100 2000;\n"
         "];\n";
}

// Connected random network: a random spanning tree plus extra edges.
inline rted::SystemCase random_network(int n, int extra, std::uint64_t seed, double rate = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xr(0.02, 0.3);
  rted::SystemCase sc;
  for (int i = 1; i <= n; ++i) sc.buses.push_back({i, i == 1});
  int id = 1;
  auto add = [&](int a, int b) {
    rted::Line l;
    l.id = id++;
    l.from_bus = a;
    l.to_bus = b;
    l.reactance_pu = xr(rng);
    l.susceptance_pu = 0.01;
    if (rate > 0) {
      l.flow_max = rate;
      l.flow_min = -rate;
    }
    sc.lines.push_back(l);
  };
  for (int i = 2; i <= n; ++i) add(static_cast<int>(rng() % static_cast<unsigned>(i - 1)) + 1, i);
  for (int e = 0; e < extra; ++e) {
    const int a = static_cast<int>(rng() % static_cast<unsigned>(n)) + 1;
    int b = static_cast<int>(rng() % static_cast<unsigned>(n)) + 1;
    if (a == b) b = a % n + 1;
    add(a, b);
  }
  sc.index_buses();
  return sc;
}

}  // namespace toy
