#include "rted/sensitivity.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

namespace rted {

namespace {

class DenseLltSolver final : public SusceptanceSolver {
 public:
  void factorize(const Eigen::MatrixXd& reduced_b) override {
    llt_.compute(reduced_b);
    if (llt_.info() != Eigen::Success) throw ValidationError("network not solvable");
    // LLT accepts numerically semi-definite input; reject tiny pivots.
    const auto diag = llt_.matrixLLT().diagonal();
    if (diag.size() > 0 && diag.minCoeff() <= 1e-10 * std::max(1.0, diag.maxCoeff()))
      throw ValidationError("network not solvable");
  }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const override { return llt_.solve(rhs); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace

std::unique_ptr<SusceptanceSolver> make_dense_solver() { return std::make_unique<DenseLltSolver>(); }

SensitivitySet compute_isf(const SystemCase& sc) { return compute_isf(sc, sc.reference_bus()); }

SensitivitySet compute_isf(const SystemCase& sc, int reference_bus) {
  const auto n = static_cast<Eigen::Index>(sc.buses.size());
  const auto nl = static_cast<Eigen::Index>(sc.lines.size());
  const auto ref = static_cast<Eigen::Index>(sc.bus_index(reference_bus));

  // Reduced index: bus position -> row in the reduced system, ref excluded.
  auto reduced = [ref](Eigen::Index i) { return i < ref ? i : i - 1; };
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n - 1, n - 1);
  Eigen::MatrixXd bf_t = Eigen::MatrixXd::Zero(n - 1, nl);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const auto& line = sc.lines[static_cast<std::size_t>(l)];
    const double y = 1.0 / line.reactance_pu;
    const auto f = static_cast<Eigen::Index>(sc.bus_index(line.from_bus));
    const auto t = static_cast<Eigen::Index>(sc.bus_index(line.to_bus));
    if (f != ref) {
      b(reduced(f), reduced(f)) += y;
      bf_t(reduced(f), l) = y;
    }
    if (t != ref) {
      b(reduced(t), reduced(t)) += y;
      bf_t(reduced(t), l) = -y;
    }
    if (f != ref && t != ref) {
      b(reduced(f), reduced(t)) -= y;
      b(reduced(t), reduced(f)) -= y;
    }
  }
  SensitivitySet sens;
  sens.reference_bus = reference_bus;
  sens.isf = Eigen::MatrixXd::Zero(nl, n);
  if (n > 1) {
    auto solver = make_dense_solver();
    solver->factorize(b);
    const Eigen::MatrixXd isf_t = solver->solve(bf_t);  // (n-1) x nl
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == ref) continue;
      sens.isf.col(i) = isf_t.row(reduced(i)).transpose();
    }
  }
  return sens;
}

SensitivitySet compute_lodf(SensitivitySet sens, const SystemCase& sc,
                            const std::vector<int>& vulnerable_lines) {
  const auto nl = static_cast<Eigen::Index>(sc.lines.size());
  sens.vulnerable_lines = vulnerable_lines;
  sens.vulnerable_index.clear();
  sens.lodf = Eigen::MatrixXd::Zero(nl, static_cast<Eigen::Index>(vulnerable_lines.size()));
  for (std::size_t k = 0; k < vulnerable_lines.size(); ++k) {
    auto it = std::find_if(sc.lines.begin(), sc.lines.end(),
                           [&](const Line& l) { return l.id == vulnerable_lines[k]; });
    if (it == sc.lines.end())
      throw ValidationError("unknown vulnerable line " + std::to_string(vulnerable_lines[k]));
    const auto m = static_cast<Eigen::Index>(it - sc.lines.begin());
    sens.vulnerable_index.push_back(static_cast<std::size_t>(m));
    const auto i = static_cast<Eigen::Index>(sc.bus_index(it->from_bus));
    const auto j = static_cast<Eigen::Index>(sc.bus_index(it->to_bus));
    const double denom = 1.0 - (sens.isf(m, i) - sens.isf(m, j));
    if (std::abs(denom) < 1e-8) throw ValidationError("radial line, outage islanding");
    const auto col = static_cast<Eigen::Index>(k);
    sens.lodf.col(col) = (sens.isf.col(i) - sens.isf.col(j)) / denom;
    sens.lodf(m, col) = -1.0;
  }
  return sens;
}

Eigen::VectorXd dc_flows(const SensitivitySet& sens, const Eigen::VectorXd& injections) {
  const double residual = injections.sum();
  if (std::abs(residual) > 1e-6)
    spdlog::debug("unbalanced injections ({} MW) absorbed at the reference bus", residual);
  return sens.isf * injections;
}

Eigen::VectorXd dc_flows(const SensitivitySet& sens, std::span<const double> injections) {
  Eigen::Map<const Eigen::VectorXd> inj(injections.data(), static_cast<Eigen::Index>(injections.size()));
  return dc_flows(sens, Eigen::VectorXd(inj));
}

std::vector<bool> find_bridges(const SystemCase& sc) {
  const std::size_t n = sc.buses.size();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, line pos)
  for (std::size_t l = 0; l < sc.lines.size(); ++l) {
    const auto f = sc.bus_index(sc.lines[l].from_bus);
    const auto t = sc.bus_index(sc.lines[l].to_bus);
    adj[f].emplace_back(t, l);
    adj[t].emplace_back(f, l);
  }
  std::vector<bool> bridge(sc.lines.size(), false);
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  // Iterative DFS; frames hold (vertex, parent edge, next adjacency slot).
  struct Frame {
    std::size_t v;
    std::size_t parent_edge;
    std::size_t next;
  };
  const std::size_t none = sc.lines.size();
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    std::vector<Frame> stack{{root, none, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      auto& fr = stack.back();
      if (fr.next < adj[fr.v].size()) {
        const auto [w, e] = adj[fr.v][fr.next++];
        if (e == fr.parent_edge) continue;
        if (disc[w] < 0) {
          disc[w] = low[w] = timer++;
          stack.push_back({w, e, 0});
        } else {
          low[fr.v] = std::min(low[fr.v], disc[w]);
        }
      } else {
        const Frame done = fr;
        stack.pop_back();
        if (!stack.empty()) {
          auto& parent = stack.back();
          low[parent.v] = std::min(low[parent.v], low[done.v]);
          if (low[done.v] > disc[parent.v]) bridge[done.parent_edge] = true;
        }
      }
    }
  }
  return bridge;
}

std::vector<int> select_vulnerable(const SystemCase& sc, std::size_t k) {
  if (k > sc.lines.size()) throw std::invalid_argument("more vulnerable lines requested than lines");
  std::vector<std::size_t> order(sc.lines.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& la = sc.lines[a];
    const auto& lb = sc.lines[b];
    if (la.flow_max != lb.flow_max) return la.flow_max > lb.flow_max;
    return la.id < lb.id;
  });
  const auto bridges = find_bridges(sc);
  std::vector<int> out;
  for (auto pos : order) {
    if (out.size() == k) break;
    const auto& line = sc.lines[pos];
    if (!line.limited()) continue;
    if (bridges[pos]) {
      spdlog::warn("line {} is a bridge and cannot be a vulnerable line", line.id);
      continue;
    }
    out.push_back(line.id);
  }
  return out;
}

void write_isf_csv(const SensitivitySet& sens, const SystemCase& sc, std::ostream& out) {
  char buf[64];
  out << "line_id";
  for (const auto& b : sc.buses) out << "," << b.id;
  out << "\n";
  for (Eigen::Index l = 0; l < sens.isf.rows(); ++l) {
    out << sc.lines[static_cast<std::size_t>(l)].id;
    for (Eigen::Index i = 0; i < sens.isf.cols(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.12g", sens.isf(l, i));
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace rted
