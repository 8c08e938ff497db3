#include "rted/dispatch.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>

namespace rted {

using lp::Sense;
using lp::Term;

DfVector DfVector::uniform(const SystemCase& sc) {
  DfVector d;
  for (const auto& a : sc.deras)
    d.phi.emplace_back(a.tders.size(), 1.0 / static_cast<double>(a.tders.size()));
  return d;
}

void DfVector::validate(const SystemCase& sc, double tol) const {
  if (phi.size() != sc.deras.size()) throw ValidationError("DF vector has the wrong number of DERAs");
  for (std::size_t a = 0; a < phi.size(); ++a) {
    if (phi[a].size() != sc.deras[a].tders.size())
      throw ValidationError("DF vector of DERA " + std::to_string(sc.deras[a].id) + " has the wrong length");
    double sum = 0.0;
    for (double v : phi[a]) {
      if (!(v >= 0.0)) throw ValidationError("negative DF in DERA " + std::to_string(sc.deras[a].id));
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol)
      throw ValidationError("DFs of DERA " + std::to_string(sc.deras[a].id) + " sum to " + std::to_string(sum));
  }
}

std::vector<double> normalized_split(const std::vector<double>& p) {
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  std::vector<double> out(p.size(), p.empty() ? 0.0 : 1.0 / static_cast<double>(p.size()));
  if (total <= 1e-9) return out;
  for (std::size_t e = 0; e < p.size(); ++e) out[e] = std::max(0.0, p[e]) / total;
  return out;
}

namespace {

DispatchModel common_part(const SystemCase& sc, const IntervalInput& in, const DispatchOptions& opt, bool full) {
  if (in.demand.size() != sc.buses.size()) throw std::invalid_argument("demand vector does not match the bus count");
  if (!in.prev_gen.empty() && in.prev_gen.size() != sc.generators.size())
    throw std::invalid_argument("previous dispatch does not match the generator count");
  DispatchModel m;
  m.full = full;
  m.t = in.t;
  m.sc = &sc;
  m.demand = in.demand;
  auto& lpm = m.lp;
  const std::size_t t = in.t;
  for (std::size_t g = 0; g < sc.generators.size(); ++g) {
    const auto& gen = sc.generators[g];
    const std::string name = "g" + std::to_string(gen.id);
    const int p = lpm.add_variable("P_" + name, gen.p_min_t.at(t), gen.p_max_t.at(t));
    m.gen_p.push_back(p);
    m.cost_offset += lp::add_segment_cost(lpm, gen.bid_curve_t.at(t), p, name).offset;
    if (!in.prev_gen.empty()) {
      const double prev = in.prev_gen[g];
      if (std::isfinite(gen.ramp_up))
        lpm.add_constraint("ramp_up_" + name, {{p, 1.0}}, Sense::kLessEqual, prev + gen.ramp_up * in.ramp_scale);
      if (std::isfinite(gen.ramp_down))
        lpm.add_constraint("ramp_down_" + name, {{p, 1.0}}, Sense::kGreaterEqual,
                           prev - gen.ramp_down * in.ramp_scale);
    }
  }
  for (const auto& a : sc.deras) {
    const std::string name = "a" + std::to_string(a.id);
    const int p = lpm.add_variable("P_" + name, a.p_min_t.at(t), a.p_max_t.at(t));
    m.dera_p.push_back(p);
    if (!full) {
      m.cost_offset += lp::add_segment_cost(lpm, a.bid_curve_t.at(t), p, name).offset;
    } else {
      std::vector<int> members;
      std::vector<Term> agg{{p, 1.0}};
      for (const auto& e : a.tders) {
        const std::string ename = "e" + std::to_string(e.id);
        const int pe = lpm.add_variable("P_" + ename, e.p_min_t.at(t), e.p_max_t.at(t));
        m.cost_offset += lp::add_segment_cost(lpm, e.cost_curve_t.at(t), pe, ename).offset;
        members.push_back(pe);
        agg.push_back({pe, -1.0});
      }
      lpm.add_constraint("aggregate_" + name, agg, Sense::kEqual, 0.0);
      m.tder_p.push_back(std::move(members));
    }
  }
  std::vector<Term> bal;
  for (int p : m.gen_p) bal.push_back({p, 1.0});
  for (int p : m.dera_p) bal.push_back({p, 1.0});
  if (opt.soft) {
    const int up = lpm.add_variable("slack_balance_up", 0.0, lp::kInf, opt.penalty_price);
    const int dn = lpm.add_variable("slack_balance_down", 0.0, lp::kInf, opt.penalty_price);
    bal.push_back({up, 1.0});
    bal.push_back({dn, -1.0});
    m.slack_vars.push_back(up);
    m.slack_vars.push_back(dn);
  }
  m.balance_row = lpm.add_constraint("balance", bal, Sense::kEqual,
                                     std::accumulate(in.demand.begin(), in.demand.end(), 0.0));
  return m;
}

void add_security(DispatchModel& m, const SystemCase& sc, const SecurityModel& sec,
                  const std::vector<ConstraintRef>& monitored, const DispatchOptions& opt) {
  std::set<ConstraintRef> seen;
  Eigen::Map<const Eigen::VectorXd> demand(m.demand.data(), static_cast<Eigen::Index>(m.demand.size()));
  for (const auto& ref : monitored) {
    if (!seen.insert(ref).second) continue;
    sec.check(ref);
    const Eigen::RowVectorXd coef = sec.coefficients(ref);
    std::vector<Term> terms;
    auto push = [&terms](int var, double c) {
      if (std::abs(c) > 1e-12) terms.push_back({var, c});
    };
    for (std::size_t g = 0; g < sc.generators.size(); ++g)
      push(m.gen_p[g], coef(static_cast<Eigen::Index>(sc.bus_index(sc.generators[g].bus_id))));
    for (std::size_t a = 0; a < sc.deras.size(); ++a) {
      const auto& members = sc.deras[a].tders;
      if (m.full) {
        for (std::size_t e = 0; e < members.size(); ++e)
          push(m.tder_p[a][e], coef(static_cast<Eigen::Index>(sc.bus_index(members[e].bus_id))));
      } else {
        double c = 0.0;
        for (std::size_t e = 0; e < members.size(); ++e)
          c += m.phi[a][e] * coef(static_cast<Eigen::Index>(sc.bus_index(members[e].bus_id)));
        push(m.dera_p[a], c);
      }
    }
    const bool upper = ref.bound == ConstraintRef::Bound::kUpper;
    if (opt.soft) {
      const int s = m.lp.add_variable("slack_" + ref.label(), 0.0, lp::kInf, opt.penalty_price);
      terms.push_back({s, upper ? -1.0 : 1.0});
      m.slack_vars.push_back(s);
    }
    const double rhs = sec.limit(ref) + coef.dot(demand);
    const int row = m.lp.add_constraint(ref.label(), std::move(terms), upper ? Sense::kLessEqual : Sense::kGreaterEqual, rhs);
    m.security.push_back(ref);
    m.security_rows.push_back(row);
    m.security_coef.push_back(coef);
  }
}

}  // namespace

DispatchModel build_rted(const SystemCase& sc, const SecurityModel& sec, const DfVector& dfs, const IntervalInput& in,
                         const std::vector<ConstraintRef>& monitored, const DispatchOptions& opt) {
  dfs.validate(sc, 1e-9);
  DispatchModel m = common_part(sc, in, opt, false);
  m.phi = dfs.phi;
  add_security(m, sc, sec, monitored, opt);
  return m;
}

DispatchModel build_full_model(const SystemCase& sc, const SecurityModel& sec, const IntervalInput& in,
                               const std::vector<ConstraintRef>& monitored, const DispatchOptions& opt) {
  DispatchModel m = common_part(sc, in, opt, true);
  add_security(m, sc, sec, monitored, opt);
  return m;
}

std::vector<double> extract_lmp(const DispatchModel& model, const lp::LpSolution& sol, bool* degenerate) {
  const std::size_t nb = model.demand.size();
  std::vector<double> lmp(nb, sol.duals.at(static_cast<std::size_t>(model.balance_row)));
  for (std::size_t r = 0; r < model.security_rows.size(); ++r) {
    const double y = sol.duals[static_cast<std::size_t>(model.security_rows[r])];
    if (y == 0.0) continue;
    for (std::size_t i = 0; i < nb; ++i) lmp[i] += y * model.security_coef[r](static_cast<Eigen::Index>(i));
  }
  if (degenerate) *degenerate = !lp::check_certificates(model.lp, sol).passes(1e-7);
  return lmp;
}

RtedSolution solve_dispatch(const DispatchModel& model, const SecurityModel& sec, const lp::SolverOptions& solver) {
  const SystemCase& sc = *model.sc;
  RtedSolution out;
  out.soft = !model.slack_vars.empty();
  const auto t0 = std::chrono::steady_clock::now();
  const auto sol = lp::solve(model.lp, solver);
  out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.status = sol.status;
  out.lp_iterations = sol.iterations;
  if (sol.status != lp::Status::kOptimal) return out;

  out.cost_total = sol.objective + model.cost_offset;
  for (int p : model.gen_p) out.p_gen.push_back(sol.primal[static_cast<std::size_t>(p)]);
  for (int p : model.dera_p) out.p_dera.push_back(sol.primal[static_cast<std::size_t>(p)]);
  for (int s : model.slack_vars) out.slack_mw += sol.primal[static_cast<std::size_t>(s)];
  out.injection = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sc.buses.size()));
  for (std::size_t i = 0; i < sc.buses.size(); ++i) out.injection(static_cast<Eigen::Index>(i)) = -model.demand[i];
  for (std::size_t g = 0; g < sc.generators.size(); ++g)
    out.injection(static_cast<Eigen::Index>(sc.bus_index(sc.generators[g].bus_id))) += out.p_gen[g];
  for (std::size_t a = 0; a < sc.deras.size(); ++a) {
    const auto& members = sc.deras[a].tders;
    std::vector<double> pe(members.size());
    for (std::size_t e = 0; e < members.size(); ++e) {
      pe[e] = model.full ? sol.primal[static_cast<std::size_t>(model.tder_p[a][e])] : model.phi[a][e] * out.p_dera[a];
      out.injection(static_cast<Eigen::Index>(sc.bus_index(members[e].bus_id))) += pe[e];
    }
    out.p_tder.push_back(std::move(pe));
  }
  const Eigen::VectorXd f = sec.flows(out.injection);
  out.p_line.assign(f.data(), f.data() + f.size());
  out.lmp = extract_lmp(model, sol, &out.lmp_degenerate);
  const auto& rows = model.lp.constraints();
  for (std::size_t r = 0; r < model.security_rows.size(); ++r) {
    const auto row = static_cast<std::size_t>(model.security_rows[r]);
    if (std::abs(sol.row_activity[row] - rows[row].rhs) <= 1e-6 * (1.0 + std::abs(rows[row].rhs)))
      out.active_set.push_back(model.security[r]);
  }
  return out;
}

SelfDispatchResult self_dispatch(const Dera& dera, double instruction, std::size_t t) {
  const double lo = dera.p_min_t.at(t);
  const double hi = dera.p_max_t.at(t);
  const double tol = 1e-7 * std::max(1.0, std::abs(hi));
  if (!(instruction >= lo - tol && instruction <= hi + tol)) throw std::invalid_argument("infeasible instruction");
  instruction = std::clamp(instruction, lo, hi);

  lp::LpModel m;
  std::vector<int> vars;
  std::vector<Term> sum;
  for (const auto& e : dera.tders) {
    const std::string name = "e" + std::to_string(e.id);
    const int p = m.add_variable("P_" + name, e.p_min_t.at(t), e.p_max_t.at(t));
    lp::add_epigraph_cost(m, e.cost_curve_t.at(t), p, name);
    vars.push_back(p);
    sum.push_back({p, 1.0});
  }
  m.add_constraint("instruction", sum, Sense::kEqual, instruction);
  const auto sol = lp::solve(m);
  if (sol.status != lp::Status::kOptimal) throw std::invalid_argument("infeasible instruction");

  SelfDispatchResult r;
  for (std::size_t e = 0; e < vars.size(); ++e)
    r.p_tder.push_back(std::clamp(sol.primal[static_cast<std::size_t>(vars[e])], dera.tders[e].p_min_t.at(t),
                                  dera.tders[e].p_max_t.at(t)));
  // Push the LP's rounding residual onto members with room so that the
  // aggregate matches the instruction exactly.
  double residual = instruction - std::accumulate(r.p_tder.begin(), r.p_tder.end(), 0.0);
  for (std::size_t e = 0; e < r.p_tder.size() && std::abs(residual) > 0.0; ++e) {
    const double room = residual > 0 ? dera.tders[e].p_max_t.at(t) - r.p_tder[e] : r.p_tder[e] - dera.tders[e].p_min_t.at(t);
    const double move = std::min(room, std::abs(residual));
    if (move <= 0.0) continue;
    r.p_tder[e] += residual > 0 ? move : -move;
    residual = instruction - std::accumulate(r.p_tder.begin(), r.p_tder.end(), 0.0);
  }
  for (std::size_t e = 0; e < r.p_tder.size(); ++e) r.cost += dera.tders[e].cost_curve_t.at(t).cost(r.p_tder[e]);
  r.realized_df = instruction > 1e-9 ? normalized_split(r.p_tder)
                                     : std::vector<double>(r.p_tder.size(), 1.0 / static_cast<double>(r.p_tder.size()));
  return r;
}

}  // namespace rted
