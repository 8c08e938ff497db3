#include "rted/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rted/dispatch.hpp"
#include "rted/icci.hpp"
#include "rted/sensitivity.hpp"

namespace rted {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string& p, const std::string& base_dir) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "rted-scenario") throw std::invalid_argument("not an rted-scenario document");
  if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported scenario version");
  ScenarioConfig c;
  if (!j.contains("case")) throw std::invalid_argument("scenario lacks a case path");
  c.case_path = resolve(j.at("case").get<std::string>(), base_dir);
  read_opt(j, "interval_minutes", c.interval_minutes);
  if (j.contains("profile")) {
    const auto& p = j.at("profile");
    if (p.contains("csv")) c.profile_csv = resolve(p.at("csv").get<std::string>(), base_dir);
    read_opt(p, "synthetic_days", c.synthetic_days);
    read_opt(p, "seed", c.profile_seed);
    read_opt(p, "scale", c.load_scale);
  }
  if (j.contains("deras")) {
    const auto& d = j.at("deras");
    if (d.is_null()) {
      c.with_deras = false;
    } else {
      read_opt(d, "fraction", c.deras.fraction);
      read_opt(d, "group_size", c.deras.group_size);
      read_opt(d, "threshold_mw", c.deras.threshold_mw);
      read_opt(d, "seed", c.deras.seed);
    }
  }
  if (j.contains("bids")) {
    const auto& b = j.at("bids");
    read_opt(b, "level_factors", c.bids.level_factors);
    read_opt(b, "random_lo", c.bids.random_lo);
    read_opt(b, "random_hi", c.bids.random_hi);
    read_opt(b, "load_factor_min", c.bids.load_factor_min);
    read_opt(b, "load_factor_max", c.bids.load_factor_max);
    read_opt(b, "member_mix", c.bids.member_mix);
    read_opt(b, "seed", c.bids.seed);
  }
  read_opt(j, "vulnerable_lines", c.vulnerable_lines);
  read_opt(j, "ramp_fraction", c.ramp_fraction);
  if (c.load_scale <= 0.0) throw std::invalid_argument("profile scale must be positive");
  if (c.vulnerable_lines < 0) throw std::invalid_argument("vulnerable_lines must be non-negative");
  return c;
}

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), fs::path(path).parent_path().string());
}

Scenario::Scenario(SystemCase sc, LoadProfile profile, std::vector<int> vulnerable)
    : sc_(std::make_unique<SystemCase>(std::move(sc))),
      profile_(std::move(profile)),
      vulnerable_(std::move(vulnerable)) {
  sec_ = std::make_unique<SecurityModel>(*sc_, compute_lodf(compute_isf(*sc_), *sc_, vulnerable_));
}

BaseLmp hourly_base_lmp(const SystemCase& sc, const SecurityModel& sec, const LoadProfile& profile, double floor) {
  const std::size_t horizon = std::max<std::size_t>(profile.horizon(), 1);
  const auto per_hour = static_cast<std::size_t>(std::max(1.0, std::round(60.0 / profile.interval_minutes)));
  BaseLmp out(static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(sc.buses.size()));
  std::vector<ConstraintRef> working;
  for (std::size_t t0 = 0; t0 < horizon; t0 += per_hour) {
    const std::size_t t1 = std::min(horizon, t0 + per_hour);
    IntervalInput in;
    in.t = t0;
    in.demand.assign(sc.buses.size(), 0.0);
    for (std::size_t t = t0; t < t1; ++t) {
      const auto d = nodal_demand(sc, profile, t);
      for (std::size_t i = 0; i < d.size(); ++i) in.demand[i] += d[i] / static_cast<double>(t1 - t0);
    }
    auto solve = [&](bool soft) {
      DispatchOptions opt;
      opt.soft = soft;
      return icci_loop([&](const std::vector<ConstraintRef>& set) { return build_full_model(sc, sec, in, set, opt); },
                       sec, working);
    };
    auto r = solve(false);
    if (r.solution.status != lp::Status::kOptimal) {
      spdlog::warn("base LMP hour starting at interval {} infeasible; using penalized slack", t0);
      r = solve(true);
      if (r.solution.status != lp::Status::kOptimal) throw std::runtime_error("base LMP dispatch has no solution");
    }
    for (const auto& c : r.added)
      if (std::find(working.begin(), working.end(), c) == working.end()) working.push_back(c);
    for (std::size_t t = t0; t < t1; ++t)
      for (std::size_t i = 0; i < sc.buses.size(); ++i)
        out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = std::max(floor, r.solution.lmp[i]);
  }
  return out;
}

Scenario build_scenario(const ScenarioConfig& cfg) {
  CaseParseOptions po;
  po.interval_minutes = cfg.interval_minutes;
  if (cfg.ramp_fraction > 0.0) po.default_ramp_fraction = cfg.ramp_fraction;
  SystemCase base = load_case_file(cfg.case_path, po);

  LoadProfile profile;
  ProfileOptions pro;
  pro.interval_minutes = cfg.interval_minutes;
  if (!cfg.profile_csv.empty()) {
    profile = load_profile_file(cfg.profile_csv, base, pro);
  } else {
    auto curve = synthetic_load_curve(cfg.synthetic_days, cfg.interval_minutes, cfg.profile_seed);
    for (auto& v : curve) v *= cfg.load_scale;
    profile = profile_from_curve(base, curve, cfg.interval_minutes);
  }

  const auto vulnerable = select_vulnerable(base, static_cast<std::size_t>(cfg.vulnerable_lines));
  BaseLmp lmp;
  {
    SecurityModel sec(base, compute_lodf(compute_isf(base), base, vulnerable));
    lmp = hourly_base_lmp(base, sec, profile);
  }
  SystemCase sc = cfg.with_deras ? build_deras(base, cfg.deras) : base;
  sc = generate_bids(std::move(sc), profile, lmp, cfg.bids);
  sc.validate();
  return Scenario(std::move(sc), std::move(profile), vulnerable);
}

std::vector<double> rate_lines(const Scenario& s, const RatingOptions& opt) {
  SystemCase open = s.system();
  for (auto& l : open.lines) {
    l.flow_max = std::numeric_limits<double>::infinity();
    l.flow_min = -std::numeric_limits<double>::infinity();
  }
  const std::size_t nl = open.lines.size();
  SecurityModel free_sec(open, compute_isf(open));
  const std::size_t horizon = std::max<std::size_t>(s.profile().horizon(), 1);
  const std::size_t step = std::max<std::size_t>(opt.sample_every, 1);
  std::vector<Eigen::VectorXd> samples;
  for (std::size_t t = 0; t < horizon; t += step) {
    IntervalInput in{t, nodal_demand(open, s.profile(), t), {}, 1.0};
    const auto sol = solve_dispatch(build_full_model(open, free_sec, in, {}), free_sec);
    if (sol.status != lp::Status::kOptimal)
      throw std::runtime_error("unconstrained dispatch failed at interval " + std::to_string(t));
    samples.push_back(Eigen::Map<const Eigen::VectorXd>(sol.p_line.data(), static_cast<Eigen::Index>(nl)));
    if (opt.include_uniform_df && !open.deras.empty()) {
      const auto df = solve_dispatch(build_rted(open, free_sec, DfVector::uniform(open), in, {}), free_sec);
      if (df.status == lp::Status::kOptimal)
        samples.push_back(Eigen::Map<const Eigen::VectorXd>(df.p_line.data(), static_cast<Eigen::Index>(nl)));
    }
  }

  std::vector<double> peak(nl, 0.0);
  for (const auto& f : samples)
    for (std::size_t l = 0; l < nl; ++l) peak[l] = std::max(peak[l], std::abs(f(static_cast<Eigen::Index>(l))));
  const auto bridges = find_bridges(open);
  std::vector<std::size_t> order(nl);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return peak[a] > peak[b]; });
  std::vector<int> vulnerable;
  std::vector<bool> is_vulnerable(nl, false);
  for (auto pos : order)
    if (!bridges[pos] && static_cast<int>(vulnerable.size()) < opt.vulnerable_lines) {
      vulnerable.push_back(open.lines[pos].id);
      is_vulnerable[pos] = true;
    }
  const auto sens = compute_lodf(compute_isf(open), open, vulnerable);

  std::vector<double> rating(nl, 0.0);
  for (const auto& f : samples)
    for (std::size_t l = 0; l < nl; ++l) {
      double worst = std::abs(f(static_cast<Eigen::Index>(l)));
      for (std::size_t m = 0; m < sens.vulnerable_index.size(); ++m)
        if (sens.vulnerable_index[m] != l) worst = std::max(worst, std::abs(post_contingency_flow(sens, f, l, m)));
      rating[l] = std::max(rating[l], worst);
    }
  for (auto& r : rating) r = std::max(opt.floor_mw, opt.margin * r);
  const double top = *std::max_element(rating.begin(), rating.end());
  for (std::size_t m = 0; m < sens.vulnerable_index.size(); ++m)
    rating[sens.vulnerable_index[m]] = top * (1.0 + 0.01 * static_cast<double>(sens.vulnerable_index.size() - m));

  int cut = 0;
  for (auto pos : order) {
    if (cut == opt.tight_lines) break;
    if (is_vulnerable[pos]) continue;
    std::vector<double> mags;
    for (const auto& f : samples) mags.push_back(std::abs(f(static_cast<Eigen::Index>(pos))));
    std::sort(mags.begin(), mags.end());
    const auto q = static_cast<std::size_t>(std::floor(opt.tight_quantile * static_cast<double>(mags.size() - 1)));
    rating[pos] = std::max(opt.floor_mw, mags[q]);
    ++cut;
  }
  return rating;
}

}  // namespace rted
