#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "rted/case_io.hpp"
#include "rted/harness.hpp"
#include "rted/scenario.hpp"
#include "rted/sensitivity.hpp"
#include "rted/stgcn.hpp"

using namespace rted;
namespace fs = std::filesystem;

namespace {

constexpr int kExitSoft = 3;

struct RunArgs {
  std::string scenario;
  std::size_t start = 0;
  std::size_t horizon = 0;
  std::string strategy = "const";
  std::vector<std::string> strategies;
  int knn_k = 5;
  std::string stgcn_model;
  int warmup = -1;
  int k = 5;
  double tol = 1e-6;
  int max_iter = 50;
  bool no_icci = false;
  int da_hours = 24;
  double penalty = 5000.0;
  bool no_accuracy = false;
  bool no_timings = false;
  std::string out_dir = "out";
  std::string dump_lp;
};

void add_run_options(CLI::App* app, RunArgs& a, bool multi) {
  app->add_option("--scenario", a.scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  app->add_option("--start", a.start, "first profile interval");
  app->add_option("--horizon", a.horizon, "intervals to simulate (default: rest of the profile)");
  if (multi)
    app->add_option("--strategies", a.strategies, "DF strategies")->delimiter(',')->required();
  else
    app->add_option("--df-strategy", a.strategy, "const, mer, knn, stgcn or oracle");
  app->add_option("--knn-k", a.knn_k, "neighbours for knn");
  app->add_option("--stgcn-model", a.stgcn_model, "ST-GCN weight manifest");
  app->add_option("--warmup", a.warmup, "CONST intervals before predicting (-1: model window)");
  app->add_option("--k", a.k, "ICCI lines added per iteration");
  app->add_option("--icci-tol", a.tol, "ICCI violation tolerance, MW");
  app->add_option("--icci-max-iter", a.max_iter, "ICCI iteration cap");
  app->add_flag("--no-icci", a.no_icci, "solve with every candidate constraint");
  app->add_option("--day-ahead-hours", a.da_hours, "hours in the day-ahead baseline (0 disables)");
  app->add_option("--penalty", a.penalty, "violation penalty, $/MW");
  app->add_flag("--no-accuracy", a.no_accuracy, "skip the oracle solve used for DF accuracy");
  app->add_flag("--no-timings", a.no_timings, "record zero times for byte-stable output");
  app->add_option("--out", a.out_dir, "output directory");
  app->add_option("--dump-lp", a.dump_lp, "write the first interval's relaxed LP to this file");
}

RunConfig make_config(const RunArgs& a, const Scenario& s) {
  RunConfig c;
  c.start = a.start;
  c.horizon = a.horizon > 0 ? a.horizon : s.profile().horizon() - std::min(a.start, s.profile().horizon());
  c.strategy = parse_strategy(a.strategy);
  c.knn_k = a.knn_k;
  c.stgcn_model = a.stgcn_model;
  c.warmup = a.warmup;
  c.icci.k = a.k;
  c.icci.tol = a.tol;
  c.icci.max_iter = a.max_iter;
  c.use_icci = !a.no_icci;
  c.day_ahead_hours = a.da_hours;
  c.penalty_price = a.penalty;
  c.compute_accuracy = !a.no_accuracy;
  c.record_timings = !a.no_timings;
  return c;
}

void dump_first_lp(const Scenario& s, const RunConfig& c, const std::string& path) {
  const auto& sc = s.system();
  IntervalInput in{c.start, nodal_demand(sc, s.profile(), c.start), {}, 1.0};
  const auto model = c.strategy == Strategy::kOracle
                         ? build_full_model(sc, s.security(), in, {})
                         : build_rted(sc, s.security(), DfVector::uniform(sc), in, {});
  std::ofstream out(path);
  model.lp.write_text(out);
  spdlog::info("wrote {}", path);
}

int finish(const std::vector<RunResult>& runs, const std::string& dir) {
  write_outputs(dir, runs);
  std::cout << format_summary(runs);
  std::size_t soft = 0;
  for (const auto& r : runs) soft += r.summary.soft_intervals;
  if (soft > 0) {
    spdlog::warn("{} interval(s) needed penalized slack", soft);
    return kExitSoft;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rolling real-time economic dispatch with distribution-factor aggregators"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "rolling run of one DF strategy");
  add_run_options(run, run_args, false);

  RunArgs cmp_args;
  auto* cmp = app.add_subcommand("compare", "rolling runs of several strategies on identical inputs");
  add_run_options(cmp, cmp_args, true);

  std::string da_scenario, da_out = "crucial_set.json";
  std::size_t da_start = 0;
  int da_hours = 24, da_k = 5, da_max_iter = 50;
  double da_tol = 1e-6;
  auto* da = app.add_subcommand("day-ahead", "day-ahead crucial constraint baseline");
  da->add_option("--scenario", da_scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  da->add_option("--start", da_start, "first interval");
  da->add_option("--hours", da_hours, "hourly steps");
  da->add_option("--k", da_k, "ICCI lines added per iteration");
  da->add_option("--icci-tol", da_tol, "ICCI violation tolerance, MW");
  da->add_option("--icci-max-iter", da_max_iter, "ICCI iteration cap");
  da->add_option("--out", da_out, "crucial set file");

  std::string ptdf_case, ptdf_out;
  auto* ptdf = app.add_subcommand("dump-ptdf", "write the injection shift factors as CSV");
  ptdf->add_option("--case", ptdf_case, "MATPOWER case")->required()->check(CLI::ExistingFile);
  ptdf->add_option("--out", ptdf_out, "CSV file (default: stdout)");

  std::string em_model, em_fixture;
  auto* em = app.add_subcommand("eval-model", "forward pass of a weight file on a window fixture");
  em->add_option("--model", em_model, "weight manifest (default: the fixture's model)");
  em->add_option("--fixture", em_fixture, "window fixture JSON")->required()->check(CLI::ExistingFile);

  std::string im_scenario, im_out;
  std::uint64_t im_seed = 1;
  double im_scale = 0.1;
  auto* im = app.add_subcommand("init-model", "write an untrained ST-GCN sized for a scenario");
  im->add_option("--scenario", im_scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  im->add_option("--out", im_out, "weight manifest path")->required();
  im->add_option("--seed", im_seed, "weight seed");
  im->add_option("--scale", im_scale, "uniform weight range");

  std::string rl_scenario, rl_case, rl_out;
  RatingOptions rl;
  auto* rate = app.add_subcommand("rate-lines", "give a case line ratings from sampled scenario dispatches");
  rate->add_option("--scenario", rl_scenario, "scenario JSON supplying DERAs, bids and profile")
      ->required()
      ->check(CLI::ExistingFile);
  rate->add_option("--case", rl_case, "MATPOWER case to rate (default: the scenario's)")->check(CLI::ExistingFile);
  rate->add_option("--out", rl_out, "output case")->required();
  rate->add_option("--margin", rl.margin, "headroom over the worst flow");
  rate->add_option("--floor", rl.floor_mw, "minimum rating, MW");
  rate->add_option("--tight-lines", rl.tight_lines, "lines rated at a flow quantile");
  rate->add_option("--tight-quantile", rl.tight_quantile, "flow quantile used for tight lines");
  rate->add_option("--vulnerable", rl.vulnerable_lines, "lines given the largest ratings");
  rate->add_option("--sample-every", rl.sample_every, "intervals between sampled dispatches");
  bool rl_full_only = false;
  rate->add_flag("--full-model-only", rl_full_only, "sample only the full model, not uniform DFs");

  int sp_days = 8;
  std::uint64_t sp_seed = 7;
  double sp_minutes = 5.0;
  std::string sp_out;
  auto* sp = app.add_subcommand("synth-profile", "write the synthetic load multiplier curve as CSV");
  sp->add_option("--days", sp_days, "days");
  sp->add_option("--seed", sp_seed, "noise seed");
  sp->add_option("--interval-minutes", sp_minutes, "interval length");
  sp->add_option("--out", sp_out, "CSV file")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run || *cmp) {
      const auto& a = *run ? run_args : cmp_args;
      const auto scenario = build_scenario(ScenarioConfig::from_file(a.scenario));
      auto cfg = make_config(a, scenario);
      if (!a.dump_lp.empty()) dump_first_lp(scenario, cfg, a.dump_lp);
      if (*run) return finish({run_rolling(scenario, cfg)}, a.out_dir);
      std::vector<Strategy> list;
      for (const auto& s : a.strategies) list.push_back(parse_strategy(s));
      return finish(compare_strategies(scenario, cfg, list), a.out_dir);
    }
    if (*da) {
      const auto scenario = build_scenario(ScenarioConfig::from_file(da_scenario));
      IcciOptions opt{da_k, da_tol, da_max_iter};
      const auto r = day_ahead_baseline(scenario.system(), scenario.security(), scenario.profile(), da_start, da_hours,
                                        opt);
      save_crucial_set(r.constraints, da_out);
      std::cout << r.constraints.size() << " crucial bounds of " << 2 * scenario.security().num_candidate_lines()
                << " candidates; wrote " << da_out << "\n";
      return r.soft_hours > 0 ? kExitSoft : 0;
    }
    if (*ptdf) {
      const auto sc = load_case_file(ptdf_case);
      const auto sens = compute_isf(sc);
      if (ptdf_out.empty()) {
        write_isf_csv(sens, sc, std::cout);
      } else {
        std::ofstream out(ptdf_out);
        write_isf_csv(sens, sc, out);
      }
      return 0;
    }
    if (*em) {
      const auto fx = stgcn::load_parity_fixture(em_fixture);
      const auto model = stgcn::load_model(em_model.empty() ? fx.model_path : em_model);
      const auto out = stgcn::forward(model, fx.window);
      double diff = 0.0;
      const bool has_expected = !fx.expected.empty();
      if (has_expected && fx.expected.size() != static_cast<std::size_t>(out.size()))
        throw std::runtime_error("fixture expects " + std::to_string(fx.expected.size()) + " outputs, model gives " +
                                 std::to_string(out.size()));
      for (Eigen::Index k = 0; k < out.size(); ++k) {
        std::cout << out(k) << "\n";
        if (has_expected) diff = std::max(diff, std::abs(out(k) - fx.expected[static_cast<std::size_t>(k)]));
      }
      if (has_expected) {
        std::cout << "max abs difference " << diff << " (tolerance " << fx.tolerance << ")\n";
        return diff <= fx.tolerance ? 0 : 1;
      }
      return 0;
    }
    if (*im) {
      const auto scenario = build_scenario(ScenarioConfig::from_file(im_scenario));
      auto model = stgcn::random_model(stgcn::hyperparameters_for(scenario.system()), im_seed, im_scale);
      model.norm = stgcn::fit_normalization(scenario.system(), model.hyper, scenario.profile());
      stgcn::save_model(model, im_out);
      std::cout << "wrote " << im_out << "\n";
      return 0;
    }
    if (*rate) {
      auto cfg = ScenarioConfig::from_file(rl_scenario);
      if (!rl_case.empty()) cfg.case_path = rl_case;
      const auto scenario = build_scenario(cfg);
      rl.include_uniform_df = !rl_full_only;
      const auto r = rate_lines(scenario, rl);
      auto sc = load_case_file(cfg.case_path);
      for (std::size_t l = 0; l < sc.lines.size(); ++l) {
        sc.lines[l].flow_max = r[l];
        sc.lines[l].flow_min = -r[l];
      }
      std::ofstream(rl_out) << serialize_case(sc);
      std::cout << "wrote " << rl_out << "\n";
      return 0;
    }
    if (*sp) {
      std::ofstream(sp_out) << curve_to_csv(synthetic_load_curve(sp_days, sp_minutes, sp_seed));
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
