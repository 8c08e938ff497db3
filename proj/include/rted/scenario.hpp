#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rted/case.hpp"
#include "rted/case_io.hpp"
#include "rted/security.hpp"

namespace rted {

// Recipe for a rolling-run world, read from JSON. Relative paths resolve
// against the directory of the JSON file.
struct ScenarioConfig {
  std::string case_path;
  double interval_minutes = 5.0;
  std::string profile_csv;     // empty selects the synthetic curve
  int synthetic_days = 8;
  std::uint64_t profile_seed = 7;
  double load_scale = 1.0;     // multiplies the synthetic curve
  bool with_deras = true;
  DeraOptions deras;
  BidOptions bids;
  int vulnerable_lines = 5;
  double ramp_fraction = 0.0;  // per-interval ramp as a fraction of p_max when the case has none; 0 = unlimited

  static ScenarioConfig from_json(const std::string& text, const std::string& base_dir = ".");
  static ScenarioConfig from_file(const std::string& path);
};

// Case with DERAs and bids, its load profile and security model. The
// security model points into the case, which is heap-held so that the
// scenario can be moved.
class Scenario {
 public:
  Scenario(SystemCase sc, LoadProfile profile, std::vector<int> vulnerable);

  const SystemCase& system() const { return *sc_; }
  const LoadProfile& profile() const { return profile_; }
  const SecurityModel& security() const { return *sec_; }
  const std::vector<int>& vulnerable() const { return vulnerable_; }

 private:
  std::unique_ptr<SystemCase> sc_;
  LoadProfile profile_;
  std::vector<int> vulnerable_;
  std::unique_ptr<SecurityModel> sec_;
};

Scenario build_scenario(const ScenarioConfig& cfg);

// Base LMPs per interval from an hourly, generator-only dispatch of the case
// with all security constraints; prices below `floor` are raised to it.
BaseLmp hourly_base_lmp(const SystemCase& sc, const SecurityModel& sec, const LoadProfile& profile,
                        double floor = 1.0);

struct RatingOptions {
  double margin = 1.8;        // headroom over the worst sampled pre/post flow
  double floor_mw = 20.0;
  int tight_lines = 4;        // lines rated at a flow quantile so that they bind
  double tight_quantile = 0.7;
  int vulnerable_lines = 5;
  std::size_t sample_every = 6;  // profile intervals between sampled dispatches
  bool include_uniform_df = true;  // also sample the aggregated model with uniform DFs
};

// Ratings from unconstrained full-model dispatches of the scenario sampled
// over its profile, plus the aggregated model under uniform DFs unless
// disabled. Every line gets margin times its worst flow, pre- or
// post-contingency. The vulnerable_lines most loaded non-bridge lines get
// the largest ratings so that selection by rating picks them. The
// tight_lines next most loaded lines are cut to the tight_quantile of their
// sampled flow magnitude. The scenario's own ratings are ignored.
std::vector<double> rate_lines(const Scenario& s, const RatingOptions& opt);

}  // namespace rted
