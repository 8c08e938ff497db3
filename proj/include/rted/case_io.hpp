#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rted/case.hpp"

namespace rted {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct CaseParseOptions {
  // Ramp limit per interval as a fraction of p_max when the case carries no
  // ramp_10 data; infinity leaves such units unconstrained.
  double default_ramp_fraction = std::numeric_limits<double>::infinity();
  double interval_minutes = 5.0;
  // Number of segments used when sampling polynomial gencost rows.
  int cost_segments = 5;
};

// Parses the MATPOWER subset: mpc.baseMVA, mpc.bus, mpc.gen, mpc.branch,
// mpc.gencost. Out-of-service units and branches are dropped.
SystemCase parse_case(std::string_view text, const CaseParseOptions& options = {});
SystemCase load_case_file(const std::string& path, const CaseParseOptions& options = {});

// Writes the network, loads and generator base curves back as MATPOWER text.
// DERAs are not part of the format and are omitted.
std::string serialize_case(const SystemCase& sc, double interval_minutes = 5.0);

struct DeraOptions {
  double fraction = 0.5;
  int group_size = 10;
  double threshold_mw = 0.0;
  std::uint64_t seed = 1;
};

// Places one T-DER at every load bus above the threshold and groups them
// randomly into DERAs of group_size members.
SystemCase build_deras(SystemCase sc, const DeraOptions& options);

struct BidOptions {
  std::vector<double> level_factors{0.85, 0.94, 1.02, 1.11, 1.20};
  double random_lo = 0.85;
  double random_hi = 1.15;
  double load_factor_min = 0.5;
  double load_factor_max = 2.0;
  // Zero makes member curves capacity-share scalings of the DERA bid. A
  // value in (0, 1) hands each member a random share of every DERA segment
  // (relative spread of the shares); prices stay those of the DERA, so the
  // cheapest split of an instruction still costs exactly the DERA bid.
  double member_mix = 0.0;
  std::uint64_t seed = 1;
};

// Base LMP per (interval, bus index); a single row applies to every interval.
using BaseLmp = Eigen::MatrixXd;

// Time-varying bids: kappa = base_lmp * level * U[lo, hi] * load factor.
SystemCase generate_bids(SystemCase sc, const LoadProfile& profile, const BaseLmp& base_lmp,
                         const BidOptions& options);

// Load-profile time scaling used by generate_bids.
double load_level_factor(const LoadProfile& profile, std::size_t t, const BidOptions& options);

struct ProfileOptions {
  double interval_minutes = 5.0;
};

// CSV with header "interval,bus_id,mw". A bus_id of "*" gives the system-wide
// multiplier applied to base loads of buses without explicit rows.
LoadProfile load_profile(std::string_view csv, const SystemCase& sc,
                         const ProfileOptions& options = {});
LoadProfile load_profile_file(const std::string& path, const SystemCase& sc,
                              const ProfileOptions& options = {});

// Smooth two-peak daily curve with weekday/weekend variation and noise,
// normalized to mean 1.
std::vector<double> synthetic_load_curve(int days, double interval_minutes, std::uint64_t seed);
LoadProfile profile_from_curve(const SystemCase& sc, const std::vector<double>& curve,
                               double interval_minutes = 5.0);
std::string curve_to_csv(const std::vector<double>& curve);

// Deterministic generator shared by all randomized construction.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  double uniform(double lo, double hi);
  std::size_t below(std::size_t n);
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rted
