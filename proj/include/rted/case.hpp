#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rted/bid_curve.hpp"

namespace rted {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-interval series; a single entry means constant over the horizon.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(double constant) : values_{constant} {}  // NOLINT(implicit)
  explicit TimeSeries(std::vector<double> values) : values_(std::move(values)) {}

  double at(std::size_t t) const {
    if (values_.empty()) return 0.0;
    return values_[t < values_.size() ? t : values_.size() - 1];
  }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

 private:
  std::vector<double> values_;
};

// Curves indexed by interval; falls back to the last entry past the end.
class CurveSeries {
 public:
  const BidCurve& at(std::size_t t) const {
    if (curves_.empty()) throw std::out_of_range("no bid curve available");
    return curves_[t < curves_.size() ? t : curves_.size() - 1];
  }
  bool empty() const { return curves_.empty(); }
  std::size_t size() const { return curves_.size(); }
  void assign(std::vector<BidCurve> curves) { curves_ = std::move(curves); }
  void set_constant(BidCurve c) { curves_.assign(1, std::move(c)); }
  const std::vector<BidCurve>& curves() const { return curves_; }

 private:
  std::vector<BidCurve> curves_;
};

struct Bus {
  int id = 0;
  bool is_reference = false;
};

struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double reactance_pu = 0.0;
  double susceptance_pu = 0.0;
  double flow_max = std::numeric_limits<double>::infinity();
  double flow_min = -std::numeric_limits<double>::infinity();

  bool limited() const { return std::isfinite(flow_max) && std::isfinite(flow_min); }
};

struct Generator {
  int id = 0;
  int bus_id = 0;
  TimeSeries p_min_t;
  TimeSeries p_max_t;
  double ramp_up = std::numeric_limits<double>::infinity();
  double ramp_down = std::numeric_limits<double>::infinity();
  CurveSeries bid_curve_t;
  double p_prev = 0.0;
};

struct Load {
  int bus_id = 0;
  double base_mw = 0.0;
};

struct TDer {
  int id = 0;
  int bus_id = 0;
  TimeSeries p_min_t;
  TimeSeries p_max_t;
  CurveSeries cost_curve_t;
};

struct Dera {
  int id = 0;
  std::vector<TDer> tders;
  TimeSeries p_min_t;
  TimeSeries p_max_t;
  CurveSeries bid_curve_t;
};

struct SystemCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Dera> deras;

  // Rebuilds the id -> index lookup; call after editing buses.
  void index_buses();
  std::size_t bus_index(int bus_id) const;
  bool has_bus(int bus_id) const { return bus_pos_.count(bus_id) != 0; }
  std::size_t reference_index() const;
  int reference_bus() const { return buses.at(reference_index()).id; }
  std::size_t num_tders() const;

  // Enforces the structural invariants; throws ValidationError.
  void validate() const;

 private:
  std::unordered_map<int, std::size_t> bus_pos_;
};

// Demand per (interval, bus index) in MW.
struct LoadProfile {
  std::vector<std::vector<double>> demand;  // [interval][bus index]
  double interval_minutes = 5.0;

  std::size_t horizon() const { return demand.size(); }
  double system_load(std::size_t t) const;
};

// Nodal demand vector at interval t; falls back to base loads for t past the profile.
std::vector<double> nodal_demand(const SystemCase& sc, const LoadProfile& profile, std::size_t t);
std::vector<double> base_nodal_demand(const SystemCase& sc);

}  // namespace rted
