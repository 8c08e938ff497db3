#pragma once

#include <span>
#include <vector>

namespace rted {

// One affine piece of a max-affine cost curve, valid on [q_lo, q_hi] MW.
struct BidSegment {
  double kappa = 0.0;  // $/MWh
  double beta = 0.0;   // $
  double q_lo = 0.0;
  double q_hi = 0.0;
};

// Convex piecewise-linear cost curve evaluated as max_s(kappa_s * p + beta_s).
class BidCurve {
 public:
  BidCurve() = default;
  // Throws std::invalid_argument when the segments are not a convex,
  // gap-free, continuous partition.
  explicit BidCurve(std::vector<BidSegment> segments);

  // Splits [p_min, p_max] evenly into kappa.size() segments and picks the
  // intercepts so that the curve is continuous and cost(p_min) == cost_at_min.
  static BidCurve from_prices(std::span<const double> kappa, double p_min,
                              double p_max, double cost_at_min = 0.0);

  // Segment s spans widths[s] MW starting from p_min; otherwise as above.
  static BidCurve from_widths(std::span<const double> kappa, double p_min,
                              std::span<const double> widths, double cost_at_min = 0.0);

  double cost(double p) const;
  // Slope of the segment containing p (right derivative at breakpoints).
  double marginal(double p) const;

  const std::vector<BidSegment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }
  std::size_t size() const { return segments_.size(); }
  double p_min() const { return segments_.empty() ? 0.0 : segments_.front().q_lo; }
  double p_max() const { return segments_.empty() ? 0.0 : segments_.back().q_hi; }

  // C'(p) = share * C(p / share): quantities and intercepts scale, prices stay.
  BidCurve scaled(double share) const;

  void validate() const;

 private:
  std::vector<BidSegment> segments_;
};

}  // namespace rted
