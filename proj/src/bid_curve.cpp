#include "rted/bid_curve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rted {

BidCurve::BidCurve(std::vector<BidSegment> segments)
    : segments_(std::move(segments)) {
  validate();
}

BidCurve BidCurve::from_prices(std::span<const double> kappa, double p_min,
                               double p_max, double cost_at_min) {
  if (kappa.empty()) throw std::invalid_argument("bid curve needs at least one price");
  if (p_max < p_min) throw std::invalid_argument("bid curve range has p_max < p_min");
  const auto n = kappa.size();
  const double width = (p_max - p_min) / static_cast<double>(n);
  std::vector<BidSegment> segs(n);
  double lo = p_min;
  double value_at_lo = cost_at_min;
  for (std::size_t s = 0; s < n; ++s) {
    const double hi = (s + 1 == n) ? p_max : p_min + width * static_cast<double>(s + 1);
    segs[s].kappa = kappa[s];
    segs[s].beta = value_at_lo - kappa[s] * lo;
    segs[s].q_lo = lo;
    segs[s].q_hi = hi;
    value_at_lo = kappa[s] * hi + segs[s].beta;
    lo = hi;
  }
  return BidCurve(std::move(segs));
}

BidCurve BidCurve::from_widths(std::span<const double> kappa, double p_min,
                               std::span<const double> widths, double cost_at_min) {
  if (kappa.empty()) throw std::invalid_argument("bid curve needs at least one price");
  if (widths.size() != kappa.size()) throw std::invalid_argument("one width per price expected");
  std::vector<BidSegment> segs(kappa.size());
  double lo = p_min;
  double value_at_lo = cost_at_min;
  for (std::size_t s = 0; s < kappa.size(); ++s) {
    if (!(widths[s] >= 0.0)) throw std::invalid_argument("bid segment width must be non-negative");
    segs[s] = {kappa[s], value_at_lo - kappa[s] * lo, lo, lo + widths[s]};
    value_at_lo = kappa[s] * segs[s].q_hi + segs[s].beta;
    lo = segs[s].q_hi;
  }
  return BidCurve(std::move(segs));
}

double BidCurve::cost(double p) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& s : segments_) best = std::max(best, s.kappa * p + s.beta);
  return segments_.empty() ? 0.0 : best;
}

double BidCurve::marginal(double p) const {
  if (segments_.empty()) return 0.0;
  for (const auto& s : segments_)
    if (p < s.q_hi) return s.kappa;
  return segments_.back().kappa;
}

BidCurve BidCurve::scaled(double share) const {
  if (!(share > 0.0)) throw std::invalid_argument("bid curve share must be positive");
  std::vector<BidSegment> segs = segments_;
  for (auto& s : segs) {
    s.beta *= share;
    s.q_lo *= share;
    s.q_hi *= share;
  }
  return BidCurve(std::move(segs));
}

void BidCurve::validate() const {
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const auto& seg = segments_[s];
    if (!std::isfinite(seg.kappa) || !std::isfinite(seg.beta) ||
        !std::isfinite(seg.q_lo) || !std::isfinite(seg.q_hi))
      throw std::invalid_argument("bid curve has non-finite coefficients");
    if (seg.q_hi < seg.q_lo)
      throw std::invalid_argument("bid segment " + std::to_string(s) + " has q_hi < q_lo");
    if (s == 0) continue;
    const auto& prev = segments_[s - 1];
    if (!(seg.kappa > prev.kappa))
      throw std::invalid_argument("bid curve is not convex: kappa must strictly increase");
    const double scale = std::max(1.0, std::abs(prev.q_hi));
    if (std::abs(seg.q_lo - prev.q_hi) > 1e-9 * scale)
      throw std::invalid_argument("bid curve quantity ranges leave a gap");
    const double b = prev.q_hi;
    const double left = prev.kappa * b + prev.beta;
    const double right = seg.kappa * b + seg.beta;
    if (std::abs(left - right) > 1e-9 * std::max(1.0, std::abs(left)))
      throw std::invalid_argument("bid curve is discontinuous at a breakpoint");
  }
}

}  // namespace rted
