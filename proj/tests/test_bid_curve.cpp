#include <doctest.h>

#include <stdexcept>

#include "rted/bid_curve.hpp"

using rted::BidCurve;
using rted::BidSegment;

TEST_CASE("from_prices splits evenly and is continuous") {
  const double k[] = {10, 12, 15};
  const auto c = BidCurve::from_prices(k, 0, 30, 0);
  CHECK(c.size() == 3);
  CHECK(c.cost(0) == doctest::Approx(0));
  CHECK(c.cost(10) == doctest::Approx(100));
  CHECK(c.cost(20) == doctest::Approx(220));
  CHECK(c.cost(30) == doctest::Approx(370));
  CHECK(c.marginal(10) == 12);
  CHECK(c.marginal(5) == 10);
}

TEST_CASE("max-affine evaluation by hand") {
  // (10, 0) and (20, -50): breakpoint at 5 MW.
  BidCurve c({{10, 0, 0, 5}, {20, -50, 5, 10}});
  CHECK(c.cost(7) == doctest::Approx(90));
  CHECK(c.cost(5) == doctest::Approx(50));
}

TEST_CASE("invalid curves are rejected") {
  CHECK_THROWS_AS(BidCurve({{20, 0, 0, 5}, {10, 50, 5, 10}}), std::invalid_argument);   // non-convex
  CHECK_THROWS_AS(BidCurve({{10, 0, 0, 5}, {20, -50, 6, 10}}), std::invalid_argument);  // gap
  CHECK_THROWS_AS(BidCurve({{10, 0, 0, 5}, {20, -40, 5, 10}}), std::invalid_argument);  // jump
}

TEST_CASE("scaling by a share keeps prices") {
  const double k[] = {10, 20};
  const auto c = BidCurve::from_prices(k, 0, 10, 0);
  const auto s = c.scaled(0.25);
  CHECK(s.p_max() == doctest::Approx(2.5));
  CHECK(s.cost(2.0) == doctest::Approx(0.25 * c.cost(8.0)));
  CHECK(s.marginal(2.0) == 20);
}
