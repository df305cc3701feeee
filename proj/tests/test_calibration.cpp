#include <cmath>

#include "doctest.h"
#include "qnet/scenario.hpp"

using namespace qnet;

// Forward simulation of the calibrated mapping must return the targets. Each
// row carries its Poisson error over the run: sqrt(R / duration).
TEST_CASE("calibration round trip within three Poisson sigma") {
  const auto s = resolved(default_scenario("I", 42));
  const auto rep = run_static(s);
  const std::map<std::string, double> target{{"S1", 5.9}, {"S2", 1.2}};
  for (const auto& row : rep.rows) {
    const double r = target.at(row.pair.stream);
    const double sigma = std::sqrt(r / s.duration_s);
    CAPTURE(row.pair.stream);
    CAPTURE(row.stats.rate_ccps);
    CHECK(std::abs(row.stats.rate_ccps - r) <= 3.0 * sigma);
  }
}

TEST_CASE("calibration round trip within ten percent") {
  const auto s = resolved(default_scenario("I", 42));
  const auto rep = run_static(s);
  for (const auto& row : rep.rows) {
    if (row.pair.stream != "S1") continue;
    CAPTURE(row.stats.rate_ccps);
    CHECK(row.stats.rate_ccps == doctest::Approx(5.9).epsilon(0.10));
  }
}
