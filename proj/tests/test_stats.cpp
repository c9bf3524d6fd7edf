#include <doctest.h>

#include <cmath>
#include <vector>

#include "snob/stats.hpp"

using namespace snob;

TEST_SUITE("stats") {

TEST_CASE("sigmoid midpoint and clamping") {
  CHECK(stats::sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(stats::sigmoid(1000.0) < 1.0);
  CHECK(stats::sigmoid(-1000.0) > 0.0);
  // strictly monotone in the linear score
  double prev = 0;
  for (double z = -20; z <= 20; z += 0.5) {
    const double p = stats::sigmoid(z);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("log1pexp agrees with the naive form away from overflow") {
  for (double z : {-30.0, -2.0, -0.1, 0.0, 0.1, 2.0, 30.0}) {
    CHECK(stats::log1pexp(z) == doctest::Approx(std::log1p(std::exp(z))));
  }
  CHECK(stats::log1pexp(1000.0) == doctest::Approx(1000.0));
}

TEST_CASE("t two-sided p-values match reference values") {
  // Reference values from the standard t survival function.
  struct Case {
    double rho;
    std::size_t n;
    double expected;
  };
  const std::vector<Case> cases = {
      {0.6, 10, 0.06668799999999996},
      {0.85, 6, 0.03206249999999999},
      {-0.35, 25, 0.08631994521775342},
      {0.97, 5, 0.006209429698002572},
      {0.2, 100, 0.046036286460054136},
  };
  for (const Case& c : cases) {
    const double df = static_cast<double>(c.n - 2);
    const double t = c.rho * std::sqrt(df / (1 - c.rho * c.rho));
    CHECK(stats::t_two_sided_p(t, df) == doctest::Approx(c.expected).epsilon(1e-10));
  }
}

TEST_CASE("chi2 df=1 survival function") {
  // 6.635 is the classic 99% critical value.
  CHECK(stats::chi2_sf_df1(6.634896601021214) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(stats::chi2_sf_df1(0.0) == 1.0);
  CHECK(stats::chi2_sf_df1(3.841458820694124) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("average ranks handle ties") {
  const std::vector<double> v = {10.0, 20.0, 20.0, 30.0};
  std::vector<double> r(4);
  stats::average_ranks(v, r);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 2.5);
  CHECK(r[2] == 2.5);
  CHECK(r[3] == 4.0);
}

TEST_CASE("pearson detects constant input") {
  const std::vector<double> c = {1.0, 1.0, 1.0};
  const std::vector<double> v = {1.0, 2.0, 3.0};
  double out;
  CHECK_FALSE(stats::pearson(c, v, out));
  CHECK(stats::pearson(v, v, out));
  CHECK(out == doctest::Approx(1.0));
}

}  // TEST_SUITE
