#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "polar/attractor.hpp"

using namespace polar;

namespace {

FiberRunOptions small_fiber() {
  FiberRunOptions opt;
  opt.resolution = 64;
  opt.refine_below_box = 4;
  opt.h_max = 2e-3;
  return opt;
}

}  // namespace

TEST_CASE("level selection from the stationary law") {
  Distribution mu;
  mu.first = 2;
  mu.prob = {0.5, 0.3, 0.15, 0.05, 0.0};
  CHECK(select_Rbar(mu, 0.1) == 32.0);
  CHECK(select_Rbar(mu, 0.5) == 16.0);
  CHECK(select_Rbar(mu, 1.0) == 8.0);
  CHECK(select_Rbar(mu, 0.001) == 64.0);
  CHECK_THROWS_AS(select_Rbar(mu, 0.0), Error);
  CHECK_THROWS_AS(select_Rbar(Distribution{}, 0.1), Error);
}

TEST_CASE("radius majorant and empirical tail") {
  const double alpha = 1.0 / 6.0;
  // floor(log2 32 - 1) = 4
  CHECK(radius_majorant(32.0, alpha, 0.0) == doctest::Approx(std::exp2(-4.0 / 3.0)));
  CHECK(radius_majorant(32.0, alpha, 0.5) == doctest::Approx(std::exp2(-4.0 / 3.0 + 3.0)));
  CHECK_THROWS_AS(radius_majorant(0.5, alpha, 0.0), Error);
  CHECK_THROWS_AS(radius_majorant(4.0, -1.0, 0.0), Error);

  const std::vector<double> s = {1.0, 2.0, 3.0, 4.0};
  CHECK(empirical_tail(s, 2.0) == 0.75);
  CHECK(empirical_tail(s, 4.5) == 0.0);
  CHECK(empirical_tail({}, 1.0) == 0.0);

  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(0.4);
  std::vector<double> samples;
  for (int i = 0; i < 2000; ++i) samples.push_back(1.0 + ex(rng));
  const auto xs = tail_points(samples);
  CHECK(std::is_sorted(xs.begin(), xs.end()));
  CHECK(xs.front() == 1.0);
  const double c = fit_majorant_constant(samples, xs, alpha, 8.0);
  bool touches = false;
  for (double x : xs) {
    if (x >= 8.0) continue;
    const double q = empirical_tail(samples, x), m = radius_majorant(x, alpha, c);
    CHECK(q <= m * (1 + 1e-12));
    touches = touches || std::abs(q - m) <= 1e-12 * m;
  }
  CHECK(touches);
  const TailReport rep = tail_comparison(samples, alpha, c);
  CHECK(rep.rows.size() == xs.size());
  bool expected = true;
  for (const auto& r : rep.rows) {
    if (r.x >= 8.0 && r.empirical > r.majorant) expected = false;
  }
  CHECK(rep.dominated == expected);
  // a lighter majorant must fail somewhere past the split
  CHECK_FALSE(tail_comparison(samples, alpha, c - 3.0).dominated);

  std::ostringstream os;
  write_tail_table(os, rep);
  CHECK(os.str().rfind("x,empirical_tail,majorant\n1,1,", 0) == 0);
}

TEST_CASE("moment stability") {
  std::vector<double> same(200, 3.0);
  const MomentCheck a = moment_stability(same);
  CHECK(a.m_a == doctest::Approx(81.0));
  CHECK(a.stable);

  std::vector<double> split(200, 1.0);
  for (std::size_t i = 100; i < 200; ++i) split[i] = 2.0 + 1e-3 * static_cast<double>(i % 3);
  CHECK_FALSE(moment_stability(split).stable);
  CHECK_FALSE(moment_stability({1.0, 2.0}).stable);
}

TEST_CASE("fiber sup of the flow") {
  const Params p;
  const IntegratorControls ctrl;
  const FiberRunOptions opt = small_fiber();
  const auto zero = fiber_sup_at(3, {0.0}, p, ctrl, opt, 1);
  CHECK(zero.front() == 8.0);
  const auto at0 = pullback_radius_samples(p, ctrl, 4, 0.0, 5, opt, 2);
  for (double x : at0) CHECK(x == 16.0);

  const auto s = fiber_sup_at(3, {0.0, 0.5, 1.0}, p, ctrl, opt, 7);
  CHECK(s[0] == 8.0);
  const auto s1 = fiber_sup_at(3, {1.0}, p, ctrl, opt, 7);
  CHECK(s1.front() == s[2]);
  CHECK_THROWS_AS(fiber_sup_at(3, {1.0, 0.5}, p, ctrl, opt, 7), Error);
}

TEST_CASE("criterion tallies") {
  const Params p;
  const IntegratorControls ctrl;
  const FiberRunOptions opt = small_fiber();
  const std::vector<double> ts = {0.5, 1.0};
  const CriterionReport big = criterion_check(0.1, 1e9, p, ctrl, {2, 3}, ts, 4, opt, 11);
  REQUIRE(big.cells.size() == 4);
  CHECK(big.cell(1, 0).k == 3);
  CHECK(big.cell(1, 0).t == 0.5);
  for (const auto& c : big.cells) {
    CHECK(c.n == 4);
    CHECK(c.success == 4);
    CHECK(c.sup_samples.size() == 4);
  }
  CHECK(big.satisfied());
  CHECK(big.monotone_in_t());
  REQUIRE(big.t0(0).has_value());
  CHECK(*big.t0(0) == 0.5);

  const auto pb = pullback_radius_samples(p, ctrl, 3, 1.0, 4, opt, 11);
  for (std::size_t j = 0; j < 4; ++j) CHECK(pb[j] == big.cell(1, 1).sup_samples[j]);

  const CriterionReport tiny = criterion_check(0.1, 1.0, p, ctrl, {2, 3}, ts, 4, opt, 11);
  for (const auto& c : tiny.cells) CHECK(c.success == 0);
  CHECK_FALSE(tiny.satisfied());
  CHECK_FALSE(tiny.t0(0).has_value());
  // eps >= 1 makes the criterion vacuous
  CHECK(criterion_check(1.0, 1.0, p, ctrl, {2}, ts, 4, opt, 11).satisfied());

  Params outside;
  outside.v = 0.5;
  CHECK_THROWS_AS(criterion_check(0.1, 1e9, outside, ctrl, {2}, ts, 4, opt, 11), Error);

  std::ostringstream os;
  write_criterion_table(os, big);
  CHECK(os.str().rfind("k,t,n,freq,stderr,Rbar\n2,0.5,4,1,0,1000000000\n", 0) == 0);
}
