#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "polar/blowup.hpp"

using namespace polar;

namespace {

// plain bisection on cos^2(Phi) = target over (pi/2, pi]
double bisect_cap(double target) {
  double lo = kHalfPi, hi = kPi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double c = std::cos(mid);
    (c * c < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("angle caps") {
  const Params p;
  CHECK(phi_cap(0, p) == doctest::Approx(0.75 * kPi).epsilon(1e-14));
  CHECK(phi_cap(1, p) == doctest::Approx(2.0 * kPi / 3.0).epsilon(1e-14));
  CHECK(phi_cap(2, p) == doctest::Approx(bisect_cap(0.125)).epsilon(1e-14));
  CHECK(phi_cap(2, p) == doctest::Approx(kPi - std::acos(std::pow(2.0, -1.5))).epsilon(1e-14));
  double prev = phi_cap_offset(0, p);
  for (int k = 1; k <= 60; ++k) {
    const double x = phi_cap_offset(k, p);
    const double residual = std::pow(level_radius(k), p.w - p.v) * std::sin(x) * std::sin(x) - 0.5;
    CHECK(std::abs(residual) <= 1e-10);
    CHECK(x < prev);
    if (k >= 20) CHECK(x / prev == doctest::Approx(std::pow(2.0, -0.5 * (p.w - p.v))).epsilon(1e-6));
    prev = x;
  }
  Params bad = p;
  bad.w = 1.5;
  CHECK_THROWS_AS(phi_cap(1, bad), Error);
}

TEST_CASE("stage bounds") {
  const Params p;
  const StageBound b3 = stage_bounds(3, p);
  CHECK(b3.t == doctest::Approx(0.25));
  CHECK(b3.t <= 2.0 * std::pow(2.0, 3 * (1.0 - p.v)) + 1e-15);
  for (int k = 0; k <= 40; ++k) {
    const StageBound b = stage_bounds(k, p);
    CHECK(b.u > 0.0);
    CHECK(b.s >= 0.0);
    CHECK(b.s <= angular_majorant(k, p));
  }
  // the crude majorant carries the 2^{w-v+1/2} constant; the exact s_k a factor
  // 1 - 2^{-(w-v)/2} less
  auto scaled = [&](double x, int k) { return x * std::exp2(k * (2 * p.gamma + p.v - p.w) / 2); };
  const double m20 = scaled(angular_majorant(20, p), 20), m30 = scaled(angular_majorant(30, p), 30);
  CHECK(m20 == doctest::Approx(std::pow(2.0, 1.5)).epsilon(0.01));
  CHECK(m30 == doctest::Approx(m20).epsilon(0.01));
  const double s30 = scaled(stage_bounds(30, p).s, 30);
  CHECK(s30 == doctest::Approx(std::pow(2.0, 1.5) * (1.0 - std::pow(2.0, -0.5))).epsilon(1e-4));
  int k_star = -1;
  for (int k = 0; k < 60; ++k) {
    if (stage_bounds(k + 1, p).u >= stage_bounds(k, p).u) k_star = k + 1;
  }
  CHECK(k_star < 5);

  Params violated = p;
  violated.gamma = 0.1;
  CHECK_THROWS_AS(stage_bounds(1, violated), Error);
}

TEST_CASE("total bound and its tail majorant") {
  const Params p;
  for (int k_max : {20, 40}) {
    const auto parts = blowup_time_bound_parts(0, p, k_max);
    double direct = 0.0;
    for (int k = k_max + 1; k <= 200; ++k) direct += stage_bounds(k, p).u;
    CHECK(parts.tail >= direct);
    CHECK(parts.tail <= 2.0 * direct);
  }
  const double total = blowup_time_bound(0, p);
  CHECK(std::isfinite(total));
  CHECK(total > 0.0);
  CHECK(blowup_time_bound(0, p, 20) == doctest::Approx(blowup_time_bound(0, p, 40)).epsilon(1e-6));
  CHECK(blowup_time_bound(3, p) < total);
}

TEST_CASE("boxes are invariant") {
  const Params p;
  for (int k : {0, 2, 5}) {
    const BoxReport rep = verify_box_invariance(k, p, 100, 17);
    CHECK(rep.violations == 0);
    CHECK(rep.exploded == 100);
  }
}

TEST_CASE("blow-up times") {
  const Params p;
  CHECK(std::abs(estimate_blowup_time({1.0, kHalfPi}, p) - 1.0) <= 0.01);
  CHECK(std::abs(estimate_blowup_time({0.5, kHalfPi}, p) - 2.0) <= 0.01);

  const BlowupRun run = measure_blowup({1.0, 0.0}, p);
  CHECK(run.entered);
  CHECK(run.blowup_time <= run.entry_time + blowup_time_bound(0, p));

  // regime violated: reported, no assertion on the outcome
  Params weak = p;
  weak.gamma = 0.1;
  try {
    const double t = estimate_blowup_time({1.0, 0.0}, weak, {}, 5.0);
    MESSAGE("gamma = 0.1 blow-up time " << t);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoBlowUpDetected);
  }
}

TEST_CASE("blow-up time is stable under step refinement") {
  const Params p;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> radius(0.5, 4.0), angle(0.0, kPi);
  IntegratorControls fine;
  fine.h0 /= 2;
  for (int i = 0; i < 50; ++i) {
    const State s{radius(rng), angle(rng)};
    const double a = estimate_blowup_time(s, p);
    const double b = estimate_blowup_time(s, p, fine);
    CHECK(std::abs(a / b - 1.0) <= 0.05);
  }
}

TEST_CASE("stage table csv") {
  std::ostringstream os;
  write_stage_table(os, Params{}, 4);
  const std::string s = os.str();
  CHECK(s.rfind("k,R_k,Phi_k,s_k,t_k,u_k\n", 0) == 0);
  CHECK(s.find("# total_bound=") != std::string::npos);
}
