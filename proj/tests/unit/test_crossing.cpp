#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "polar/crossing.hpp"

using namespace polar;

namespace {

// (sigma^2/2) u'' - R^gamma cos^2 u' = -1 on (a, b), u(a) = u(b) = 0, by
// central differences and the Thomas algorithm
double exit_time_fd(const FrozenAngularModel& m, double x, int n) {
  const double h = (m.b - m.a) / n;
  const double d = 0.5 * m.sigma * m.sigma, c = std::pow(m.R, m.gamma);
  std::vector<double> lo(n + 1), di(n + 1), up(n + 1), rhs(n + 1, -1.0), u(n + 1, 0.0);
  for (int i = 1; i < n; ++i) {
    const double cs = std::cos(m.a + i * h);
    const double drift = -c * cs * cs;
    lo[i] = d / (h * h) - drift / (2 * h);
    di[i] = -2 * d / (h * h);
    up[i] = d / (h * h) + drift / (2 * h);
  }
  for (int i = 2; i < n; ++i) {
    const double w = lo[i] / di[i - 1];
    di[i] -= w * up[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  u[n - 1] = rhs[n - 1] / di[n - 1];
  for (int i = n - 2; i >= 1; --i) u[i] = (rhs[i] - up[i] * u[i + 1]) / di[i];
  const double pos = (x - m.a) / h;
  const int i = static_cast<int>(pos);
  return u[i] + (pos - i) * (u[i + 1] - u[i]);
}

double simpson(auto f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("antiderivative A") {
  CHECK(A(0.0) == 0.0);
  CHECK(A(kHalfPi) == doctest::Approx(kPi / 4));
  CHECK(A(kPi) == doctest::Approx(kHalfPi));
  for (double x = 0.0; x < kPi; x += 0.01) {
    CHECK(A(x + 0.01) > A(x));
    CHECK(A_inverse(A(x)) == doctest::Approx(x).epsilon(1e-10));
  }
  CHECK(A_inverse(A(7.3)) == doctest::Approx(7.3).epsilon(1e-12));
  CHECK(A_inverse(A(-2.2)) == doctest::Approx(-2.2).epsilon(1e-12));
}

TEST_CASE("two-sided exit time matches a finite-difference solution") {
  FrozenAngularModel m;
  m.R = 1.0;
  m.a = 0.0;
  m.b = kPi;
  CHECK(expected_exit_time(m, m.a) == 0.0);
  CHECK(expected_exit_time(m, m.b) == 0.0);
  CHECK(expected_exit_time(m, kHalfPi) == doctest::Approx(exit_time_fd(m, kHalfPi, 20000)).epsilon(1e-6));
  m.R = 3.0;
  m.a = 0.4;
  m.b = 2.9;
  CHECK(expected_exit_time(m, 1.3) == doctest::Approx(exit_time_fd(m, 1.3, 20000)).epsilon(1e-6));
  m.b = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(expected_exit_time(m, 1.0), Error);
}

TEST_CASE("one-sided crossing integral matches brute-force Simpson") {
  FrozenAngularModel m;
  m.R = 1.0;
  m.a = kHalfPi - 0.3;
  const double K = m.K();
  auto inner = [&](double beta) {
    return simpson([&](double z) { return std::exp(-K * (A(z) - A(beta))); }, beta, beta + 40.0, 20000);
  };
  const double oracle = 2.0 / (m.sigma * m.sigma) * simpson(inner, m.a, kPi, 400);
  CHECK(expected_crossing_ua(m, kPi) == doctest::Approx(oracle).epsilon(1e-7));
  CHECK(expected_crossing_ua(m, m.a) == 0.0);
  double prev = 0.0;
  for (double phi = m.a + 0.1; phi <= kPi; phi += 0.1) {
    const double u = expected_crossing_ua(m, phi);
    CHECK(u > prev);
    prev = u;
  }
}

TEST_CASE("exit times increase to the one-sided limit") {
  FrozenAngularModel m;
  m.R = 2.0;
  m.a = kHalfPi - 0.3;
  const double limit = expected_crossing_ua(m, 2.0);
  double prev = 0.0;
  for (double b : {kPi, 2 * kPi, 4 * kPi}) {
    m.b = b;
    const double u = expected_exit_time(m, 2.0);
    CHECK(u >= prev - 1e-9);
    CHECK(u <= limit * (1 + 1e-8));
    prev = u;
  }
  CHECK(prev == doctest::Approx(limit).epsilon(1e-8));
}

TEST_CASE("decay exponent") {
  std::vector<double> Ks;
  for (int i = 0; i <= 6; ++i) Ks.push_back(std::pow(10.0, 2.0 + 0.5 * i));
  const DecayFit fit = fit_decay_exponent(Ks);
  CHECK(fit.slope == doctest::Approx(-2.0 / 3.0).epsilon(0.03 / (2.0 / 3.0)));
  CHECK(std::isfinite(fit.intercept));
  QuadratureOptions tight;
  tight.rel_tol *= 0.5;
  CHECK(std::abs(fit_decay_exponent(Ks, tight).slope - fit.slope) < 1e-3);

  std::ostringstream os;
  write_decay_table(os, fit);
  CHECK(os.str().rfind("K,integral,bound,ratio\n", 0) == 0);
  CHECK_THROWS_AS(fit_decay_exponent({100.0}), Error);
}

TEST_CASE("crossing time scales like R^{-2 gamma / 3}") {
  std::vector<double> C;
  for (double R : {4.0, 16.0, 64.0}) {
    FrozenAngularModel m;
    m.R = R;
    m.a = 0.0;
    C.push_back(expected_crossing_ua(m, kPi) * std::pow(R, 2.0 * m.gamma / 3.0));
  }
  CHECK(C[1] == doctest::Approx(C[0]).epsilon(0.1));
  CHECK(C[2] == doctest::Approx(C[0]).epsilon(0.1));
}

TEST_CASE("Monte Carlo first passage") {
  FrozenAngularModel m;
  m.R = 2.0;
  m.a = kHalfPi - 0.3;
  const McEstimate at_a = mc_crossing_time(m, m.a, 100, 1);
  CHECK(at_a.mean == 0.0);
  const double analytic = expected_crossing_ua(m, kPi);
  const McEstimate est = mc_crossing_time(m, kPi, 10000, 2, 5e-4);
  CHECK(est.horizon_exceeded == 0);
  CHECK(std::abs(est.mean - analytic) <= 3.0 * est.stderr_);

  double prev = 0.0;
  for (double psi : {m.a + 0.2, 2.0, kPi}) {
    const McEstimate e = mc_crossing_time(m, psi, 2000, 3, 5e-4);
    CHECK(e.mean > prev);
    prev = e.mean;
  }

  FrozenAngularModel two;
  two.R = 1.0;
  two.a = 0.0;
  two.b = kPi;
  const McEstimate e2 = mc_exit_time(two, kHalfPi, 10000, 4, 5e-4);
  CHECK(std::abs(e2.mean - expected_exit_time(two, kHalfPi)) <= 3.0 * e2.stderr_);
}

TEST_CASE("pathwise comparison with the frozen-radius angle") {
  const Params p;
  const double a = kHalfPi - 0.3;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const BrownianPath path(derive_seed(77, seed), 1e-3, 40.0);
    const ComparisonResult res = comparison_check({4.0, 2.0}, 2.0, a, p, path);
    CHECK(res.holds);
    CHECK(res.max_excess <= 1e-12);
    CHECK(res.stop_order_holds);
  }
  const BrownianPath path(5, 1e-3, 1.0);
  CHECK_THROWS_AS(comparison_check({1.0, 2.0}, 2.0, a, p, path), Error);
}
