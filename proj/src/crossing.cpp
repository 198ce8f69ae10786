#include "polar/crossing.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>
#include <random>

namespace polar {

namespace {

// integrands e^{-K dA} are dropped once K dA exceeds this
constexpr double kCut = 50.0;

// A(z) - A(beta) without cancellation:
// (d - sin d)/2 + cos^2((z+beta)/2) sin d, d = z - beta
double A_diff(double z, double beta) noexcept {
  const double d = z - beta;
  double d_minus_sin;
  if (std::abs(d) < 0.1) {
    const double d2 = d * d;
    d_minus_sin = d * d2 / 6.0 * (1.0 - d2 / 20.0 * (1.0 - d2 / 42.0 * (1.0 - d2 / 72.0)));
  } else {
    d_minus_sin = d - std::sin(d);
  }
  const double c = std::cos(0.5 * (z + beta));
  return 0.5 * d_minus_sin + c * c * std::sin(d);
}

// Global adaptive Gauss-Kronrod: always bisects the segment with the largest
// error; per-segment errors are floored at the roundoff level.
template <class F>
double gk(F&& f, double lo, double hi, const QuadratureOptions& q) {
  if (!(hi > lo)) return 0.0;
  using Kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
  using Gauss = boost::math::quadrature::gauss<double, 10>;
  struct Seg {
    double a, b, val, err;
    bool operator<(const Seg& o) const { return err < o.err; }
  };
  auto eval = [&](double a, double b) {
    double l1 = 0.0;
    const double val = Kronrod::integrate(f, a, b, 0, 0.0, nullptr, &l1);
    const double err = std::abs(val - Gauss::integrate(f, a, b));
    return Seg{a, b, val, std::max(err, 50.0 * std::numeric_limits<double>::epsilon() * l1)};
  };
  std::priority_queue<Seg> heap;
  heap.push(eval(lo, hi));
  double total = heap.top().val, error = heap.top().err;
  const std::size_t budget = std::size_t{1} << q.max_depth;
  while (error > q.rel_tol * std::abs(total) && heap.size() < budget) {
    const Seg worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;
    heap.pop();
    const Seg left = eval(worst.a, mid), right = eval(mid, worst.b);
    total += left.val + right.val - worst.val;
    error += left.err + right.err - worst.err;
    heap.push(left);
    heap.push(right);
  }
  // recompute sums to shed accumulated cancellation from the updates
  total = 0.0;
  error = 0.0;
  for (; !heap.empty(); heap.pop()) {
    total += heap.top().val;
    error += heap.top().err;
  }
  if (!std::isfinite(total) || error > q.rel_tol * std::abs(total) + 1e-300) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "tolerance not reached on [%.17g, %.17g]: value %g, error %g",
                  lo, hi, total, error);
    throw Error(ErrorKind::QuadratureFailure, buf);
  }
  return total;
}

// splits at the flat points pi/2 + m pi of A
template <class F>
double gk_split(F&& f, double lo, double hi, const QuadratureOptions& q) {
  if (!(hi > lo)) return 0.0;
  double total = 0.0, left = lo;
  for (double m = std::floor((lo - kHalfPi) / kPi) + 1.0;; m += 1.0) {
    const double bp = kHalfPi + m * kPi;
    if (bp >= hi) break;
    if (bp > left) {
      total += gk(f, left, bp, q);
      left = bp;
    }
  }
  return total + gk(f, left, hi, q);
}

}  // namespace

double FrozenAngularModel::K() const noexcept { return 2.0 * std::pow(R, gamma) / (sigma * sigma); }

void FrozenAngularModel::validate() const {
  if (!(R > 0.0) || !(sigma > 0.0) || !(gamma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "frozen model needs R, sigma, gamma > 0");
  }
  if (!(a < kHalfPi) || !(b > kHalfPi)) {
    throw Error(ErrorKind::InvalidArgument, "frozen model needs a < pi/2 < b");
  }
}

double A(double phi) noexcept { return 0.5 * phi + 0.25 * std::sin(2.0 * phi); }

double A_inverse(double y) {
  // A(z + m pi) = A(z) + m pi / 2
  const double m = std::floor(y / kHalfPi);
  const double y0 = y - m * kHalfPi;
  if (y0 <= 0.0) return m * kPi;
  auto f = [y0](double z) { return A(z) - y0; };
  std::uintmax_t iters = 200;
  const auto [lo, hi] =
      boost::math::tools::bisect(f, 0.0, kPi, boost::math::tools::eps_tolerance<double>(50), iters);
  return m * kPi + 0.5 * (lo + hi);
}

double inner_tail_integral(double K, double beta, const QuadratureOptions& q) {
  const double a_beta = A(beta);
  auto f = [&](double z) { return std::exp(-K * A_diff(z, beta)); };
  if (kCut / K >= kHalfPi) {
    // one period, then the geometric sum over the remaining periods
    return gk_split(f, beta, beta + kPi, q) / -std::expm1(-K * kHalfPi);
  }
  // the dropped part is at most e^{-kCut} times one period's worth
  return gk_split(f, beta, A_inverse(a_beta + kCut / K), q);
}

double crossing_double_integral(double K, double a, double phi, const QuadratureOptions& q) {
  if (!(K > 0.0)) throw Error(ErrorKind::InvalidArgument, "K must be positive");
  if (phi <= a) return 0.0;
  QuadratureOptions inner = q;
  inner.rel_tol = q.rel_tol;
  return gk_split([&](double beta) { return inner_tail_integral(K, beta, inner); }, a, phi, q);
}

double expected_crossing_ua(const FrozenAngularModel& m, double phi, const QuadratureOptions& q) {
  m.validate();
  if (phi < m.a) throw Error(ErrorKind::InvalidArgument, "phi below the exit level");
  return 2.0 / (m.sigma * m.sigma) * crossing_double_integral(m.K(), m.a, phi, q);
}

double expected_exit_time(const FrozenAngularModel& m, double x, const QuadratureOptions& q) {
  m.validate();
  if (!std::isfinite(m.b)) throw Error(ErrorKind::InvalidArgument, "two-sided exit needs finite b");
  if (x < m.a || x > m.b) throw Error(ErrorKind::InvalidArgument, "phi outside [a, b]");
  if (x == m.a || x == m.b) return 0.0;
  const double K = m.K();
  const double a = m.a, b = m.b;
  QuadratureOptions inner = q;
  inner.rel_tol = q.rel_tol;
  // F(y) = int_a^y e^{-K(A(y)-A(s))} ds, the scale function times e^{-K A(y)}
  auto F = [&](double y) {
    const double ay = A(y);
    return gk_split([&](double s) { return std::exp(-K * A_diff(y, s)); },
                    std::max(a, A_inverse(ay - kCut / K)), y, inner);
  };
  const double ab = A(b);
  const double lo_b = A_inverse(ab - kCut / K);
  // G(y) = int_y^b e^{-K(A(b)-A(s))} ds; G(y)/F(b) = P(exit at b | start y) complement
  auto G = [&](double y) {
    return gk_split([&](double s) { return std::exp(-K * A_diff(b, s)); }, std::max(y, lo_b), b, inner);
  };
  const double Fb = F(b);
  const double ax = A(x);
  const double left = G(x) / Fb * gk_split(F, a, x, q);
  const double right =
      F(x) * gk_split([&](double y) { return std::exp(-K * A_diff(y, x)) * G(y) / Fb; }, x,
                      std::min(b, A_inverse(ax + kCut / K)), q);
  return 2.0 / (m.sigma * m.sigma) * (left + right);
}

DecayFit fit_decay_exponent(const std::vector<double>& K_values, const QuadratureOptions& q) {
  if (K_values.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two K values");
  DecayFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double K : K_values) {
    if (!(K >= 1.0)) throw Error(ErrorKind::InvalidArgument, "K values must be >= 1");
    const double I = crossing_double_integral(K, 0.0, kPi, q);
    fit.K.push_back(K);
    fit.integral.push_back(I);
    const double x = std::log(K), y = std::log(I);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(K_values.size());
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

McEstimate mc_exit_time(const FrozenAngularModel& m, double psi, std::int64_t n, std::uint64_t seed,
                        double h, double horizon) {
  m.validate();
  if (n <= 0 || !(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "need n > 0 and h > 0");
  if (!(horizon > 0.0)) {
    horizon = 100.0 * (std::isfinite(m.b) ? expected_exit_time(m, std::clamp(psi, m.a, m.b))
                                          : expected_crossing_ua(m, kPi));
  }
  const double drift = std::pow(m.R, m.gamma);
  const double sd = m.sigma * std::sqrt(h);
  const double s2h = m.sigma * m.sigma * h;
  const bool two_sided = std::isfinite(m.b);
  const auto max_steps = static_cast<std::int64_t>(std::ceil(horizon / h));
  McEstimate est;
  double sum = 0.0, sumsq = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double x = psi;
    std::int64_t steps = 0;
    bool hit = x <= m.a || (two_sided && x >= m.b);
    if (!hit) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      while (steps < max_steps) {
        const double c = std::cos(x);
        const double x1 = x - drift * c * c * h + sd * normal(rng);
        ++steps;
        if (x1 <= m.a || (two_sided && x1 >= m.b)) {
          hit = true;
          break;
        }
        // bridge crossing probability between the two grid values
        const double da = (x - m.a) * (x1 - m.a);
        if (da < 25.0 * s2h && unit(rng) < std::exp(-2.0 * da / s2h)) {
          hit = true;
          break;
        }
        if (two_sided) {
          const double db = (m.b - x) * (m.b - x1);
          if (db < 25.0 * s2h && unit(rng) < std::exp(-2.0 * db / s2h)) {
            hit = true;
            break;
          }
        }
        x = x1;
      }
    }
    if (!hit) {
      ++est.horizon_exceeded;
      continue;
    }
    const double t = static_cast<double>(steps) * h;
    sum += t;
    sumsq += t * t;
    ++est.n;
  }
  if (est.n > 0) {
    est.mean = sum / static_cast<double>(est.n);
    const double var = std::max(0.0, sumsq / static_cast<double>(est.n) - est.mean * est.mean);
    est.stderr_ = std::sqrt(var / static_cast<double>(est.n));
  }
  return est;
}

McEstimate mc_crossing_time(const FrozenAngularModel& m, double psi, std::int64_t n,
                            std::uint64_t seed, double h) {
  FrozenAngularModel open = m;
  open.b = std::numeric_limits<double>::infinity();
  return mc_exit_time(open, psi, n, seed, h, 0.0);
}

ComparisonResult comparison_check(State z, double R, double a, const Params& p,
                                   const BrownianPath& path, const IntegratorControls& ctrl) {
  p.validate();
  ctrl.validate();
  if (!(z.r > R) || !(R >= 1.0)) throw Error(ErrorKind::InvalidArgument, "need z.r > R >= 1");
  const double h = path.step();
  const double frozen = std::pow(R, p.gamma);
  ComparisonResult res;
  res.tolerance = frozen * h;
  State full = z;
  double aux = z.phi;
  bool below_R = false;

  auto aux_step = [&](double phi) {
    return ctrl.h0 / (1.0 + frozen * std::abs(std::sin(2.0 * phi)) / ctrl.stiffness_scale);
  };
  auto observe = [&](double t) {
    if (!below_R && !res.blowup) {
      const double excess = full.phi - aux;
      res.max_excess = std::max(res.max_excess, excess);
      if (excess > res.tolerance) res.holds = false;
      if (full.r <= R) below_R = true;
      if (!res.full_stopped && (full.r <= R || full.phi <= a)) {
        res.full_stopped = true;
        res.full_stop = t;
      }
    }
    if (!res.aux_hit && aux <= a) {
      res.aux_hit = true;
      res.aux_hit_time = t;
    }
  };

  observe(0.0);
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (res.aux_hit && (below_R || res.blowup)) break;
    const bool full_live = !below_R && !res.blowup;
    walk_bridge(
        noise_interval(path, i), 0.0, h, ctrl.max_depth,
        [&](double len) {
          double dt = aux_step(aux);
          if (full_live) dt = std::min(dt, local_step(full, p, ctrl));
          return len > ctrl.refine_ratio * dt;
        },
        [&](double lo, double hi, double slope) {
          const double rate = p.sigma * slope;
          double t = lo;
          while (t < hi) {
            double dt = aux_step(aux);
            if (full_live && !res.blowup) dt = std::min(dt, local_step(full, p, ctrl));
            const bool last = dt >= hi - t;
            if (last) dt = hi - t;
            const double c = std::cos(aux);
            aux += dt * (-frozen * c * c + rate);
            if (full_live && !res.blowup) {
              const Velocity vel = drift(full, p);
              full.phi += dt * (vel.dphi + rate);
              full.r = std::max(full.r + dt * vel.dr, ctrl.r_min);
              if (full.r >= ctrl.r_explode) res.blowup = true;
            }
            t = last ? hi : t + dt;
          }
          return true;
        });
    observe(static_cast<double>(i + 1) * h);
  }
  if (res.aux_hit && !res.blowup) {
    res.stop_order_holds = res.full_stopped && res.full_stop <= res.aux_hit_time + h;
  }
  return res;
}

void write_decay_table(std::ostream& out, const DecayFit& fit) {
  // C is the least constant with integral <= C K^{-2/3} over the sweep
  double C = 0.0;
  for (std::size_t i = 0; i < fit.K.size(); ++i) {
    C = std::max(C, fit.integral[i] * std::pow(fit.K[i], 2.0 / 3.0));
  }
  out << "K,integral,bound,ratio\n" << std::setprecision(17);
  for (std::size_t i = 0; i < fit.K.size(); ++i) {
    const double bound = C * std::pow(fit.K[i], -2.0 / 3.0);
    out << fit.K[i] << ',' << fit.integral[i] << ',' << bound << ',' << fit.integral[i] / bound << '\n';
  }
}

}  // namespace polar
