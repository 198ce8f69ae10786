#include "polar/blowup.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace polar {

namespace {

void require_regime(const Params& p) {
  p.validate();
  if (!p.det_blowup_regime()) {
    throw Error(ErrorKind::RegimeViolation, "need 2 gamma > w - v > 0 and v > 1");
  }
}

// |w_k|: bound on the angular speed inside B_k
double angular_speed(int k, const Params& p) {
  return std::exp2(k * (p.gamma + p.v - p.w) + p.v - p.w - 1.0);
}

}  // namespace

double phi_cap_offset(int k, const Params& p) {
  if (!(p.w > p.v)) throw Error(ErrorKind::NoRoot, "cos^2 cap needs w > v");
  if (k < 0) throw Error(ErrorKind::InvalidArgument, "k must be nonnegative");
  // sin^2(x) = 2^{-k(w-v)-1}, x = Phi - pi/2 in (0, pi/2]
  const double half_log = -0.5 * (k * (p.w - p.v) + 1.0);
  const double target = std::exp2(half_log);
  auto f = [&](double x) { return std::sin(x) - target; };
  std::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::bisect(f, 0.0, kHalfPi,
                                                  boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (lo + hi);
}

double phi_cap(int k, const Params& p) { return kHalfPi + phi_cap_offset(k, p); }

StageBound stage_bounds(int k, const Params& p) {
  require_regime(p);
  StageBound b;
  b.k = k;
  b.R = level_radius(k);
  b.offset = phi_cap_offset(k, p);
  b.Phi = kHalfPi + b.offset;
  b.s = (b.offset - phi_cap_offset(k + 1, p)) / angular_speed(k, p);
  b.t = (level_radius(k + 1) - b.R) / (0.5 * std::pow(b.R, p.v));
  b.u = b.s + b.t;
  return b;
}

double angular_majorant(int k, const Params& p) {
  require_regime(p);
  return phi_cap_offset(k, p) / angular_speed(k, p);
}

BlowupBound blowup_time_bound_parts(int k0, const Params& p, int k_max) {
  require_regime(p);
  if (k0 < 0 || k_max < k0) throw Error(ErrorKind::InvalidArgument, "need 0 <= k0 <= k_max");
  BlowupBound out;
  for (int k = k0; k <= k_max; ++k) out.partial += stage_bounds(k, p).u;
  const int n = k_max + 1;
  // t_k = 2 * 2^{k(1-v)} exactly
  const double rho_t = std::exp2(1.0 - p.v);
  out.tail += 2.0 * std::exp2(n * (1.0 - p.v)) / (1.0 - rho_t);
  // s_k <= (Phi_k - pi/2)/|w_k| <= c y_k/|w_k| for k >= n, with y_k = sin(Phi_k - pi/2)
  // and c = arcsin(y_n)/y_n since arcsin(y)/y increases in y
  const double y_n = std::exp2(-0.5 * (n * (p.w - p.v) + 1.0));
  const double c = std::asin(y_n) / y_n;
  const double rho_s = std::exp2(-0.5 * (2.0 * p.gamma + p.v - p.w));
  out.tail += c * (y_n / angular_speed(n, p)) / (1.0 - rho_s);
  return out;
}

double blowup_time_bound(int k0, const Params& p, int k_max) {
  return blowup_time_bound_parts(k0, p, k_max).total();
}

BoxReport verify_box_invariance(int k, const Params& p, int samples, std::uint64_t seed,
                                const IntegratorControls& ctrl) {
  require_regime(p);
  constexpr double tol = 1e-12;
  Params det = p;
  det.sigma = 0.0;
  const double R = level_radius(k);
  const double cap = phi_cap(k, p);
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BoxReport rep;
  rep.k = k;
  rep.samples = samples;
  const double log_top = std::log(ctrl.r_explode / 2.0);
  for (int i = 0; i < samples; ++i) {
    State z;
    switch (i % 3) {
      case 0: z = {R, kHalfPi + unit(rng) * (cap - kHalfPi)}; break;
      case 1: z = {std::exp(std::log(R) + unit(rng) * (log_top - std::log(R))), kHalfPi}; break;
      default: z = {std::exp(std::log(R) + unit(rng) * (log_top - std::log(R))), cap}; break;
    }
    if (i == 0) z = {R, kHalfPi};
    if (i == 1) z = {R, cap};
    const Trajectory traj = integrate_det(z, det, ctrl, 1e3);
    double angle_out = 0.0, radius_out = 0.0;
    for (const auto& smp : traj.samples) {
      angle_out = std::max({angle_out, kHalfPi - smp.state.phi, smp.state.phi - cap});
      radius_out = std::max(radius_out, (R - smp.state.r) / R);
    }
    rep.worst_angle_excursion = std::max(rep.worst_angle_excursion, angle_out);
    rep.worst_radius_deficit = std::max(rep.worst_radius_deficit, radius_out);
    if (angle_out > tol || radius_out > tol) ++rep.violations;
    if (traj.termination == Termination::BlowUpProxy) ++rep.exploded;
  }
  return rep;
}

BlowupRun measure_blowup(State s0, const Params& p, const IntegratorControls& ctrl, double t_max) {
  const Trajectory traj = integrate_det(s0, p, ctrl, t_max);
  if (traj.termination != Termination::BlowUpProxy) {
    throw Error(ErrorKind::NoBlowUpDetected, "no blow-up before t = " + std::to_string(t_max));
  }
  BlowupRun run;
  run.blowup_time = traj.end_time;
  const double cap0 = 0.75 * kPi;
  for (const auto& smp : traj.samples) {
    const double phi = smp.state.canonical_phi();
    if (smp.state.r >= 1.0 && phi >= kHalfPi && phi <= cap0) {
      run.entry_time = smp.t;
      run.entered = true;
      break;
    }
  }
  return run;
}

double estimate_blowup_time(State s0, const Params& p, const IntegratorControls& ctrl, double t_max) {
  return measure_blowup(s0, p, ctrl, t_max).blowup_time;
}

void write_stage_table(std::ostream& out, const Params& p, int k_max) {
  out << "k,R_k,Phi_k,s_k,t_k,u_k\n" << std::setprecision(17);
  for (int k = 0; k <= k_max; ++k) {
    const StageBound b = stage_bounds(k, p);
    out << b.k << ',' << b.R << ',' << b.Phi << ',' << b.s << ',' << b.t << ',' << b.u << '\n';
  }
  out << "# total_bound=" << blowup_time_bound(0, p, k_max) << '\n';
}

}  // namespace polar
