#include "polar/stepdown.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>

#include "polar/blowup.hpp"
#include "polar/error.hpp"

namespace polar {

namespace {

constexpr double kBgkShift = 0.5826;

struct Welford {
  std::int64_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  McEstimate result() const {
    McEstimate e;
    e.n = n;
    e.mean = mean;
    e.stderr_ = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return e;
  }
};

// First grid time at which the drawdown of sigma W + r t exceeds eps, or +inf
// if it does not happen before t_max.
double drawdown_time(double r, double sigma, double eps, double h, double t_max,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double barrier = eps - kBgkShift * sigma * std::sqrt(h);
  const double sd = sigma * std::sqrt(h);
  const double var2 = 2.0 * sigma * sigma * h;
  double x = 0.0, top = 0.0;
  const auto steps = static_cast<std::int64_t>(std::ceil(t_max / h - 1e-9));
  for (std::int64_t j = 1; j <= steps; ++j) {
    const double x1 = x + r * h + sd * normal(rng);
    const double dx = x1 - x;
    const double bridge_max = 0.5 * (x + x1 + std::sqrt(dx * dx - var2 * std::log1p(-unit(rng))));
    top = std::max(top, bridge_max);
    x = x1;
    if (top - x > barrier) return static_cast<double>(j) * h;
  }
  return kNever;
}

void require_attractor(const Params& p) {
  p.validate();
  if (!p.attractor_regime()) {
    throw Error(ErrorKind::RegimeViolation, "need w > v > 1, 2 gamma/3 + 1 > v, w - 1 > gamma");
  }
}

}  // namespace

void StepDownConfig::validate() const {
  if (!(eps < 1.0 && eps > eps_tilde && eps_tilde > 0.0)) {
    throw Error(ErrorKind::DomainError, "need 1 > eps > eps_tilde > 0");
  }
  if (!(T >= 1.0)) throw Error(ErrorKind::DomainError, "need T >= 1");
  if (!(d > 0.0)) throw Error(ErrorKind::DomainError, "need d > 0");
}

double StepDownConfig::c_tilde() const noexcept {
  const double c = std::cos(kHalfPi - eps + eps_tilde);
  return c * c;
}

double StepDownConfig::rho0(const Params& p) const noexcept {
  return std::pow(c_tilde() / 2.0, 1.0 / (p.v - p.w));
}

double travel_time_up(double r, double R, double v) {
  if (!(v > 1.0)) throw Error(ErrorKind::DomainError, "need v > 1");
  if (!(r > 0.0 && R >= r)) throw Error(ErrorKind::DomainError, "need R >= r > 0");
  return (std::pow(r, 1.0 - v) - std::pow(R, 1.0 - v)) / (v - 1.0);
}

double travel_time_down(double R, double r, double c, double w) {
  if (!(w > 1.0 && c > 0.0)) throw Error(ErrorKind::DomainError, "need w > 1 and c > 0");
  if (!(r > 0.0 && R >= r)) throw Error(ErrorKind::DomainError, "need R >= r > 0");
  return 2.0 * (std::pow(r, 1.0 - w) - std::pow(R, 1.0 - w)) / (c * (w - 1.0));
}

double theta_k(int k, const Params& p, const StepDownConfig& cfg) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "theta_k needs k >= 2");
  return travel_time_up(level_radius(k), level_radius(k + 1), p.v) +
         travel_time_down(level_radius(k + 1), level_radius(k - 2), cfg.c_tilde(), p.w);
}

double theta_tilde(int k, const Params& p, const StepDownConfig&) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "theta_tilde needs k >= 2");
  return travel_time_down(level_radius(k), level_radius(k - 2), 2.0, p.w) +
         travel_time_up(level_radius(k - 2), level_radius(k - 1), p.v);
}

double theta_sup(const Params& p, const StepDownConfig& cfg, int k_max) {
  double sup = 0.0;
  for (int k = 2; k <= k_max; ++k) sup = std::max(sup, theta_k(k, p, cfg));
  return sup;
}

double beta_v(double v) {
  if (!(v > 1.0)) throw Error(ErrorKind::DomainError, "need v > 1");
  const double x = v - 1.0;
  // with e = 2^x - 1: 4^x - 2^x - 1 + 2^{-x} = e (e + 1) - e / (e + 1)
  const double e = std::expm1(x * std::numbers::ln2);
  return (e * (e + 1.0) - e / (e + 1.0)) / x;
}

double bbm_tail_bound(double r, double eps, double sigma, double T) {
  if (!(sigma > 0.0 && eps > 0.0 && T >= 0.0)) {
    throw Error(ErrorKind::DomainError, "need sigma > 0, eps > 0, T >= 0");
  }
  if (r < std::sqrt(2.0) * sigma) throw Error(ErrorKind::DomainError, "bound needs r >= sqrt(2) sigma");
  const double s2 = sigma * sigma;
  return 4.0 * std::sqrt(2.0) / s2 * r * r * std::exp(T - 2.0 * eps * r / s2);
}

double laplace_T_eps(double beta, double r, double sigma, double eps) {
  if (!(beta > 0.0 && sigma > 0.0 && eps >= 0.0)) {
    throw Error(ErrorKind::DomainError, "need beta > 0, sigma > 0, eps >= 0");
  }
  const double s2 = sigma * sigma;
  const double G = r / s2;
  const double delta = std::sqrt(G * G + 2.0 * beta / s2);
  // both exponents divided by e^{delta eps}
  const double a = std::exp(-2.0 * delta * eps);
  const double ch = 0.5 * (1.0 + a), sh = 0.5 * (1.0 - a);
  return delta * std::exp(-(G + delta) * eps) / (delta * ch - G * sh);
}

McEstimate mc_laplace_T_eps(double beta, double r, double sigma, double eps, std::int64_t n,
                            std::uint64_t seed, double h) {
  if (!(beta > 0.0 && sigma > 0.0 && eps > 0.0 && h > 0.0 && n > 0)) {
    throw Error(ErrorKind::DomainError, "need beta, sigma, eps, h, n positive");
  }
  const double t_max = 40.0 / beta;
  Welford acc;
  for (std::int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double t = drawdown_time(r, sigma, eps, h, t_max, rng);
    acc.add(std::isfinite(t) ? std::exp(-beta * t) : 0.0);
  }
  return acc.result();
}

McEstimate mc_drift_sup_event(double r, double eps, double sigma, double T, std::int64_t n,
                              std::uint64_t seed, double h) {
  if (!(sigma > 0.0 && eps > 0.0 && T > 0.0 && h > 0.0 && n > 0)) {
    throw Error(ErrorKind::DomainError, "need sigma, eps, T, h, n positive");
  }
  Welford acc;
  for (std::int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    acc.add(drawdown_time(r, sigma, eps, h, T, rng) <= T ? 1.0 : 0.0);
  }
  return acc.result();
}

LevelGrid level_grid(int k, const Params& p, const StepDownConfig& cfg, double h_max,
                     std::size_t min_steps) {
  if (!(h_max > 0.0) || min_steps == 0) throw Error(ErrorKind::InvalidArgument, "bad level grid");
  LevelGrid g;
  g.theta = theta_k(k, p, cfg);
  g.theta_steps = std::max(min_steps, static_cast<std::size_t>(std::ceil(g.theta / h_max)));
  g.h = g.theta / static_cast<double>(g.theta_steps);
  if (g.theta >= cfg.T) {
    g.T_steps = std::min(g.theta_steps, static_cast<std::size_t>(std::ceil(cfg.T / g.h - 1e-9)));
  } else {
    g.T_steps = g.theta_steps;
    g.tail_steps = static_cast<std::size_t>(std::ceil((cfg.T - g.theta) / h_max - 1e-9));
    g.tail_h = (cfg.T - g.theta) / static_cast<double>(g.tail_steps);
  }
  return g;
}

std::pair<bool, bool> bbm_events(int k, const Params& p, const StepDownConfig& cfg,
                                 const LevelGrid& g, const LevelNoise& noise) {
  if (noise.flow.size() < g.T_steps || (g.tail_steps > 0 && (!noise.tail || noise.tail->size() < g.tail_steps))) {
    throw Error(ErrorKind::PathExhausted, "BBM window exceeds the path");
  }
  const double c_up = 0.5 * cfg.c_tilde() * std::pow(level_radius(k - 2), p.gamma);
  const double c_lo = std::pow(level_radius(k + 1), p.gamma);
  bool upper = true, lower = true;
  double w = 0.0, low = 0.0, high = 0.0;
  auto visit = [&](double dW, double t) {
    w += p.sigma * dW;
    const double x = w - c_up * t;
    const double y = w + c_lo * t;
    if (x - low > 0.5 * cfg.eps_tilde) upper = false;
    if (high - y > cfg.d) lower = false;
    low = std::min(low, x);
    high = std::max(high, y);
  };
  for (std::size_t j = 1; j <= g.T_steps; ++j) {
    visit(noise.flow.increment(j - 1), j == g.theta_steps ? g.theta : static_cast<double>(j) * g.h);
  }
  for (std::size_t j = 1; j <= g.tail_steps; ++j) {
    visit(noise.tail->increment(j - 1),
          j == g.tail_steps ? cfg.T : g.theta + static_cast<double>(j) * g.tail_h);
  }
  return {upper, lower};
}

std::vector<State> level_fiber(int k, const Params& p, const FiberRunOptions& opt) {
  if (opt.resolution == 0 || opt.refine_below_box < 0) {
    throw Error(ErrorKind::InvalidArgument, "bad fiber options");
  }
  std::vector<State> fiber = make_fiber(level_radius(k), opt.resolution);
  const double spacing = kPi / static_cast<double>(opt.resolution);
  const double box = phi_cap_offset(k, p);
  for (int j = -2 * static_cast<int>(std::ceil(std::log2(spacing / box))); j <= opt.refine_below_box; ++j) {
    const double x = box * std::exp2(-0.5 * j);
    if (x < spacing) fiber.push_back({level_radius(k), kHalfPi + x});
  }
  return fiber;
}

LevelNoise level_noise(int k, const Params& p, const StepDownConfig& cfg,
                       const FiberRunOptions& opt, std::uint64_t seed, std::int64_t j) {
  const LevelGrid g = level_grid(k, p, cfg, opt.h_max, opt.min_steps);
  const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
  LevelNoise noise{BrownianPath(s, g.h, static_cast<double>(g.theta_steps) * g.h), std::nullopt};
  if (g.tail_steps > 0) {
    noise.tail.emplace(derive_seed(s, 0x7a11), g.tail_h, static_cast<double>(g.tail_steps) * g.tail_h);
  }
  return noise;
}

FiberRun run_fiber(int k, const Params& p, const StepDownConfig& cfg,
                   const IntegratorControls& ctrl, const LevelNoise& noise,
                   const FiberRunOptions& opt) {
  cfg.validate();
  const LevelGrid g = level_grid(k, p, cfg, opt.h_max, opt.min_steps);
  const BrownianPath& path = noise.flow;
  if (std::abs(path.step() - g.h) > 1e-12 * g.h || path.size() < g.theta_steps) {
    throw Error(ErrorKind::InvalidArgument, "path does not carry the level grid");
  }
  FiberRun run;
  run.k = k;
  run.theta = g.theta;
  run.ascent = travel_time_up(level_radius(k), level_radius(k + 1), p.v);
  std::tie(run.bbm_upper, run.bbm_lower) = bbm_events(k, p, cfg, g, noise);

  const double R_up = level_radius(k + 1);
  const double R_down = level_radius(k - 1);
  const double R_low = level_radius(k - 2);
  const double angle_gate = kHalfPi - cfg.eps;
  IntegratorControls ctrl_k = ctrl.with_grid(g.h);
  ctrl_k.r_explode = std::max(ctrl_k.r_explode, std::ldexp(1.0, k + 27));
  FlowEnsemble ens(p, ctrl_k, level_fiber(k, p, opt));
  const std::size_t N = ens.size();
  std::vector<double> box_exit(N, kNever), below(N, kNever);
  std::size_t box_open = N, below_open = N;

  auto observe = [&](double t) {
    const auto states = ens.states();
    for (std::size_t i = 0; i < N; ++i) {
      if (ens.exploded(i)) continue;
      const State& s = states[i];
      if (box_exit[i] == kNever && (s.r <= R_low || s.phi <= angle_gate)) {
        box_exit[i] = t;
        --box_open;
      }
      if (below[i] == kNever && s.r <= R_low) {
        below[i] = t;
        --below_open;
      }
    }
    const double sup = ens.sup_radius();
    if (run.tau_down == kNever && sup <= R_down) run.tau_down = t;
    if (run.tau_down_guarded == kNever && sup > 2.0 && sup <= R_down) run.tau_down_guarded = t;
  };

  observe(0.0);
  for (std::size_t i = 0; i < g.theta_steps; ++i) {
    const NoiseInterval noise = noise_interval(path, i);
    const double t0 = static_cast<double>(i) * g.h;
    if (run.tau_up == kNever) {
      if (const auto off = ens.advance(noise, 0.0, noise.span, R_up)) {
        run.tau_up = t0 + *off;
        ens.advance(noise, *off, noise.span);
      }
    } else {
      ens.advance(noise, 0.0, noise.span);
    }
    observe(i + 1 == g.theta_steps ? g.theta : static_cast<double>(i + 1) * g.h);
    if (run.tau_up != kNever && box_open == 0 && below_open == 0) break;
  }
  if (box_open == 0) run.box_exit_sup = *std::max_element(box_exit.begin(), box_exit.end());
  if (below_open == 0) run.below_sup = *std::max_element(below.begin(), below.end());
  run.substeps = ens.substeps();
  return run;
}

double EventTally::freq(std::int64_t c, std::int64_t n) noexcept {
  return n > 0 ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
}

double EventTally::stderr_of(std::int64_t c, std::int64_t n) noexcept {
  if (n <= 0) return 0.0;
  const double q = freq(c, n);
  return std::sqrt(q * (1.0 - q) / static_cast<double>(n));
}

void EventTally::add(const FiberRun& run) {
  ++n;
  const bool a = run.A(), b = run.B(), bbm = run.BBM(), dd = run.D();
  A += a;
  B += b;
  BBM += bbm;
  D += dd;
  B_BBM += b && bbm;
  B_BBM_notA += b && bbm && !a;
  B_BBM_D += b && bbm && dd;
  up += !run.stage_down();
  hold_sum += run.stage_end();
  substeps += run.substeps;
}

void EventTally::merge(const EventTally& o) {
  n += o.n;
  A += o.A;
  B += o.B;
  BBM += o.BBM;
  D += o.D;
  B_BBM += o.B_BBM;
  B_BBM_notA += o.B_BBM_notA;
  B_BBM_D += o.B_BBM_D;
  up += o.up;
  hold_sum += o.hold_sum;
  failures += o.failures;
  substeps += o.substeps;
}

EventTally mc_event_Ak(int k, const Params& p, const StepDownConfig& cfg,
                       const IntegratorControls& ctrl, const FiberRunOptions& opt, std::int64_t n,
                       std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "mc_event_Ak needs k >= 2");
  if (opt.resolution < 64) throw Error(ErrorKind::InvalidArgument, "fiber resolution must be >= 64");
  p.validate();
  cfg.validate();
  EventTally tally;
  tally.k = k;
  for (std::int64_t j = 0; j < n; ++j) {
    try {
      tally.add(run_fiber(k, p, cfg, ctrl, level_noise(k, p, cfg, opt, seed, j), opt));
    } catch (const Error&) {
      ++tally.failures;
    }
  }
  return tally;
}

double ak_complement_bound(int k, const Params& p, double C_fit) {
  require_attractor(p);
  if (!(C_fit > 0.0)) throw Error(ErrorKind::DomainError, "C_fit must be positive");
  return C_fit * std::exp2(-k * p.alpha());
}

StepDownSweep stepdown_sweep(int k_lo, int k_hi, const Params& p, const StepDownConfig& cfg,
                             const IntegratorControls& ctrl, const FiberRunOptions& opt,
                             std::int64_t n, std::uint64_t seed) {
  require_attractor(p);
  if (k_lo < 2 || k_hi < k_lo) throw Error(ErrorKind::InvalidArgument, "need 2 <= k_lo <= k_hi");
  StepDownSweep sw;
  for (int k = k_lo; k <= k_hi; ++k) sw.rows.push_back(mc_event_Ak(k, p, cfg, ctrl, opt, n, seed));

  for (std::size_t i = 1; i < sw.rows.size(); ++i) {
    const auto& a = sw.rows[i - 1];
    const auto& b = sw.rows[i];
    const double se = std::hypot(a.P_A_stderr(), b.P_A_stderr());
    if (b.P_A() < a.P_A() - 2.0 * se) sw.monotone = false;
  }
  for (auto it = sw.rows.rbegin(); it != sw.rows.rend(); ++it) {
    if (it->B_BBM_notA != 0 || it->B_BBM_D != 0) break;
    sw.identity_threshold = it->k;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& row : sw.rows) {
    const double q = 1.0 - row.P_A();
    if (!(q > 0.0)) continue;
    const double x = row.k, y = std::log2(q);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m >= 2) {
    sw.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    // least C with C 2^{-k alpha} >= P(A_k^c) on the sweep
    for (const auto& row : sw.rows) {
      sw.C_fit = std::max(sw.C_fit, (1.0 - row.P_A()) * std::exp2(row.k * p.alpha()));
    }
  }
  return sw;
}

void write_stepdown_table(std::ostream& out, const StepDownSweep& sweep, const Params& p) {
  out << "k,n,P_Ak,stderr,P_Bk_c,P_BBMk_c,bound\n" << std::setprecision(17);
  for (const auto& row : sweep.rows) {
    const double bound = sweep.C_fit > 0.0 ? ak_complement_bound(row.k, p, sweep.C_fit) : 0.0;
    out << row.k << ',' << row.n << ',' << row.P_A() << ',' << row.P_A_stderr() << ','
        << 1.0 - EventTally::freq(row.B, row.n) << ',' << 1.0 - EventTally::freq(row.BBM, row.n)
        << ',' << bound << '\n';
  }
}

}  // namespace polar
