#include "polar/semimarkov.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>

#include "polar/error.hpp"

namespace polar {

double SemiMarkovSpec::up(int i) const {
  if (i == last()) return 0.0;
  return p.at(static_cast<std::size_t>(i - first));
}

void SemiMarkovSpec::validate() const {
  if (p.empty() || p.size() != m.size()) {
    throw Error(ErrorKind::InvalidArgument, "semi-Markov spec needs equal nonempty p and m");
  }
  if (first < 2) throw Error(ErrorKind::InvalidArgument, "states start at 2 or above");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "up-probability outside [0, 1]");
    }
    if (!(m[i] > 0.0) || !std::isfinite(m[i])) {
      throw Error(ErrorKind::InvalidArgument, "mean holding time must be positive");
    }
  }
}

double Distribution::at(int i) const noexcept {
  if (i < first || i >= first + static_cast<int>(prob.size())) return 0.0;
  return prob[static_cast<std::size_t>(i - first)];
}

double Distribution::cdf(int i) const noexcept {
  double s = 0.0;
  for (int j = first; j <= i && j < first + static_cast<int>(prob.size()); ++j) s += at(j);
  return s;
}

double Distribution::tail(int i) const noexcept {
  double s = 0.0;
  for (int j = std::max(i, first); j < first + static_cast<int>(prob.size()); ++j) s += at(j);
  return s;
}

int recurrent_floor(const SemiMarkovSpec& s) {
  s.validate();
  int floor = s.first;
  for (int i = s.first + 1; i < s.last(); ++i) {
    if (s.up(i) == 1.0) floor = i;
  }
  return floor;
}

Distribution stationary_nu(const SemiMarkovSpec& s) {
  const int lo = recurrent_floor(s);
  const int hi = s.last();
  if (hi - 1 > lo) {
    const double p_edge = s.p.back();
    const double q_edge = p_edge >= 1.0 ? kNever : s.up(hi - 1) / (1.0 - p_edge);
    if (!(q_edge < 1.0)) {
      throw Error(ErrorKind::Divergence, "ratio p_n / (1 - p_{n+1}) >= 1 at the truncation edge");
    }
  }
  const auto N = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> logw(N, 0.0);
  for (std::size_t j = 1; j < N; ++j) {
    const int n = lo + static_cast<int>(j);
    const double num = s.up(n - 1), den = 1.0 - s.up(n);
    logw[j] = num > 0.0 ? logw[j - 1] + std::log(num) - std::log(den) : -kNever;
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  Distribution nu;
  nu.first = lo;
  nu.prob.resize(N);
  double z = 0.0;
  for (std::size_t j = 0; j < N; ++j) z += nu.prob[j] = std::exp(logw[j] - top);
  for (double& x : nu.prob) x /= z;

  std::vector<double> next(N, 0.0);
  for (std::size_t j = 0; j < N; ++j) {
    const int n = lo + static_cast<int>(j);
    const double u = s.up(n);
    if (u > 0.0) next[j + 1] += nu.prob[j] * u;
    next[j == 0 ? 0 : j - 1] += nu.prob[j] * (1.0 - u);
  }
  for (std::size_t j = 0; j < N; ++j) nu.residual += std::abs(next[j] - nu.prob[j]);
  if (!(nu.residual <= 1e-12)) {
    throw Error(ErrorKind::Divergence, "invariant measure residual above 1e-12");
  }
  return nu;
}

Distribution stationary_mu(const SemiMarkovSpec& s) {
  Distribution mu = stationary_nu(s);
  double z = 0.0;
  for (std::size_t j = 0; j < mu.prob.size(); ++j) {
    z += mu.prob[j] *= s.hold(mu.first + static_cast<int>(j));
  }
  for (double& x : mu.prob) x /= z;
  return mu;
}

LimitReport semimarkov_limit_check(const SemiMarkovSpec& s, int i0, const std::vector<double>& t_grid,
                                   std::int64_t n, std::uint64_t seed) {
  s.validate();
  if (i0 < s.first || i0 > s.last()) throw Error(ErrorKind::InvalidArgument, "start state outside the chain");
  if (n <= 0 || t_grid.empty() || !std::is_sorted(t_grid.begin(), t_grid.end()) || t_grid.front() < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "need n > 0 and a sorted nonnegative time grid");
  }
  const Distribution mu = stationary_mu(s);
  const std::size_t S = s.p.size();
  LimitReport rep;
  rep.t = t_grid;
  rep.law.assign(t_grid.size(), std::vector<double>(S, 0.0));

  for (std::int64_t c = 0; c < n; ++c) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int state = i0;
    double t = 0.0;
    std::size_t next = 0;
    while (next < t_grid.size()) {
      const double end = t + 2.0 * s.hold(state) * (1.0 - unit(rng));
      while (next < t_grid.size() && t_grid[next] < end) {
        rep.law[next][static_cast<std::size_t>(state - s.first)] += 1.0;
        ++next;
      }
      t = end;
      state = unit(rng) < s.up(state) ? state + 1 : std::max(state - 1, s.first);
    }
  }
  for (auto& law : rep.law) {
    for (double& x : law) x /= static_cast<double>(n);
  }
  for (const auto& law : rep.law) {
    double tv = 0.0;
    for (std::size_t j = 0; j < S; ++j) tv += std::abs(law[j] - mu.at(s.first + static_cast<int>(j)));
    rep.tv.push_back(0.5 * tv);
  }
  for (double q : mu.prob) rep.noise_scale += 0.5 * std::sqrt(q * (1.0 - q) / static_cast<double>(n));
  return rep;
}

Distribution single_path_occupation(const SemiMarkovSpec& s, int i0, double horizon, std::uint64_t seed) {
  s.validate();
  if (i0 < s.first || i0 > s.last()) throw Error(ErrorKind::InvalidArgument, "start state outside the chain");
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
  Distribution occ;
  occ.first = s.first;
  occ.prob.assign(s.p.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int state = i0;
  for (double t = 0.0; t < horizon;) {
    const double end = std::min(horizon, t + 2.0 * s.hold(state) * (1.0 - unit(rng)));
    occ.prob[static_cast<std::size_t>(state - s.first)] += end - t;
    t = end;
    state = unit(rng) < s.up(state) ? state + 1 : std::max(state - 1, s.first);
  }
  for (double& x : occ.prob) x /= horizon;
  return occ;
}

double tail_bound_mu(int n, double alpha, double c) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::RegimeViolation, "tail bound needs alpha > 0");
  const double x = static_cast<double>(n);
  return std::exp2(-0.5 * x * x * alpha + c * x);
}

double tail_bound_sum(int n0, double alpha, double c) {
  double sum = 0.0;
  for (int j = n0;; ++j) {
    const double term = tail_bound_mu(j, alpha, c);
    sum += term;
    // past the peak of the exponent the terms shrink faster than geometrically
    if ((j + 0.5) * alpha > c && term <= 1e-17 * sum) break;
    if (term == 0.0 && j * alpha > c) break;
  }
  return sum;
}

double fit_tail_constant(const Distribution& nu, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::RegimeViolation, "tail bound needs alpha > 0");
  double c = -kNever;
  for (std::size_t j = 0; j < nu.prob.size(); ++j) {
    if (!(nu.prob[j] > 0.0)) continue;
    const double x = nu.first + static_cast<double>(j);
    c = std::max(c, (std::log2(nu.prob[j]) + 0.5 * x * x * alpha) / x);
  }
  return c;
}

std::vector<UpProbability> up_probabilities(const std::vector<EventTally>& tallies) {
  std::vector<UpProbability> out;
  for (const auto& t : tallies) {
    UpProbability u;
    u.i = t.k;
    u.n = t.n;
    u.p_hat = t.P_up();
    u.stderr_ = t.P_up_stderr();
    u.one_minus_PA = 1.0 - t.P_A();
    u.m_hat = t.mean_hold();
    out.push_back(u);
  }
  return out;
}

std::vector<UpProbability> estimate_up_probabilities(int k_lo, int k_hi, const Params& p,
                                                     const StepDownConfig& cfg,
                                                     const IntegratorControls& ctrl,
                                                     const FiberRunOptions& opt, std::int64_t n,
                                                     std::uint64_t seed) {
  if (k_lo < 2 || k_hi < k_lo) throw Error(ErrorKind::InvalidArgument, "need 2 <= k_lo <= k_hi");
  std::vector<EventTally> rows;
  for (int k = k_lo; k <= k_hi; ++k) rows.push_back(mc_event_Ak(k, p, cfg, ctrl, opt, n, seed));
  return up_probabilities(rows);
}

SemiMarkovSpec spec_from_estimates(const std::vector<UpProbability>& est, const Params& p,
                                   const StepDownConfig& cfg, int k_cap) {
  if (est.empty()) throw Error(ErrorKind::InvalidArgument, "no estimates");
  for (std::size_t j = 1; j < est.size(); ++j) {
    if (est[j].i != est[j - 1].i + 1) throw Error(ErrorKind::InvalidArgument, "estimates must cover consecutive levels");
  }
  const int k_hi = est.back().i;
  if (k_cap <= k_hi) throw Error(ErrorKind::InvalidArgument, "k_cap must exceed the estimated range");
  SemiMarkovSpec s;
  s.first = est.front().i;
  for (const auto& e : est) {
    s.p.push_back(e.p_hat);
    s.m.push_back(e.m_hat > 0.0 ? e.m_hat : theta_k(e.i, p, cfg));
  }
  for (int i = k_hi + 1; i <= k_cap; ++i) {
    s.p.push_back(i == k_cap ? 0.0 : est.back().p_hat * std::exp2(-p.alpha() * (i - k_hi)));
    s.m.push_back(theta_k(i, p, cfg));
  }
  s.validate();
  return s;
}

namespace {

// Earliest time in [0, until] at which a point of `initial` reaches R on the stage noise.
std::optional<double> first_crossing(const Params& p, const IntegratorControls& ck, const LevelGrid& g,
                                     const BrownianPath& noise, std::vector<State> initial, double R,
                                     double until) {
  FlowEnsemble e(p, ck, std::move(initial));
  for (std::size_t i = 0; i < g.theta_steps; ++i) {
    const double t0 = static_cast<double>(i) * g.h;
    if (t0 >= until) break;
    const NoiseInterval ni = noise_interval(noise, i);
    if (const auto off = e.advance(ni, 0.0, std::min(ni.span, until - t0), R)) return t0 + *off;
  }
  return std::nullopt;
}

// Bisects the initial angle around the net point that crossed first; a point between
// net points can reach R_up sooner than any of them.
double refine_up_crossing(const Params& p, const IntegratorControls& ck, const LevelGrid& g,
                          const BrownianPath& noise, const std::vector<State>& net,
                          const FlowEnsemble& stage, double R_up, double hold) {
  const auto st = stage.states();
  const std::size_t q = static_cast<std::size_t>(
      std::max_element(st.begin(), st.end(), [](const State& a, const State& b) { return a.r < b.r; }) - st.begin());
  std::vector<double> angles;
  for (const State& z : net) angles.push_back(z.phi);
  std::sort(angles.begin(), angles.end());
  double a = net[q].phi;
  const auto it = std::lower_bound(angles.begin(), angles.end(), a);
  double lo = it == angles.begin() ? 0.0 : *std::prev(it);
  double hi = std::next(it) == angles.end() ? kPi : *std::next(it);
  const double r0 = net[q].r;
  for (int d = 0; d < kCrossingRefineDepth; ++d) {
    const double m1 = 0.5 * (lo + a), m2 = 0.5 * (a + hi);
    const auto left = first_crossing(p, ck, g, noise, {{r0, m1}}, R_up, hold);
    const auto right = first_crossing(p, ck, g, noise, {{r0, m2}}, R_up, hold);
    const bool take_left = left && (!right || *left <= *right);
    if (take_left && *left < hold) {
      hold = *left;
      hi = a;
      a = m1;
    } else if (right && *right < hold) {
      hold = *right;
      lo = a;
      a = m2;
    } else {
      lo = m1;
      hi = m2;
    }
  }
  return hold;
}

}  // namespace

JumpPath simulate_K(int k0, const Params& p, const StepDownConfig& cfg, const IntegratorControls& ctrl,
                    const FiberRunOptions& opt, double horizon, std::size_t max_stages,
                    std::uint64_t seed, bool co_simulate) {
  p.validate();
  cfg.validate();
  if (k0 < 2) throw Error(ErrorKind::InvalidArgument, "simulate_K needs k0 >= 2");
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
  if (opt.resolution < 64) throw Error(ErrorKind::InvalidArgument, "fiber resolution must be >= 64");

  JumpPath path;
  path.K.push_back(k0);
  path.co_simulated = co_simulate;
  std::vector<State> passenger;
  if (co_simulate) passenger = level_fiber(k0, p, opt);

  auto check = [&](const FlowEnsemble& ens, double bound, bool at_jump) {
    const double ratio = ens.sup_radius() / bound;
    const bool bad = !(ratio <= 1.0 + kDominationSlack);
    if (at_jump) {
      path.worst_jump_ratio = std::max(path.worst_jump_ratio, ratio);
      path.jump_violations += bad;
    } else {
      path.worst_grid_ratio = std::max(path.worst_grid_ratio, ratio);
      path.grid_violations += bad;
      ++path.grid_checks;
    }
  };

  double t = 0.0;
  int K = k0;
  for (std::size_t n = 1; n <= max_stages && t < horizon; ++n) {
    try {
      const LevelGrid g = level_grid(K, p, cfg, opt.h_max, opt.min_steps);
      const LevelNoise noise = level_noise(K, p, cfg, opt, seed, static_cast<std::int64_t>(n));
      IntegratorControls ck = ctrl.with_grid(g.h);
      ck.r_explode = std::max(ck.r_explode, std::ldexp(1.0, K + 27));
      const std::vector<State> net = level_fiber(K, p, opt);
      FlowEnsemble stage(p, ck, net);

      const double R_up = level_radius(K + 1);
      const double R_down = level_radius(K - 1);
      double hold = g.theta;
      bool down = false, up_crossed = false;
      for (std::size_t i = 0; i < g.theta_steps; ++i) {
        const NoiseInterval ni = noise_interval(noise.flow, i);
        const double t0 = static_cast<double>(i) * g.h;
        if (const auto off = stage.advance(ni, 0.0, ni.span, R_up)) {
          hold = t0 + *off;
          up_crossed = true;
          break;
        }
        const double t1 = i + 1 == g.theta_steps ? g.theta : static_cast<double>(i + 1) * g.h;
        const double sup = stage.sup_radius();
        if (sup > 2.0 && sup <= R_down) {
          hold = t1;
          down = true;
          break;
        }
      }
      if (up_crossed) hold = refine_up_crossing(p, ck, g, noise.flow, net, stage, R_up, hold);

      if (co_simulate) {
        FlowEnsemble pass(p, ck, passenger);
        for (std::size_t i = 0; i < g.theta_steps; ++i) {
          const NoiseInterval ni = noise_interval(noise.flow, i);
          const double t0 = static_cast<double>(i) * g.h;
          const bool last = i + 1 == g.theta_steps;
          const double t1 = last ? g.theta : static_cast<double>(i + 1) * g.h;
          if (hold < t1) {
            if (hold > t0) pass.advance(ni, 0.0, hold - t0);
            break;
          }
          pass.advance(ni, 0.0, ni.span);
          if (t1 == hold) break;
          check(pass, R_up, false);
        }
        check(pass, level_radius(down ? K - 1 : K + 1), true);
        passenger.assign(pass.states().begin(), pass.states().end());
      }

      K += down ? -1 : 1;
      t += hold;
      path.tau.push_back(t);
      path.K.push_back(K);
      path.direction.push_back(down ? -1 : 1);
      path.max_hold_ratio = std::max(path.max_hold_ratio, hold / g.theta);
    } catch (const Error& e) {
      path.aborted = true;
      path.diagnostic = e.what();
      break;
    }
  }
  return path;
}

Distribution occupation_fractions(const JumpPath& path) {
  Distribution occ;
  if (path.jumps() == 0) return occ;
  const auto [lo, hi] = std::minmax_element(path.K.begin(), path.K.end() - 1);
  occ.first = *lo;
  occ.prob.assign(static_cast<std::size_t>(*hi - *lo + 1), 0.0);
  for (std::size_t n = 1; n < path.tau.size(); ++n) {
    occ.prob[static_cast<std::size_t>(path.K[n - 1] - *lo)] += path.tau[n] - path.tau[n - 1];
  }
  for (double& x : occ.prob) x /= path.tau.back();
  return occ;
}

void write_up_table(std::ostream& out, const std::vector<UpProbability>& est) {
  out << "i,p_hat,stderr,one_minus_PAk\n" << std::setprecision(17);
  for (const auto& e : est) {
    out << e.i << ',' << e.p_hat << ',' << e.stderr_ << ',' << e.one_minus_PA << '\n';
  }
}

void write_measure_table(std::ostream& out, const Distribution& nu, const Distribution& mu,
                         double alpha, double c) {
  out << "n,nu,mu,tail_bound\n" << std::setprecision(17);
  for (std::size_t j = 0; j < mu.prob.size(); ++j) {
    const int n = mu.first + static_cast<int>(j);
    out << n << ',' << nu.at(n) << ',' << mu.prob[j] << ',' << tail_bound_mu(n, alpha, c) << '\n';
  }
}

void write_jump_path(std::ostream& out, const JumpPath& path) {
  out << "n,tau_n,K_n,direction\n" << std::setprecision(17);
  for (std::size_t n = 0; n < path.tau.size(); ++n) {
    out << n << ',' << path.tau[n] << ',' << path.K[n] << ',' << path.direction[n] << '\n';
  }
}

}  // namespace polar
