#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "polar/model.hpp"
#include "polar/sde.hpp"
#include "polar/stepdown.hpp"

namespace polar {

/// Birth-death semi-Markov process on {first, ..., first + size - 1}:
/// P(i, i+1) = p_i, P(i, max(i-1, first)) = 1 - p_i; the last state never moves up.
struct SemiMarkovSpec {
  int first = 2;
  std::vector<double> p;
  /// mean holding times
  std::vector<double> m;

  int last() const noexcept { return first + static_cast<int>(p.size()) - 1; }
  double up(int i) const;
  double hold(int i) const { return m.at(static_cast<std::size_t>(i - first)); }
  /// Throws InvalidArgument on sizes or ranges.
  void validate() const;
};

/// Probability vector over {first, ..., first + prob.size() - 1}.
struct Distribution {
  int first = 2;
  std::vector<double> prob;
  /// ||nu P - nu||_1 for the measure returned by stationary_nu
  double residual = 0.0;

  double at(int i) const noexcept;
  /// sum over states <= i
  double cdf(int i) const noexcept;
  /// sum over states >= i
  double tail(int i) const noexcept;
};

/// Lowest state of the recurrent class: the largest i > first with p_i = 1, else first.
int recurrent_floor(const SemiMarkovSpec& s);

/// Product-form invariant measure nu(n) ~ prod_{first <= i < n} p_i / (1 - p_{i+1}),
/// restricted to {recurrent_floor, ...}. Throws Divergence when the ratio at the
/// truncation edge, p_{last-1} / (1 - p_last) with the given p_last, is >= 1 while
/// the edge lies above the floor, and when the residual exceeds 1e-12.
Distribution stationary_nu(const SemiMarkovSpec& s);

/// mu(j) ~ nu(j) m(j).
Distribution stationary_mu(const SemiMarkovSpec& s);

struct LimitReport {
  std::vector<double> t;
  /// empirical law at each t, over the chain's states
  std::vector<std::vector<double>> law;
  std::vector<double> tv;
  /// sum_j sqrt(mu_j (1 - mu_j) / n) / 2, the scale of TV under pure sampling noise
  double noise_scale = 0.0;
};

/// n independent copies started at i0 with holding times uniform on (0, 2 m(i)];
/// compares the law at each t of t_grid with stationary_mu in total variation.
LimitReport semimarkov_limit_check(const SemiMarkovSpec& s, int i0, const std::vector<double>& t_grid,
                                   std::int64_t n, std::uint64_t seed);

/// Time-weighted occupation of one copy run on [0, horizon], holding times as in
/// semimarkov_limit_check.
Distribution single_path_occupation(const SemiMarkovSpec& s, int i0, double horizon, std::uint64_t seed);

/// 2^{-n^2 alpha / 2 + c n}. RegimeViolation if alpha <= 0.
double tail_bound_mu(int n, double alpha, double c);

/// sum_{j >= n0} tail_bound_mu(j, alpha, c), summed until the terms vanish.
double tail_bound_sum(int n0, double alpha, double c);

/// Smallest c with nu(n) <= tail_bound_mu(n, alpha, c) on the states of nu
/// (ignoring states of probability 0).
double fit_tail_constant(const Distribution& nu, double alpha);

struct UpProbability {
  int i = 0;
  std::int64_t n = 0;
  double p_hat = 0.0;
  double stderr_ = 0.0;
  double one_minus_PA = 0.0;
  double m_hat = 0.0;
};

/// p_i from the stages of the step-down tallies (same realizations as P(A_i)).
std::vector<UpProbability> up_probabilities(const std::vector<EventTally>& tallies);

std::vector<UpProbability> estimate_up_probabilities(int k_lo, int k_hi, const Params& p,
                                                     const StepDownConfig& cfg,
                                                     const IntegratorControls& ctrl,
                                                     const FiberRunOptions& opt, std::int64_t n,
                                                     std::uint64_t seed);

/// Spec on {2, ..., k_cap} from estimates covering 2..k_hi: beyond k_hi,
/// p_i = p_{k_hi} 2^{-alpha (i - k_hi)} and m(i) = theta_i; p_{k_cap} = 0.
SemiMarkovSpec spec_from_estimates(const std::vector<UpProbability>& est, const Params& p,
                                   const StepDownConfig& cfg, int k_cap = 64);

/// Jump path of the dominating process K_t driven by fibers I(K) on fresh noise
/// segments, with the original fiber I(k0) carried along on the same noise.
struct JumpPath {
  std::vector<double> tau{0.0};
  std::vector<int> K;
  /// +1 up, -1 down; entry 0 unused
  std::vector<int> direction{0};

  bool co_simulated = false;
  std::int64_t grid_checks = 0;
  std::int64_t grid_violations = 0;
  std::int64_t jump_violations = 0;
  /// max of (original fiber sup) / bound at grid times and at jumps
  double worst_grid_ratio = 0.0;
  double worst_jump_ratio = 0.0;
  /// max over stages of (tau^n - tau^{n-1}) / theta_{K_{tau^{n-1}}}
  double max_hold_ratio = 0.0;
  bool aborted = false;
  std::string diagnostic;

  std::size_t jumps() const noexcept { return tau.size() - 1; }
};

/// Relative slack in the domination checks: the located up-crossing leaves the
/// crossing point at R_{K+1} up to rounding.
inline constexpr double kDominationSlack = 1e-9;

/// Bisection steps on the initial angle when locating a stage's up-crossing
/// between points of the discretized fiber.
inline constexpr int kCrossingRefineDepth = 16;

/// Runs stages until tau >= horizon or max_stages stages are done.
JumpPath simulate_K(int k0, const Params& p, const StepDownConfig& cfg, const IntegratorControls& ctrl,
                    const FiberRunOptions& opt, double horizon, std::size_t max_stages,
                    std::uint64_t seed, bool co_simulate = true);

/// Time-weighted occupation of the levels over [0, tau_last].
Distribution occupation_fractions(const JumpPath& path);

/// Rows `i,p_hat,stderr,one_minus_PAk`.
void write_up_table(std::ostream& out, const std::vector<UpProbability>& est);

/// Rows `n,nu,mu,tail_bound` over the states of mu.
void write_measure_table(std::ostream& out, const Distribution& nu, const Distribution& mu,
                         double alpha, double c);

/// Rows `n,tau_n,K_n,direction`.
void write_jump_path(std::ostream& out, const JumpPath& path);

}  // namespace polar
