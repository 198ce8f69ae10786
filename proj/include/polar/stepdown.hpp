#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "polar/crossing.hpp"
#include "polar/model.hpp"
#include "polar/sde.hpp"

namespace polar {

struct StepDownConfig {
  double eps = 0.3;
  double eps_tilde = 0.1;
  double T = 1.0;
  double d = 0.1;

  /// Throws DomainError unless 1 > eps > eps_tilde > 0, T >= 1, d > 0.
  void validate() const;
  /// cos^2(pi/2 - eps + eps_tilde)
  double c_tilde() const noexcept;
  /// (c_tilde/2)^{1/(v-w)}
  double rho0(const Params& p) const noexcept;
};

/// d(r, R) = (r^{1-v} - R^{1-v}) / (v - 1): lower bound for the radial ascent time.
double travel_time_up(double r, double R, double v);

/// 2 (r^{1-w} - R^{1-w}) / (c (w - 1)): time for dr = -(c/2) r^w dt to go from R
/// down to r, the descent bound in the good region when c = c~.
double travel_time_down(double R, double r, double c, double w);

/// d(R_k, R_{k+1}) + travel_time_down(R_{k+1}, R_{k-2}, c~, w), k >= 2.
double theta_k(int k, const Params& p, const StepDownConfig& cfg);

/// travel_time_down(R_k, R_{k-2}, 2, w) + d(R_{k-2}, R_{k-1}): the same bound with
/// descent rate r^w.
double theta_tilde(int k, const Params& p, const StepDownConfig& cfg);

/// max of theta_k over 2 <= k <= k_max (theta_k is eventually decreasing).
double theta_sup(const Params& p, const StepDownConfig& cfg, int k_max = 200);

/// (4^{v-1} - 2^{v-1} - 1 + 2^{1-v}) / (v - 1).
double beta_v(double v);

/// (4 sqrt2 / sigma^2) e^T r^2 e^{-2 eps r / sigma^2}, the bound on
/// P(sup_{0<=s<=t<=T} sigma(W_t - W_s) - r(t - s) > eps). Needs r >= sqrt2 sigma.
double bbm_tail_bound(double r, double eps, double sigma, double T);

/// E exp(-beta T_eps), T_eps the first time the drawdown of sigma W_t + r t exceeds eps.
double laplace_T_eps(double beta, double r, double sigma, double eps);

/// Monte Carlo E exp(-beta T_eps). Grid of step h; the running maximum includes the
/// exact bridge maximum of every step and the barrier is moved by 0.5826 sigma sqrt(h)
/// to correct for discrete monitoring of the minimum.
McEstimate mc_laplace_T_eps(double beta, double r, double sigma, double eps, std::int64_t n,
                            std::uint64_t seed, double h = 5e-4);

/// Monte Carlo frequency of {sup_{0<=s<=t<=T} sigma(W_t - W_s) - r(t - s) > eps},
/// which is {T_eps < T} for the drawdown of sigma W' + r t; same scheme as above.
McEstimate mc_drift_sup_event(double r, double eps, double sigma, double T, std::int64_t n,
                              std::uint64_t seed, double h = 1e-3);

/// Grid for level k: theta_k is split into max(min_steps, ceil(theta_k / h_max))
/// steps. When theta_k < T the BBM window continues on [theta_k, T] with steps of
/// at most h_max.
struct LevelGrid {
  double theta = 0.0;
  double h = 0.0;
  std::size_t theta_steps = 0;
  /// fine steps inside [0, T] when theta_k >= T
  std::size_t T_steps = 0;
  double tail_h = 0.0;
  std::size_t tail_steps = 0;
};

LevelGrid level_grid(int k, const Params& p, const StepDownConfig& cfg, double h_max,
                     std::size_t min_steps);

struct FiberRunOptions {
  std::size_t resolution = 256;
  /// half-octaves of refinement below the box width Phi_k - pi/2, see level_fiber
  int refine_below_box = 12;
  double h_max = 1e-3;
  std::size_t min_steps = 512;
};

inline constexpr double kNever = std::numeric_limits<double>::infinity();

/// Everything observed for one noise realization of the fiber I(k) up to theta_k.
/// Times are +infinity when the event did not happen by theta_k.
struct FiberRun {
  int k = 0;
  double theta = 0.0;
  /// d(R_k, R_{k+1})
  double ascent = 0.0;
  /// first time sup_z r >= R_{k+1}, located inside the substep
  double tau_up = kNever;
  /// first grid time sup_z r <= R_{k-1}
  double tau_down = kNever;
  /// first grid time 2 < sup_z r <= R_{k-1}
  double tau_down_guarded = kNever;
  /// sup_z of the exit time from [R_{k-2}, inf) x [pi/2 - eps, inf)
  double box_exit_sup = kNever;
  /// sup_z of the first time r <= R_{k-2}
  double below_sup = kNever;
  bool bbm_upper = false;
  bool bbm_lower = false;
  std::int64_t substeps = 0;
  int failures = 0;

  bool A() const noexcept { return tau_down <= theta && theta <= tau_up; }
  bool B() const noexcept { return box_exit_sup <= ascent; }
  bool BBM() const noexcept { return bbm_upper && bbm_lower; }
  bool D() const noexcept { return below_sup > theta; }
  /// stage of the dominating jump process: down iff the guarded descent comes first
  bool stage_down() const noexcept { return tau_down_guarded <= std::min(tau_up, theta); }
  double stage_end() const noexcept { return std::min({tau_down_guarded, tau_up, theta}); }
};

/// Discretized fiber I(k): angles pi (j + 1) / resolution plus the points
/// pi/2 + x_k 2^{-j/2}, x_k = Phi_k - pi/2, from the grid spacing down to
/// x_k 2^{-refine_below_box/2}. The refinement looks the same at every level
/// relative to the blow-up box.
std::vector<State> level_fiber(int k, const Params& p, const FiberRunOptions& opt);

/// Noise of one realization at level k: the flow grid over [0, theta_k] and, when
/// theta_k < T, a coarser grid over [theta_k, T] used only by the BBM events.
struct LevelNoise {
  BrownianPath flow;
  std::optional<BrownianPath> tail;
};

/// Fresh noise for realization j of level k.
LevelNoise level_noise(int k, const Params& p, const StepDownConfig& cfg,
                       const FiberRunOptions& opt, std::uint64_t seed, std::int64_t j);

/// BBM_k on the grid increments over [0, T]: the drawup of sigma W - (c~/2) R_{k-2}^gamma t
/// stays <= eps~/2 and the drawdown of sigma W + R_{k+1}^gamma t stays <= d.
std::pair<bool, bool> bbm_events(int k, const Params& p, const StepDownConfig& cfg,
                                 const LevelGrid& g, const LevelNoise& noise);

/// Simulates the discretized fiber I(k) up to theta_k. The explosion proxy is raised
/// to at least 2^{k+27} so that it stays far above R_{k+1}.
FiberRun run_fiber(int k, const Params& p, const StepDownConfig& cfg,
                   const IntegratorControls& ctrl, const LevelNoise& noise,
                   const FiberRunOptions& opt);

struct EventTally {
  int k = 0;
  std::int64_t n = 0;
  std::int64_t A = 0;
  std::int64_t B = 0;
  std::int64_t BBM = 0;
  std::int64_t D = 0;
  std::int64_t B_BBM = 0;
  std::int64_t B_BBM_notA = 0;
  std::int64_t B_BBM_D = 0;
  /// stages of the jump process started at level k
  std::int64_t up = 0;
  double hold_sum = 0.0;
  std::int64_t failures = 0;
  std::int64_t substeps = 0;

  static double freq(std::int64_t c, std::int64_t n) noexcept;
  static double stderr_of(std::int64_t c, std::int64_t n) noexcept;
  double P_A() const noexcept { return freq(A, n); }
  double P_A_stderr() const noexcept { return stderr_of(A, n); }
  double P_up() const noexcept { return freq(up, n); }
  double P_up_stderr() const noexcept { return stderr_of(up, n); }
  double mean_hold() const noexcept { return n > 0 ? hold_sum / static_cast<double>(n) : 0.0; }

  void add(const FiberRun& run);
  void merge(const EventTally& other);
};

EventTally mc_event_Ak(int k, const Params& p, const StepDownConfig& cfg,
                       const IntegratorControls& ctrl, const FiberRunOptions& opt, std::int64_t n,
                       std::uint64_t seed);

/// C_fit 2^{-k alpha}; RegimeViolation outside the attractor regime.
double ak_complement_bound(int k, const Params& p, double C_fit);

struct StepDownSweep {
  std::vector<EventTally> rows;
  /// smallest k of the sweep from which both set identities hold at every larger k
  std::optional<int> identity_threshold;
  /// least-squares slope of log2 P(A_k^c) against k (rows with P(A_k^c) > 0)
  double slope = 0.0;
  double C_fit = 0.0;
  /// P(A_k) nondecreasing within 2 stderr between consecutive rows
  bool monotone = true;
};

StepDownSweep stepdown_sweep(int k_lo, int k_hi, const Params& p, const StepDownConfig& cfg,
                             const IntegratorControls& ctrl, const FiberRunOptions& opt,
                             std::int64_t n, std::uint64_t seed);

/// Rows `k,n,P_Ak,stderr,P_Bk_c,P_BBMk_c,bound`.
void write_stepdown_table(std::ostream& out, const StepDownSweep& sweep, const Params& p);

}  // namespace polar
