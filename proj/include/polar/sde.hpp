#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polar/brownian.hpp"
#include "polar/error.hpp"
#include "polar/model.hpp"

namespace polar {

/// How the explicit step shrinks with the local state.
enum class StepRule {
  /// dt = h0 / (1 + L(s) / L0), L(s) a bound on the local Jacobian of the drift.
  Stiffness,
  /// dt = h0 / (1 + (r / rho)^max(w, v)).
  PowerLaw,
};

struct IntegratorControls {
  double h0 = 1e-3;
  double r_explode = 1e8;
  StepRule rule = StepRule::Stiffness;
  double stiffness_scale = 100.0;  // L0
  double rho = 32.0;
  std::int64_t max_steps = 200'000'000;
  double r_min = 1e-6;
  /// Bridge cells are split until shorter than this many explicit steps.
  double refine_ratio = 2.0;
  unsigned max_depth = 52;

  void validate() const;

  /// Same controls on a grid of step h, keeping the product h0 * L0 (the largest
  /// admissible dt * L) unchanged.
  IntegratorControls with_grid(double h) const;
};

/// Explicit step admissible at state s.
double local_step(const State& s, const Params& p, const IntegratorControls& ctrl) noexcept;

/// Result of advancing one state through (part of) a grid interval.
struct IntervalOutcome {
  std::int64_t substeps = 0;
  /// Offset inside the interval at which r first reached r_explode; the state is
  /// left there.
  std::optional<double> blowup_offset;
  /// Offset at which r first reached the watched radius (linear in the last
  /// explicit substep).
  std::optional<double> crossing_offset;
};

/// Advances a state through a grid interval. The Brownian path inside the
/// interval is refined by dyadic bridge sampling until each cell is at most
/// `refine_ratio` explicit steps long; on each cell the noise is linear and the
/// random ODE is integrated with explicit Euler substeps. When one substep covers
/// the interval this is exactly Euler-Maruyama. All states driven by the same
/// NoiseInterval see the same bridge values.
class Stepper {
 public:
  Stepper(const Params& p, const IntegratorControls& ctrl);

  /// Moves `s` from offset `from` to offset `to` (0 <= from <= to <= span).
  IntervalOutcome advance(State& s, const NoiseInterval& noise, double from, double to,
                          std::optional<double> watch = std::nullopt) const;

  IntervalOutcome advance(State& s, const NoiseInterval& noise) const {
    return advance(s, noise, 0.0, noise.span);
  }

  const Params& params() const noexcept { return params_; }
  const IntegratorControls& controls() const noexcept { return ctrl_; }

 private:
  void segment(State& s, double from, double to, double rate, const std::optional<double>& watch,
               IntervalOutcome& out) const;

  Params params_;
  IntegratorControls ctrl_;
};

enum class Termination { HorizonReached, BlowUpProxy, StopTriggered, Failed };

std::string_view to_string(Termination t) noexcept;

/// Threshold conditions checked at grid times (on the unwrapped angle).
struct StopCondition {
  enum class Kind { RadiusBelow, RadiusAbove, AngleBelow, AngleAbove };
  Kind kind = Kind::RadiusBelow;
  double level = 0.0;
  std::string label;

  bool holds(const State& s) const noexcept;
};

struct Sample {
  double t = 0.0;
  State state;
};

struct Trajectory {
  std::vector<Sample> samples;
  Termination termination = Termination::HorizonReached;
  /// Time of the last sample; for BlowUpProxy the substep time at which r
  /// first reached r_explode.
  double end_time = 0.0;
  std::string stop_label;
  std::int64_t substeps = 0;

  const State& final_state() const { return samples.back().state; }
};

/// Deterministic (sigma = 0) integration on the grid of step ctrl.h0.
/// Throws MaxStepsExceeded when the step budget runs out.
Trajectory integrate_det(State s0, const Params& p, const IntegratorControls& ctrl, double t_max);

/// Stochastic integration driven by `path` from grid time t_start to t_max.
/// Stop conditions are tested at every grid time (including t_start).
/// Throws PathExhausted if t_max exceeds the path horizon and MaxStepsExceeded
/// when the step budget runs out.
Trajectory integrate_sde(State s0, const Params& p, const BrownianPath& path,
                         const IntegratorControls& ctrl, double t_max,
                         std::span<const StopCondition> stops = {}, double t_start = 0.0);

struct FlowPoint {
  State state;
  Termination termination = Termination::HorizonReached;
  double end_time = 0.0;
  std::optional<ErrorKind> failure;
};

/// Applies the flow over [0, t] to every initial state with the same noise.
/// Errors are recorded per point; the batch always completes.
std::vector<FlowPoint> flow_map(std::span<const State> initial, const Params& p,
                                const BrownianPath& path, const IntegratorControls& ctrl,
                                double t);

/// Discretized fiber {radius} x (0, pi]: angles pi (j + 1) / resolution, plus
/// `refine` points accumulating at pi/2 from the right.
std::vector<State> make_fiber(double radius, std::size_t resolution, std::size_t refine = 0);

/// A set of states carried by one noise realization, advanced interval by
/// interval. Points that reach r_explode are frozen there.
class FlowEnsemble {
 public:
  FlowEnsemble(const Params& p, const IntegratorControls& ctrl, std::vector<State> initial);

  /// Advances every live point from offset `from` to `to` of a grid interval.
  /// With `watch`, stops all points at the earliest offset where some point
  /// reaches that radius and returns it.
  std::optional<double> advance(const NoiseInterval& noise, double from, double to,
                                std::optional<double> watch = std::nullopt);

  std::span<const State> states() const noexcept { return states_; }
  /// Largest radius over the ensemble (infinite once a point exploded).
  double sup_radius() const noexcept;
  bool exploded(std::size_t i) const { return exploded_[i] != 0; }
  bool any_exploded() const noexcept;
  std::int64_t substeps() const noexcept { return substeps_; }
  std::size_t size() const noexcept { return states_.size(); }

 private:
  Stepper stepper_;
  std::vector<State> states_;
  std::vector<char> exploded_;
  std::int64_t substeps_ = 0;
};

/// CSV with header `t,r,phi_canonical,phi_unwrapped`.
void write_csv(std::ostream& out, const Trajectory& traj);

}  // namespace polar
