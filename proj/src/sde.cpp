#include "polar/sde.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace polar {

void IntegratorControls::validate() const {
  if (!(h0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "h0 must be positive");
  if (!(r_explode > 1.0)) throw Error(ErrorKind::InvalidArgument, "r_explode must exceed 1");
  if (!(stiffness_scale > 0.0) || !(rho > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "step-shrink scales must be positive");
  }
  if (!(refine_ratio >= 1.0)) throw Error(ErrorKind::InvalidArgument, "refine_ratio must be at least 1");
  if (max_steps <= 0) throw Error(ErrorKind::InvalidArgument, "max_steps must be positive");
  if (!(r_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "r_min must be positive");
}

IntegratorControls IntegratorControls::with_grid(double h) const {
  IntegratorControls out = *this;
  out.stiffness_scale = stiffness_scale * h0 / h;
  out.h0 = h;
  return out;
}

namespace {

struct Local {
  double dt;
  Velocity vel;
};

// Step and drift from one evaluation of the powers and trig functions.
Local evaluate(const State& s, const Params& p, const IntegratorControls& ctrl) noexcept {
  const double sn = std::sin(s.phi);
  const double c = std::cos(s.phi);
  const double c2 = c * c;
  const double lr = std::log(s.r);
  const double rv = std::exp(p.v * lr);
  const double rw = std::exp(p.w * lr);
  const double rg = std::exp(p.gamma * lr);
  Local out{};
  out.vel = {-rw * c2 + rv, -rg * c2};
  if (ctrl.rule == StepRule::PowerLaw) {
    out.dt = ctrl.h0 / (1.0 + std::pow(s.r / ctrl.rho, std::max(p.w, p.v)));
  } else {
    const double lipschitz = (p.v * rv + p.w * rw * c2) / s.r + rg * std::abs(2.0 * sn * c);
    out.dt = ctrl.h0 / (1.0 + lipschitz / ctrl.stiffness_scale);
  }
  return out;
}

}  // namespace

double local_step(const State& s, const Params& p, const IntegratorControls& ctrl) noexcept {
  return evaluate(s, p, ctrl).dt;
}

Stepper::Stepper(const Params& p, const IntegratorControls& ctrl) : params_(p), ctrl_(ctrl) {}

IntervalOutcome Stepper::advance(State& s, const NoiseInterval& noise, double from, double to,
                                 std::optional<double> watch) const {
  IntervalOutcome out;
  if (params_.sigma == 0.0 || noise.span <= 0.0) {
    segment(s, from, to, 0.0, watch, out);
    return out;
  }
  walk_bridge(
      noise, from, to, ctrl_.max_depth,
      [&](double len) { return len > ctrl_.refine_ratio * local_step(s, params_, ctrl_); },
      [&](double lo, double hi, double slope) {
        segment(s, lo, hi, params_.sigma * slope, watch, out);
        return !out.blowup_offset;
      });
  return out;
}

void Stepper::segment(State& s, double from, double to, double rate,
                      const std::optional<double>& watch, IntervalOutcome& out) const {
  double t = from;
  while (t < to) {
    const Local loc = evaluate(s, params_, ctrl_);
    double dt = loc.dt;
    const double remaining = to - t;
    const bool last = dt >= remaining;
    if (last) {
      dt = remaining;
    } else if (t + dt <= t) {
      throw Error(ErrorKind::MaxStepsExceeded, "explicit step underflow at r = " + std::to_string(s.r));
    }
    const Velocity& vel = loc.vel;
    const double r_next = s.r + dt * vel.dr;
    if (watch && !out.crossing_offset && s.r < *watch && r_next >= *watch) {
      out.crossing_offset = t + dt * (*watch - s.r) / (r_next - s.r);
    }
    s.phi += dt * vel.dphi + rate * dt;
    s.r = std::max(r_next, ctrl_.r_min);
    t = last ? to : t + dt;
    ++out.substeps;
    if (s.r >= ctrl_.r_explode) {
      out.blowup_offset = t;
      return;
    }
  }
}

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::HorizonReached: return "HorizonReached";
    case Termination::BlowUpProxy: return "BlowUpProxy";
    case Termination::StopTriggered: return "StopTriggered";
    case Termination::Failed: return "Failed";
  }
  return "Unknown";
}

bool StopCondition::holds(const State& s) const noexcept {
  switch (kind) {
    case Kind::RadiusBelow: return s.r <= level;
    case Kind::RadiusAbove: return s.r >= level;
    case Kind::AngleBelow: return s.phi <= level;
    case Kind::AngleAbove: return s.phi >= level;
  }
  return false;
}

namespace {

// Shared driver of integrate_det (path == nullptr) and integrate_sde.
Trajectory run_grid(State s, const Params& p, const IntegratorControls& ctrl,
                    const BrownianPath* path, double h, std::size_t first, double t_max,
                    std::span<const StopCondition> stops, bool record) {
  s.r = std::max(s.r, ctrl.r_min);
  const Stepper stepper(p, ctrl);
  Trajectory traj;
  const double t0 = static_cast<double>(first) * h;
  const double length = t_max - t0;
  if (length < -1e-12 * std::max(1.0, t_max)) {
    throw Error(ErrorKind::InvalidArgument, "t_max precedes the start time");
  }
  auto n_full = static_cast<std::size_t>(std::floor(std::max(length, 0.0) / h + 1e-9));
  double tail = length - static_cast<double>(n_full) * h;
  if (tail < 1e-9 * h) tail = 0.0;
  const std::size_t needed = first + n_full + (tail > 0.0 ? 1 : 0);
  if (path != nullptr && needed > path->size()) {
    throw Error(ErrorKind::PathExhausted, "integration horizon exceeds the Brownian path");
  }

  auto push = [&](double t) {
    if (record || traj.samples.empty()) {
      traj.samples.push_back({t, s});
    } else {
      traj.samples.back() = {t, s};
    }
    traj.end_time = t;
  };
  auto check_stops = [&](double t) {
    for (const auto& stop : stops) {
      if (stop.holds(s)) {
        traj.termination = Termination::StopTriggered;
        traj.stop_label = stop.label;
        traj.end_time = t;
        return true;
      }
    }
    return false;
  };

  push(t0);
  if (check_stops(t0)) return traj;

  const std::size_t intervals = n_full + (tail > 0.0 ? 1 : 0);
  for (std::size_t j = 0; j < intervals; ++j) {
    const std::size_t idx = first + j;
    const NoiseInterval noise = path != nullptr ? noise_interval(*path, idx) : NoiseInterval{h, 0.0, 0};
    const bool partial = j == n_full;
    const double to = partial ? tail : h;
    const IntervalOutcome step = stepper.advance(s, noise, 0.0, to);
    traj.substeps += step.substeps;
    if (traj.substeps > ctrl.max_steps) {
      throw Error(ErrorKind::MaxStepsExceeded, "step budget exhausted at t = " +
                                                   std::to_string(static_cast<double>(idx) * h));
    }
    if (step.blowup_offset) {
      const double t_proxy = static_cast<double>(idx) * h + *step.blowup_offset;
      traj.samples.push_back({t_proxy, s});
      traj.termination = Termination::BlowUpProxy;
      traj.end_time = t_proxy;
      return traj;
    }
    const double t = partial ? t_max : static_cast<double>(idx + 1) * h;
    push(t);
    if (check_stops(t)) return traj;
  }
  traj.termination = Termination::HorizonReached;
  return traj;
}

}  // namespace

Trajectory integrate_det(State s0, const Params& p, const IntegratorControls& ctrl, double t_max) {
  p.validate();
  ctrl.validate();
  if (!(s0.r > 0.0)) throw Error(ErrorKind::InvalidArgument, "initial radius must be positive");
  Params det = p;
  det.sigma = 0.0;
  return run_grid(s0, det, ctrl, nullptr, ctrl.h0, 0, t_max, {}, true);
}

Trajectory integrate_sde(State s0, const Params& p, const BrownianPath& path,
                         const IntegratorControls& ctrl, double t_max,
                         std::span<const StopCondition> stops, double t_start) {
  p.validate();
  ctrl.validate();
  if (!(s0.r > 0.0)) throw Error(ErrorKind::InvalidArgument, "initial radius must be positive");
  if (t_max > path.horizon() * (1.0 + 1e-12)) {
    throw Error(ErrorKind::PathExhausted, "t_max exceeds the Brownian path horizon");
  }
  return run_grid(s0, p, ctrl, &path, path.step(), path.grid_index(t_start), t_max, stops, true);
}

std::vector<FlowPoint> flow_map(std::span<const State> initial, const Params& p,
                                const BrownianPath& path, const IntegratorControls& ctrl,
                                double t) {
  p.validate();
  ctrl.validate();
  if (t > path.horizon() * (1.0 + 1e-12)) {
    throw Error(ErrorKind::PathExhausted, "flow time exceeds the Brownian path horizon");
  }
  std::vector<FlowPoint> out;
  out.reserve(initial.size());
  for (const State& z : initial) {
    FlowPoint fp;
    try {
      if (!(z.r > 0.0)) throw Error(ErrorKind::InvalidArgument, "initial radius must be positive");
      const Trajectory traj = run_grid(z, p, ctrl, &path, path.step(), 0, t, {}, false);
      fp.state = traj.final_state();
      fp.termination = traj.termination;
      fp.end_time = traj.end_time;
    } catch (const Error& e) {
      fp.state = z;
      fp.termination = Termination::Failed;
      fp.failure = e.kind();
    }
    out.push_back(fp);
  }
  return out;
}

std::vector<State> make_fiber(double radius, std::size_t resolution, std::size_t refine) {
  if (resolution == 0) throw Error(ErrorKind::InvalidArgument, "fiber resolution must be positive");
  std::vector<State> fiber;
  fiber.reserve(resolution + refine);
  const double spacing = kPi / static_cast<double>(resolution);
  for (std::size_t j = 0; j < resolution; ++j) {
    fiber.push_back({radius, spacing * static_cast<double>(j + 1)});
  }
  for (std::size_t j = 1; j <= refine; ++j) {
    fiber.push_back({radius, kHalfPi + std::ldexp(spacing, -static_cast<int>(j))});
  }
  return fiber;
}

FlowEnsemble::FlowEnsemble(const Params& p, const IntegratorControls& ctrl,
                           std::vector<State> initial)
    : stepper_(p, ctrl), states_(std::move(initial)), exploded_(states_.size(), 0) {
  for (auto& s : states_) s.r = std::max(s.r, ctrl.r_min);
}

std::optional<double> FlowEnsemble::advance(const NoiseInterval& noise, double from, double to,
                                            std::optional<double> watch) {
  std::vector<State> saved;
  if (watch) saved = states_;
  std::optional<double> earliest;
  for (std::size_t i = 0; i < states_.size(); ++i) {
    if (exploded_[i]) continue;
    const IntervalOutcome out = stepper_.advance(states_[i], noise, from, to, watch);
    substeps_ += out.substeps;
    if (out.blowup_offset) exploded_[i] = 1;
    if (out.crossing_offset && (!earliest || *out.crossing_offset < *earliest)) {
      earliest = out.crossing_offset;
    }
  }
  if (!earliest) return std::nullopt;
  // Replay the interval for everyone up to the first crossing.
  states_ = std::move(saved);
  std::fill(exploded_.begin(), exploded_.end(), 0);
  for (std::size_t i = 0; i < states_.size(); ++i) {
    if (states_[i].r >= stepper_.controls().r_explode) {
      exploded_[i] = 1;
      continue;
    }
    const IntervalOutcome out = stepper_.advance(states_[i], noise, from, *earliest);
    substeps_ += out.substeps;
    if (out.blowup_offset) exploded_[i] = 1;
  }
  return earliest;
}

double FlowEnsemble::sup_radius() const noexcept {
  double sup = 0.0;
  for (std::size_t i = 0; i < states_.size(); ++i) {
    if (exploded_[i]) return std::numeric_limits<double>::infinity();
    sup = std::max(sup, states_[i].r);
  }
  return sup;
}

bool FlowEnsemble::any_exploded() const noexcept {
  return std::any_of(exploded_.begin(), exploded_.end(), [](char c) { return c != 0; });
}

void write_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,r,phi_canonical,phi_unwrapped\n";
  out << std::setprecision(17);
  for (const auto& smp : traj.samples) {
    out << smp.t << ',' << smp.state.r << ',' << smp.state.canonical_phi() << ','
        << smp.state.phi << '\n';
  }
}

}  // namespace polar
