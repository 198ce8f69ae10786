#pragma once

#include <numbers>

namespace polar {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;

/// Model constants of
///   dr   = (-r^w cos^2(phi) + r^v) dt
///   dphi = -r^gamma cos^2(phi) dt + sigma dW
struct Params {
  double w = 3.0;
  double v = 2.0;
  double gamma = 1.75;
  double sigma = 1.0;

  /// Throws DomainError unless w, v, gamma > 0 and sigma >= 0.
  void validate() const;

  /// 2 gamma > w - v > 0 and v > 1: every deterministic solution explodes.
  bool det_blowup_regime() const noexcept;

  /// w > v > 1, 2 gamma / 3 + 1 > v and w - 1 > gamma: the stochastic flow has
  /// a weak random attractor.
  bool attractor_regime() const noexcept;

  /// Decay exponent 2 gamma / 3 - v + 1 of the step-down failure probability.
  double alpha() const noexcept { return 2.0 * gamma / 3.0 - v + 1.0; }
};

/// Reduces an angle to the canonical representative in [0, pi).
double wrap_angle(double phi) noexcept;

/// A point of the half-plane model. `phi` is kept unwrapped (on the real line);
/// the dynamics are pi-periodic, so canonical_phi() is the physical angle.
struct State {
  double r = 1.0;
  double phi = 0.0;

  double canonical_phi() const noexcept { return wrap_angle(phi); }
};

struct Velocity {
  double dr = 0.0;
  double dphi = 0.0;
};

/// Deterministic part of the vector field.
Velocity drift(const State& s, const Params& p) noexcept;

/// Dyadic level radius R_k = 2^k.
double level_radius(int k) noexcept;

}  // namespace polar
