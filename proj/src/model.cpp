#include "polar/model.hpp"

#include <cmath>

#include "polar/error.hpp"

namespace polar {

void Params::validate() const {
  if (!(w > 0.0) || !(v > 0.0) || !(gamma > 0.0)) {
    throw Error(ErrorKind::DomainError, "w, v and gamma must be positive");
  }
  if (!(sigma >= 0.0)) {
    throw Error(ErrorKind::DomainError, "sigma must be nonnegative");
  }
}

bool Params::det_blowup_regime() const noexcept {
  return 2.0 * gamma > w - v && w - v > 0.0 && v > 1.0;
}

bool Params::attractor_regime() const noexcept {
  return w > v && v > 1.0 && 2.0 * gamma / 3.0 + 1.0 > v && w - 1.0 > gamma;
}

double wrap_angle(double phi) noexcept {
  double m = std::fmod(phi, kPi);
  if (m < 0.0) m += kPi;
  // m + pi can round up to pi itself
  if (m >= kPi) m = 0.0;
  return m;
}

Velocity drift(const State& s, const Params& p) noexcept {
  const double c = std::cos(s.phi);
  const double c2 = c * c;
  return {-std::pow(s.r, p.w) * c2 + std::pow(s.r, p.v), -std::pow(s.r, p.gamma) * c2};
}

double level_radius(int k) noexcept { return std::ldexp(1.0, k); }

}  // namespace polar
