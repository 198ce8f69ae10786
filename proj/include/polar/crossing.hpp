#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "polar/brownian.hpp"
#include "polar/model.hpp"
#include "polar/sde.hpp"

namespace polar {

/// Angular SDE with the radius frozen at R, on the real line (no wrap):
///   dphi = -R^gamma cos^2(phi) dt + sigma dW,
/// killed on leaving (a, b); b may be +infinity.
struct FrozenAngularModel {
  double R = 1.0;
  double sigma = 1.0;
  double gamma = 1.75;
  double a = 0.0;
  double b = std::numeric_limits<double>::infinity();

  double K() const noexcept;
  void validate() const;
};

/// A(phi) = int_0^phi cos^2 = phi/2 + sin(2 phi)/4.
double A(double phi) noexcept;

/// Inverse of the nondecreasing function A.
double A_inverse(double y);

struct QuadratureOptions {
  double rel_tol = 1e-10;
  /// at most 2^max_depth segments per integral
  unsigned max_depth = 12;
};

/// Mean exit time from (a, b), b finite, started at phi. Overflow-free Green
/// function form, so any K is admissible.
double expected_exit_time(const FrozenAngularModel& m, double phi, const QuadratureOptions& q = {});

/// int_beta^inf e^{-K(A(z)-A(beta))} dz.
double inner_tail_integral(double K, double beta, const QuadratureOptions& q = {});

/// int_a^phi int_beta^inf e^{-K(A(z)-A(beta))} dz dbeta.
double crossing_double_integral(double K, double a, double phi, const QuadratureOptions& q = {});

/// Mean time for the unbounded model to reach a from phi:
/// (2/sigma^2) * crossing_double_integral(K, a, phi).
double expected_crossing_ua(const FrozenAngularModel& m, double phi, const QuadratureOptions& q = {});

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;  // log C
  std::vector<double> K;
  std::vector<double> integral;
};

/// Least-squares fit of log crossing_double_integral(K, 0, pi) against log K.
DecayFit fit_decay_exponent(const std::vector<double>& K_values, const QuadratureOptions& q = {});

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::int64_t n = 0;
  std::int64_t horizon_exceeded = 0;
};

/// Euler simulation of the frozen model on a grid of step h with Brownian-bridge
/// barrier detection; the hitting time is the first grid time after the
/// crossing. Paths still alive at `horizon` are counted and excluded from the mean.
/// For b = infinity only the lower barrier a is active.
McEstimate mc_exit_time(const FrozenAngularModel& m, double psi, std::int64_t n, std::uint64_t seed,
                        double h = 2e-4, double horizon = 0.0);

/// mc_exit_time for the unbounded model, horizon defaulting to 100 u_a(pi).
McEstimate mc_crossing_time(const FrozenAngularModel& m, double psi, std::int64_t n,
                            std::uint64_t seed, double h = 2e-4);

struct ComparisonResult {
  bool holds = true;          // phi_t <= phi~_t + tolerance at every grid time before nu^R
  double max_excess = -std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  bool full_stopped = false;  // nu_a or nu^R reached
  double full_stop = std::numeric_limits<double>::infinity();
  bool aux_hit = false;
  double aux_hit_time = std::numeric_limits<double>::infinity();
  bool blowup = false;
  bool stop_order_holds = true;  // nu_a ^ nu^R <= nu~_a + h whenever nu~_a was observed
};

/// Co-simulates the flow from z and the frozen-radius angle from z.phi on the
/// same noise and the same substeps, up to the path horizon.
ComparisonResult comparison_check(State z, double R, double a, const Params& p,
                                   const BrownianPath& path, const IntegratorControls& ctrl = {});

/// Rows `K,integral,bound,ratio`; bound = C K^{-2/3} with C the least constant
/// that makes it a bound over the sweep.
void write_decay_table(std::ostream& out, const DecayFit& fit);

}  // namespace polar
