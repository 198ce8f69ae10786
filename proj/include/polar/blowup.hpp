#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "polar/model.hpp"
#include "polar/sde.hpp"

namespace polar {

/// Stage k of the explosion construction: on B_k = [R_k, inf) x [pi/2, Phi_k]
/// the angle needs at most s_k to reach Phi_{k+1} and the radius at most t_k to
/// reach R_{k+1}.
struct StageBound {
  int k = 0;
  double R = 1.0;
  double Phi = 0.0;
  /// Phi - pi/2, kept separately since Phi itself loses all digits for large k.
  double offset = 0.0;
  double s = 0.0;
  double t = 0.0;
  double u = 0.0;
};

/// Phi_k - pi/2, where Phi_k in (pi/2, pi] solves R_k^{w-v} cos^2(Phi_k) = 1/2.
/// Bisection to full relative precision. Throws NoRoot if w <= v.
double phi_cap_offset(int k, const Params& p);

double phi_cap(int k, const Params& p);

/// Throws RegimeViolation outside the deterministic blow-up regime.
StageBound stage_bounds(int k, const Params& p);

/// (Phi_k - pi/2) / |w_k|, the cruder angular time bound; dominates s_k.
double angular_majorant(int k, const Params& p);

struct BlowupBound {
  double partial = 0.0;  // sum of u_k for k0 <= k <= k_max
  double tail = 0.0;     // certified majorant of the sum over k > k_max
  double total() const noexcept { return partial + tail; }
};

BlowupBound blowup_time_bound_parts(int k0, const Params& p, int k_max);

double blowup_time_bound(int k0, const Params& p, int k_max = 60);

struct BoxReport {
  int k = 0;
  int samples = 0;
  int violations = 0;
  int exploded = 0;
  double worst_angle_excursion = 0.0;
  double worst_radius_deficit = 0.0;
};

/// Starts `samples` deterministic trajectories on the boundary of B_k and counts
/// exits other than through r >= r_explode. Tolerance 1e-12 on both edges.
BoxReport verify_box_invariance(int k, const Params& p, int samples, std::uint64_t seed,
                                const IntegratorControls& ctrl = {});

/// Time at which the deterministic trajectory reaches r_explode.
/// Throws NoBlowUpDetected if it does not happen before t_max.
double estimate_blowup_time(State s0, const Params& p, const IntegratorControls& ctrl = {},
                            double t_max = 100.0);

struct BlowupRun {
  double blowup_time = 0.0;
  double entry_time = 0.0;  // first sample in B_0
  bool entered = false;
};

/// Like estimate_blowup_time, also measuring the first grid time in B_0.
BlowupRun measure_blowup(State s0, const Params& p, const IntegratorControls& ctrl = {},
                         double t_max = 100.0);

/// Rows `k,R_k,Phi_k,s_k,t_k,u_k` followed by a `# total_bound=` summary line.
void write_stage_table(std::ostream& out, const Params& p, int k_max);

}  // namespace polar
