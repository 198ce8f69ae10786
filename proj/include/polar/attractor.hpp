#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "polar/model.hpp"
#include "polar/sde.hpp"
#include "polar/semimarkov.hpp"
#include "polar/stepdown.hpp"

namespace polar {

/// R = 2^{L+1} with L the smallest level such that mu({..., L}) >= 1 - eps/2.
/// DomainError unless eps > 0; eps >= 1 gives the lowest level of mu.
double select_Rbar(const Distribution& mu, double eps);

/// sup over the discretized fiber I(k) of the radius at each time of `times`
/// (sorted, on the grid of step opt.h_max), one realization of fresh noise.
/// The explosion proxy is raised to at least r_floor.
std::vector<double> fiber_sup_at(int k, const std::vector<double>& times, const Params& p,
                                 const IntegratorControls& ctrl, const FiberRunOptions& opt,
                                 std::uint64_t seed, double r_floor = 0.0);

struct CriterionCell {
  int k = 0;
  double t = 0.0;
  std::int64_t n = 0;
  std::int64_t success = 0;
  /// realizations lost to integrator errors, counted as failures of the event
  std::int64_t errors = 0;
  std::vector<double> sup_samples;

  double freq() const noexcept { return EventTally::freq(success, n); }
  double stderr_() const noexcept { return EventTally::stderr_of(success, n); }
};

struct CriterionReport {
  double eps = 0.0;
  double Rbar = 0.0;
  std::vector<int> k_list;
  std::vector<double> t_list;
  /// k-major: cells[i * t_list.size() + j] is (k_list[i], t_list[j])
  std::vector<CriterionCell> cells;

  const CriterionCell& cell(std::size_t ik, std::size_t it) const {
    return cells.at(ik * t_list.size() + it);
  }
  /// freq >= 1 - eps - 3 stderr in every cell
  bool satisfied() const;
  /// freq at the last time >= freq at the first time - 2 stderr for every k
  bool monotone_in_t() const;
  /// smallest tested t from which the criterion holds at all later tested times
  std::optional<double> t0(std::size_t ik) const;
};

/// For each k, n realizations of the flow from I(k) on fresh noise; every time in
/// t_list is read off the same realization.
CriterionReport criterion_check(double eps, double Rbar, const Params& p,
                                const IntegratorControls& ctrl, const std::vector<int>& k_list,
                                const std::vector<double>& t_list, std::int64_t n,
                                const FiberRunOptions& opt, std::uint64_t seed);

/// n samples of sup_{z in I(k)} r_t(z), fresh noise per sample.
std::vector<double> pullback_radius_samples(const Params& p, const IntegratorControls& ctrl, int k,
                                            double t, std::int64_t n, const FiberRunOptions& opt,
                                            std::uint64_t seed);

/// 2^{-floor(log2 x - 1)^2 alpha / 2 + c (log2 x + 1)}, x >= 1.
double radius_majorant(double x, double alpha, double c);

/// P(sample >= x).
double empirical_tail(const std::vector<double>& samples, double x);

/// Smallest c with empirical_tail <= radius_majorant at the points of `xs` below x_split.
double fit_majorant_constant(const std::vector<double>& samples, const std::vector<double>& xs,
                             double alpha, double x_split);

struct TailRow {
  double x = 0.0;
  double empirical = 0.0;
  double majorant = 0.0;
};

struct TailReport {
  double alpha = 0.0;
  double c = 0.0;
  double x_split = 0.0;
  std::vector<TailRow> rows;
  /// majorant >= empirical at every row with x >= x_split
  bool dominated = true;
};

/// Evaluation points: quarter-octaves 2^{j/4} from 1 past the largest sample,
/// together with every sample value >= 1.
std::vector<double> tail_points(const std::vector<double>& samples);

TailReport tail_comparison(const std::vector<double>& samples, double alpha, double c,
                           double x_split = 8.0);

struct MomentCheck {
  double m_a = 0.0, m_b = 0.0;
  double se_a = 0.0, se_b = 0.0;
  /// both finite and |m_a - m_b| <= 3 hypot(se_a, se_b)
  bool stable = false;
};

/// order-th moment on the two halves of the samples.
MomentCheck moment_stability(const std::vector<double>& samples, int order = 4);

/// Rows `k,t,n,freq,stderr,Rbar`.
void write_criterion_table(std::ostream& out, const CriterionReport& rep);

/// Rows `x,empirical_tail,majorant`.
void write_tail_table(std::ostream& out, const TailReport& rep);

}  // namespace polar
