#include "polar/attractor.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "polar/error.hpp"

namespace polar {

double select_Rbar(const Distribution& mu, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::DomainError, "eps must be positive");
  if (mu.prob.empty()) throw Error(ErrorKind::InvalidArgument, "empty stationary law");
  const int last = mu.first + static_cast<int>(mu.prob.size()) - 1;
  int L = mu.first;
  // relative slack for the rounding of the normalized masses
  while (L < last && mu.cdf(L) < (1.0 - 0.5 * eps) * (1.0 - 1e-12)) ++L;
  return std::ldexp(1.0, L + 1);
}

std::vector<double> fiber_sup_at(int k, const std::vector<double>& times, const Params& p,
                                 const IntegratorControls& ctrl, const FiberRunOptions& opt,
                                 std::uint64_t seed, double r_floor) {
  if (times.empty() || !std::is_sorted(times.begin(), times.end()) || times.front() < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "need sorted nonnegative times");
  }
  std::vector<double> out;
  const double h = opt.h_max;
  std::vector<State> fiber = level_fiber(k, p, opt);
  if (times.back() == 0.0) {
    double sup = 0.0;
    for (const State& s : fiber) sup = std::max(sup, s.r);
    return std::vector<double>(times.size(), sup);
  }
  const BrownianPath path(seed, h, times.back());
  IntegratorControls c = ctrl.with_grid(h);
  c.r_explode = std::max({c.r_explode, r_floor, 4.0 * level_radius(k)});
  FlowEnsemble ens(p, c, std::move(fiber));
  std::size_t done = 0;
  for (const double t : times) {
    const std::size_t target = path.grid_index(t);
    for (; done < target; ++done) ens.advance(noise_interval(path, done), 0.0, h);
    out.push_back(ens.sup_radius());
  }
  return out;
}

bool CriterionReport::satisfied() const {
  return std::all_of(cells.begin(), cells.end(), [&](const CriterionCell& c) {
    return c.freq() >= 1.0 - eps - 3.0 * c.stderr_();
  });
}

bool CriterionReport::monotone_in_t() const {
  if (t_list.size() < 2) return true;
  for (std::size_t ik = 0; ik < k_list.size(); ++ik) {
    const auto& a = cell(ik, 0);
    const auto& b = cell(ik, t_list.size() - 1);
    if (b.freq() < a.freq() - 2.0 * std::hypot(a.stderr_(), b.stderr_())) return false;
  }
  return true;
}

std::optional<double> CriterionReport::t0(std::size_t ik) const {
  std::optional<double> best;
  for (std::size_t it = t_list.size(); it-- > 0;) {
    const auto& c = cell(ik, it);
    if (c.freq() < 1.0 - eps - 3.0 * c.stderr_()) break;
    best = t_list[it];
  }
  return best;
}

CriterionReport criterion_check(double eps, double Rbar, const Params& p,
                                const IntegratorControls& ctrl, const std::vector<int>& k_list,
                                const std::vector<double>& t_list, std::int64_t n,
                                const FiberRunOptions& opt, std::uint64_t seed) {
  p.validate();
  if (!p.attractor_regime()) throw Error(ErrorKind::RegimeViolation, "parameters outside the attractor regime");
  if (!(eps > 0.0) || !(Rbar > 0.0)) throw Error(ErrorKind::DomainError, "need eps > 0 and Rbar > 0");
  if (n <= 0 || k_list.empty()) throw Error(ErrorKind::InvalidArgument, "need n > 0 and levels");
  CriterionReport rep;
  rep.eps = eps;
  rep.Rbar = Rbar;
  rep.k_list = k_list;
  rep.t_list = t_list;
  for (const int k : k_list) {
    for (const double t : t_list) {
      CriterionCell c;
      c.k = k;
      c.t = t;
      rep.cells.push_back(c);
    }
  }
  for (std::size_t ik = 0; ik < k_list.size(); ++ik) {
    for (std::int64_t j = 0; j < n; ++j) {
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k_list[ik]), static_cast<std::uint64_t>(j));
      std::vector<double> sups;
      bool error = false;
      try {
        sups = fiber_sup_at(k_list[ik], t_list, p, ctrl, opt, s, 4.0 * Rbar);
      } catch (const Error&) {
        error = true;
      }
      for (std::size_t it = 0; it < t_list.size(); ++it) {
        CriterionCell& c = rep.cells[ik * t_list.size() + it];
        ++c.n;
        if (error) {
          ++c.errors;
          c.sup_samples.push_back(kNever);
          continue;
        }
        c.success += sups[it] <= Rbar;
        c.sup_samples.push_back(sups[it]);
      }
    }
  }
  return rep;
}

std::vector<double> pullback_radius_samples(const Params& p, const IntegratorControls& ctrl, int k,
                                            double t, std::int64_t n, const FiberRunOptions& opt,
                                            std::uint64_t seed) {
  p.validate();
  if (!p.attractor_regime()) throw Error(ErrorKind::RegimeViolation, "parameters outside the attractor regime");
  if (!(t >= 0.0) || n <= 0) throw Error(ErrorKind::InvalidArgument, "need t >= 0 and n > 0");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
    try {
      out.push_back(fiber_sup_at(k, {t}, p, ctrl, opt, s).front());
    } catch (const Error&) {
      out.push_back(kNever);
    }
  }
  return out;
}

double radius_majorant(double x, double alpha, double c) {
  if (!(x >= 1.0)) throw Error(ErrorKind::DomainError, "majorant needs x >= 1");
  if (!(alpha > 0.0)) throw Error(ErrorKind::RegimeViolation, "majorant needs alpha > 0");
  const double lx = std::log2(x);
  const double f = std::floor(lx - 1.0);
  return std::exp2(-0.5 * f * f * alpha + c * (lx + 1.0));
}

double empirical_tail(const std::vector<double>& samples, double x) {
  if (samples.empty()) return 0.0;
  const auto hits = std::count_if(samples.begin(), samples.end(), [x](double s) { return s >= x; });
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double fit_majorant_constant(const std::vector<double>& samples, const std::vector<double>& xs,
                             double alpha, double x_split) {
  double c = -kNever;
  for (const double x : xs) {
    if (x < 1.0 || x >= x_split) continue;
    const double q = empirical_tail(samples, x);
    if (!(q > 0.0)) continue;
    const double lx = std::log2(x);
    const double f = std::floor(lx - 1.0);
    c = std::max(c, (std::log2(q) + 0.5 * f * f * alpha) / (lx + 1.0));
  }
  if (c == -kNever) throw Error(ErrorKind::InvalidArgument, "no positive tail below the split point");
  return c;
}

std::vector<double> tail_points(const std::vector<double>& samples) {
  std::vector<double> xs;
  double top = 1.0;
  for (const double s : samples) {
    if (std::isfinite(s)) top = std::max(top, s);
    if (s >= 1.0 && std::isfinite(s)) xs.push_back(s);
  }
  for (int j = 0; std::exp2(j / 4.0) <= 2.0 * top; ++j) xs.push_back(std::exp2(j / 4.0));
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

TailReport tail_comparison(const std::vector<double>& samples, double alpha, double c, double x_split) {
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "no samples");
  if (!(alpha > 0.0)) throw Error(ErrorKind::RegimeViolation, "majorant needs alpha > 0");
  TailReport rep;
  rep.alpha = alpha;
  rep.c = c;
  rep.x_split = x_split;
  for (const double x : tail_points(samples)) {
    TailRow row{x, empirical_tail(samples, x), radius_majorant(x, alpha, c)};
    if (x >= x_split && row.empirical > row.majorant) rep.dominated = false;
    rep.rows.push_back(row);
  }
  return rep;
}

MomentCheck moment_stability(const std::vector<double>& samples, int order) {
  MomentCheck m;
  const std::size_t half = samples.size() / 2;
  if (half < 2) return m;
  auto stats = [&](std::size_t lo, std::size_t hi, double& mean, double& se) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double y = std::pow(samples[i], order);
      s += y;
      s2 += y * y;
    }
    const double n = static_cast<double>(hi - lo);
    mean = s / n;
    se = std::sqrt(std::max(0.0, s2 / n - mean * mean) / (n - 1.0));
  };
  stats(0, half, m.m_a, m.se_a);
  stats(half, 2 * half, m.m_b, m.se_b);
  m.stable = std::isfinite(m.m_a) && std::isfinite(m.m_b) &&
             std::abs(m.m_a - m.m_b) <= 3.0 * std::hypot(m.se_a, m.se_b);
  return m;
}

void write_criterion_table(std::ostream& out, const CriterionReport& rep) {
  out << "k,t,n,freq,stderr,Rbar\n" << std::setprecision(17);
  for (const auto& c : rep.cells) {
    out << c.k << ',' << c.t << ',' << c.n << ',' << c.freq() << ',' << c.stderr_() << ',' << rep.Rbar << '\n';
  }
}

void write_tail_table(std::ostream& out, const TailReport& rep) {
  out << "x,empirical_tail,majorant\n" << std::setprecision(17);
  for (const auto& r : rep.rows) out << r.x << ',' << r.empirical << ',' << r.majorant << '\n';
}

}  // namespace polar
