#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "polar/attractor.hpp"
#include "polar/blowup.hpp"
#include "polar/brownian.hpp"
#include "polar/crossing.hpp"
#include "polar/error.hpp"
#include "polar/model.hpp"
#include "polar/sde.hpp"
#include "polar/semimarkov.hpp"
#include "polar/stepdown.hpp"

using namespace polar;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string cli_path;

// shared between 7 and 10
std::optional<StepDownSweep> sweep_cache;

const StepDownSweep& default_sweep() {
  if (!sweep_cache) {
    const Params p;
    sweep_cache = stepdown_sweep(2, 40, p, StepDownConfig{}, IntegratorControls{}, FiberRunOptions{},
                                 200, 1);
  }
  return *sweep_cache;
}

void c1(Outcome& o) {
  Params p;
  p.sigma = 0.0;
  IntegratorControls ctrl;
  const double exact = 1.0 - 1.0 / ctrl.r_explode;
  const double t = estimate_blowup_time({1.0, kHalfPi}, p, ctrl);
  IntegratorControls half = ctrl;
  half.h0 /= 2;
  const double t2 = estimate_blowup_time({1.0, kHalfPi}, p, half);
  const double e1 = std::abs(t - exact), e2 = std::abs(t2 - exact);
  const double ratio = e1 / e2;
  o.detail << "T=" << t << " err(h0)=" << e1 << " err(h0/2)=" << e2 << " ratio=" << ratio;
  o.require(std::abs(t - 1.0) <= 0.01, "|T-1| <= 0.01");
  o.require(ratio >= 1.5 && ratio <= 2.5, "error ratio in [1.5, 2.5]");
}

void c2(Outcome& o) {
  const Params p;
  const double bound = blowup_time_bound(0, p);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> radius(0.5, 4.0), angle(0.0, kPi);
  int ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const State s{radius(rng), angle(rng)};
    try {
      const BlowupRun run = measure_blowup(s, p);
      const double limit = 1.05 * (run.entry_time + bound);
      worst = std::max(worst, run.blowup_time / (run.entry_time + bound));
      if (run.entered && std::isfinite(run.blowup_time) && run.blowup_time <= limit) ++ok;
    } catch (const Error& e) {
      o.detail << " ic " << i << ": " << e.what();
    }
  }
  o.detail << ok << "/50 within; bound(0)=" << bound << " worst ratio=" << worst;
  o.require(ok == 50, "all 50 blow up within bound + 5%");
}

void c3(Outcome& o) {
  std::vector<double> Ks;
  for (int i = 0; i <= 6; ++i) Ks.push_back(std::pow(10.0, 2.0 + 0.5 * i));
  const DecayFit fit = fit_decay_exponent(Ks);
  QuadratureOptions tight;
  tight.rel_tol *= 0.5;
  const double moved = std::abs(fit_decay_exponent(Ks, tight).slope - fit.slope);
  o.detail << "slope=" << fit.slope << " tolerance-halving shift=" << moved;
  o.require(std::abs(fit.slope + 2.0 / 3.0) <= 0.03, "slope = -2/3 +- 0.03");
  o.require(moved < 1e-3, "shift < 1e-3");
}

void c4(Outcome& o) {
  const std::int64_t n = 100000;
  int agree = 0, tried = 0;
  auto report = [&](const char* name, double analytic, const McEstimate& e) {
    ++tried;
    const double z = (e.mean - analytic) / e.stderr_;
    o.detail << " " << name << ": analytic=" << analytic << " mc=" << e.mean << "+-" << e.stderr_
             << " z=" << z << ";";
    if (std::abs(z) <= 3.0 && e.horizon_exceeded == 0) ++agree;
  };
  {
    FrozenAngularModel m;
    m.R = 2.0;
    m.a = kHalfPi - 0.3;
    report("cross R=2 psi=pi", expected_crossing_ua(m, kPi), mc_crossing_time(m, kPi, n, 41, 5e-4));
  }
  {
    FrozenAngularModel m;
    m.R = 4.0;
    m.a = kHalfPi - 0.3;
    report("cross R=4 psi=2", expected_crossing_ua(m, 2.0), mc_crossing_time(m, 2.0, n, 42, 5e-4));
  }
  {
    FrozenAngularModel m;
    m.R = 1.0;
    m.a = 0.0;
    m.b = kPi;
    report("exit R=1 (0,pi) psi=pi/2", expected_exit_time(m, kHalfPi),
           mc_exit_time(m, kHalfPi, n, 43, 5e-4));
  }
  o.require(agree == tried && tried >= 3, "all configurations within 3 stderr");
}

void c5(Outcome& o) {
  const Params p;
  const double a = kHalfPi - 0.3;
  int holds = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const BrownianPath path(derive_seed(77, seed), 1e-3, 40.0);
    const ComparisonResult res = comparison_check({4.0, 2.0}, 2.0, a, p, path);
    if (res.holds && res.stop_order_holds) ++holds;
    worst = std::max(worst, res.max_excess);
  }
  o.detail << holds << "/500 paths; largest phi - phi~ = " << worst;
  o.require(holds == 500, "100% of paths");
}

void c6(Outcome& o) {
  const double closed = laplace_T_eps(1.0, 1.0, 1.0, 0.5);
  const McEstimate e = mc_laplace_T_eps(1.0, 1.0, 1.0, 0.5, 100000, 61);
  const double bound = 4.0 * std::sqrt(2.0) * std::exp(1.0) * 25.0 * std::exp(-10.0);
  const McEstimate ev = mc_drift_sup_event(5.0, 1.0, 1.0, 1.0, 100000, 62);
  o.detail << "laplace=" << closed << " mc=" << e.mean << "+-" << e.stderr_ << "; event freq=" << ev.mean
           << "+-" << ev.stderr_ << " bound=" << bound;
  o.require(std::abs(e.mean - closed) <= 3.0 * e.stderr_, "laplace within 3 stderr");
  o.require(ev.mean <= bound + 3.0 * ev.stderr_, "event frequency <= bound + 3 stderr");
}

void c7(Outcome& o) {
  const StepDownSweep& s = default_sweep();
  int k_max = 0;
  for (const auto& r : s.rows) {
    if (r.n > 0 && r.failures < r.n) k_max = r.k;
  }
  bool identities = s.identity_threshold.has_value();
  if (identities) {
    for (const auto& r : s.rows) {
      if (r.k >= *s.identity_threshold && (r.B_BBM_D != 0 || r.B_BBM_notA != 0)) identities = false;
    }
  }
  o.detail << "k=2.." << k_max << " P(A_k):";
  for (const auto& r : s.rows) o.detail << " " << r.k << ":" << r.P_A();
  o.detail << "; threshold=" << (s.identity_threshold ? std::to_string(*s.identity_threshold) : "none")
           << " slope=" << s.slope;
  o.require(k_max >= 6, "feasible k_max >= 6");
  o.require(s.monotone, "P(A_k) nondecreasing within 2 stderr");
  o.require(identities, "tally identities above the threshold");
  o.require(s.slope <= -1.0 / 6.0 + 0.1, "slope <= -1/6 + 0.1");
}

void c8(Outcome& o) {
  const Params p;
  std::int64_t grid = 0, gv = 0, jv = 0, jumps = 0;
  int aborted = 0;
  double wg = 0.0, wj = 0.0, hold = 0.0;
  for (int j = 0; j < 100; ++j) {
    const JumpPath path = simulate_K(2 + j % 5, p, StepDownConfig{}, IntegratorControls{}, FiberRunOptions{},
                                     1e9, 60, derive_seed(88, static_cast<std::uint64_t>(j)));
    grid += path.grid_checks;
    gv += path.grid_violations;
    jv += path.jump_violations;
    jumps += static_cast<std::int64_t>(path.jumps());
    aborted += path.aborted ? 1 : 0;
    wg = std::max(wg, path.worst_grid_ratio);
    wj = std::max(wj, path.worst_jump_ratio);
    hold = std::max(hold, path.max_hold_ratio);
  }
  o.detail << "pairs=100 jumps=" << jumps << " grid checks=" << grid << " grid violations=" << gv
           << " jump violations=" << jv << " worst ratios " << wg << "/" << wj << " aborted=" << aborted
           << " max hold/theta=" << hold;
  o.require(gv == 0 && jv == 0, "zero violations");
  o.require(aborted == 0, "no aborted pairs");
}

void c9(Outcome& o) {
  SemiMarkovSpec s;
  s.first = 2;
  s.p = {1.0, 0.5, 0.0};
  s.m = {1.0, 2.0, 1.0};
  const Distribution nu = stationary_nu(s);
  const double err = std::max({std::abs(nu.at(2) - 0.25), std::abs(nu.at(3) - 0.5), std::abs(nu.at(4) - 0.25)});
  const LimitReport rep = semimarkov_limit_check(s, 2, {200.0}, 10000, 9);
  o.detail << "nu max error=" << err << " TV(t=200)=" << rep.tv.back();
  o.require(err <= 1e-12, "nu to 1e-12");
  o.require(rep.tv.back() <= 0.02, "TV <= 0.02");
}

FiberRunOptions attractor_fiber() {
  FiberRunOptions opt;
  opt.resolution = 128;
  opt.refine_below_box = 8;
  opt.h_max = 2e-3;
  return opt;
}

void c10(Outcome& o) {
  const Params p;
  const StepDownConfig cfg;
  const auto est = up_probabilities(default_sweep().rows);
  bool consistent = !est.empty() && est.front().i == 2 && est.front().p_hat == 1.0;
  for (const auto& u : est) {
    if (u.p_hat > u.one_minus_PA + 2.0 * u.stderr_) consistent = false;
  }
  const Distribution mu = stationary_mu(spec_from_estimates(est, p, cfg, 64));
  const double Rbar = select_Rbar(mu, 0.1);
  const CriterionReport rep =
      criterion_check(0.1, Rbar, p, IntegratorControls{}, {2, 3, 4, 5, 6}, {20.0, 50.0}, 200, attractor_fiber(), 10);
  o.detail << "Rbar=" << Rbar << " freq:";
  for (const auto& c : rep.cells) o.detail << " (" << c.k << "," << c.t << ")=" << c.freq() << "+-" << c.stderr_();
  o.require(consistent, "p_2 = 1 and p_i <= 1 - P(A_i) + 2 stderr");
  o.require(rep.satisfied(), "freq >= 1 - eps - 3 stderr in every cell");
}

void c11(Outcome& o) {
  const Params p;
  const double alpha = p.alpha();
  const auto samples = pullback_radius_samples(p, IntegratorControls{}, 6, 20.0, 400, attractor_fiber(), 11);
  const double c = fit_majorant_constant(samples, tail_points(samples), alpha, 8.0);
  const TailReport tail = tail_comparison(samples, alpha, c, 8.0);
  const MomentCheck m4 = moment_stability(samples, 4);
  int checked = 0;
  for (const auto& r : tail.rows) checked += r.x >= 8.0 ? 1 : 0;
  o.detail << "c=" << c << " points x>=8: " << checked << " m4 halves " << m4.m_a << "+-" << m4.se_a << " vs "
           << m4.m_b << "+-" << m4.se_b;
  o.require(checked > 0, "sampled x >= 8 present");
  o.require(tail.dominated, "majorant dominates at x >= 8");
  o.require(m4.stable, "4th moment stable under doubling n");
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void c12(Outcome& o) {
  int mismatches = 0, files = 0;
  if (cli_path.empty()) {
    o.require(false, "CLI path argument");
  } else {
    const fs::path dir = fs::temp_directory_path() / ("polar-acceptance-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const fs::path cfg = dir / "small.cfg";
    std::ofstream(cfg) << "field.phi_points = 9\nfield.r_points = 5\ntrajectories.t_max = 2\n"
                          "det_blowup.samples = 5\ndet_blowup.box_samples = 10\ncrossing.K_points = 3\n"
                          "crossing.K_max = 1e3\ncrossing.R = 2\ncrossing.mc_n = 500\n"
                          "stepdown.k_lo = 6\nstepdown.k_hi = 7\nstepdown.n = 4\nstepdown.resolution = 64\n"
                          "stepdown.refine_below_box = 4\nsemimarkov.k_lo = 4\nsemimarkov.k_hi = 6\n"
                          "semimarkov.n = 4\nsemimarkov.paths = 1\nsemimarkov.max_stages = 6\n"
                          "attractor.k = 2,3\nattractor.t = 0.5,1\nattractor.n = 3\n"
                          "attractor.resolution = 64\nattractor.tail_k = 2\nattractor.tail_t = 1\n"
                          "attractor.tail_n = 10\n";
    for (const char* sub : {"field", "trajectories", "det-blowup", "crossing", "stepdown", "semimarkov", "attractor"}) {
      std::map<std::string, std::string> runs[2];
      for (int r = 0; r < 2; ++r) {
        const fs::path out = dir / (std::string(sub) + std::to_string(r));
        const std::string cmd = "\"" + cli_path + "\" " + sub + " --config \"" + cfg.string() + "\" --seed 5 --out \"" +
                                out.string() + "\" > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0) {
          o.detail << " " << sub << " exited nonzero;";
          ++mismatches;
          continue;
        }
        for (const auto& e : fs::directory_iterator(out)) {
          if (e.path().extension() == ".csv") runs[r][e.path().filename().string()] = slurp(e.path());
        }
      }
      files += static_cast<int>(runs[0].size());
      if (runs[0].empty() || runs[0] != runs[1]) {
        o.detail << " " << sub << " differs;";
        ++mismatches;
      }
    }
    fs::remove_all(dir);
  }

  const Params p;
  const IntegratorControls ctrl;
  const BrownianPath path(3, ctrl.h0, 4.0);
  const State s0{5.0, kPi / 8.0};
  const auto whole = integrate_sde(s0, p, path, ctrl, 4.0);
  std::mt19937_64 rng(1212);
  std::uniform_int_distribution<std::size_t> pick(0, path.size());
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double s = static_cast<double>(pick(rng)) * ctrl.h0;
    const auto first = integrate_sde(s0, p, path, ctrl, s);
    const auto second = integrate_sde(first.final_state(), p, path, ctrl, 4.0, {}, s);
    if (second.final_state().r == whole.final_state().r && second.final_state().phi == whole.final_state().phi) ++exact;
  }
  o.detail << " csv files compared=" << files << " subcommand mismatches=" << mismatches
           << "; restart bit-exact " << exact << "/100";
  o.require(mismatches == 0, "byte-identical CSVs");
  o.require(exact == 100, "bit-exact restarts");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit)) only.insert(std::stoi(a));
    else cli_path = a;
  }
  const std::vector<Criterion> all = {
      {1, "deterministic blow-up, exact case", 1.0, c1},
      {2, "blow-up within the stage bound", 60.0, c2},
      {3, "double-integral decay exponent", 10.0, c3},
      {4, "scale function vs Monte Carlo", 300.0, c4},
      {5, "pathwise comparison", 60.0, c5},
      {6, "drawdown Laplace transform and event bound", 120.0, c6},
      {7, "step-down property suite", 1800.0, c7},
      {8, "domination by the jump process", 600.0, c8},
      {9, "semi-Markov oracle and limit", 60.0, c9},
      {10, "attractor criterion frequency", 1800.0, c10},
      {11, "pullback radius tail", 600.0, c11},
      {12, "reproducibility", 600.0, c12},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs <= c.budget_s, "runtime budget " + std::to_string(static_cast<int>(c.budget_s)) + " s");
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name << " (" << secs
              << " s) " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
