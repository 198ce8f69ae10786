// polar-attractor: experiment driver writing CSV reports and a run manifest.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "polar/attractor.hpp"
#include "polar/blowup.hpp"
#include "polar/config.hpp"
#include "polar/crossing.hpp"
#include "polar/error.hpp"
#include "polar/semimarkov.hpp"
#include "polar/stepdown.hpp"

#ifndef POLAR_VERSION
#define POLAR_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace polar;

namespace {

struct Run {
  ExperimentConfig cfg;
  fs::path dir;
  std::vector<std::string> files;
  json summary = json::object();

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / name).string());
    files.push_back(name);
    return out;
  }
};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "sha256 failed for " + path.string());
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << x;
  return s.str();
}

void cmd_field(Run& run) {
  const auto& f = run.cfg.field;
  const Params& p = run.cfg.params;
  if (f.phi_points < 2 || f.r_points < 2 || !(f.r_max > f.r_min) || !(f.r_min > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "field grid needs >= 2 points per axis and 0 < r_min < r_max");
  }
  struct Cell { double phi, r; Velocity v; };
  std::vector<Cell> cells;
  double top = 0.0;
  for (int i = 0; i < f.phi_points; ++i) {
    const double phi = kPi * i / (f.phi_points - 1);
    for (int j = 0; j < f.r_points; ++j) {
      const double r = f.r_min + (f.r_max - f.r_min) * j / (f.r_points - 1);
      const Velocity v = drift({r, phi}, p);
      top = std::max(top, std::abs(v.dr));
      cells.push_back({phi, r, v});
    }
  }
  auto out = run.open("field.csv");
  out << "phi,r,dr,dphi,sign_class\n" << std::setprecision(17);
  for (const auto& c : cells) {
    const char* cls = std::abs(c.v.dr) <= f.band * top ? "near-zero" : c.v.dr > 0.0 ? "positive" : "negative";
    out << c.phi << ',' << c.r << ',' << c.v.dr << ',' << c.v.dphi << ',' << cls << '\n';
  }
  run.summary["max_abs_dr"] = top;
}

void cmd_trajectories(Run& run) {
  const auto& k = run.cfg.trajectories;
  const Params& p = run.cfg.params;
  const IntegratorControls& ctrl = run.cfg.integrator;
  const BrownianPath path(run.cfg.seed, ctrl.h0, k.t_max);
  const std::string noise = hex64(path.fingerprint());
  const struct { const char* file; double r; } starts[] = {{"trajectory_a.csv", k.r_a}, {"trajectory_b.csv", k.r_b}};
  for (const auto& s : starts) {
    const Trajectory traj = integrate_sde({s.r, k.phi0}, p, path, ctrl, k.t_max);
    auto out = run.open(s.file);
    out << std::setprecision(17);
    out << "# w=" << p.w << " v=" << p.v << " gamma=" << p.gamma << " sigma=" << p.sigma
        << " seed=" << run.cfg.seed << " h=" << ctrl.h0 << " noise=" << noise << '\n';
    out << "t,r,phi\n";
    for (const auto& smp : traj.samples) out << smp.t << ',' << smp.state.r << ',' << smp.state.canonical_phi() << '\n';
    run.summary[s.file] = {{"termination", std::string(to_string(traj.termination))},
                           {"end_time", traj.end_time}, {"noise", noise}};
  }
}

void cmd_det_blowup(Run& run) {
  const auto& k = run.cfg.det_blowup;
  const Params& p = run.cfg.params;
  const IntegratorControls& ctrl = run.cfg.integrator;
  {
    auto out = run.open("stages.csv");
    write_stage_table(out, p, k.k_max);
  }
  const double bound0 = blowup_time_bound(0, p, k.k_max);
  std::mt19937_64 rng(derive_seed(run.cfg.seed, 0xb10));
  std::uniform_real_distribution<double> ur(k.r_lo, k.r_hi), uphi(0.0, kPi);
  auto out = run.open("blowup_runs.csv");
  out << "j,r0,phi0,entry_time,blowup_time,bound,within\n" << std::setprecision(17);
  int within = 0;
  for (int j = 0; j < k.samples; ++j) {
    const double r0 = ur(rng);
    const double phi0 = uphi(rng);
    BlowupRun b;
    bool ok = true;
    try {
      b = measure_blowup({r0, phi0}, p, ctrl, k.t_max);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoBlowUpDetected) throw;
      ok = false;
      b.blowup_time = kNever;
    }
    const double bound = b.entry_time + bound0;
    const bool in = ok && b.entered && b.blowup_time <= 1.05 * bound;
    within += in;
    out << j << ',' << r0 << ',' << phi0 << ',' << b.entry_time << ',' << b.blowup_time << ',' << bound
        << ',' << in << '\n';
  }
  const BoxReport box = verify_box_invariance(k.box_k, p, k.box_samples, run.cfg.seed, ctrl);
  auto bo = run.open("box.csv");
  bo << "k,samples,violations,exploded\n"
     << box.k << ',' << box.samples << ',' << box.violations << ',' << box.exploded << '\n';
  run.summary["blowup_time_bound_0"] = bound0;
  run.summary["runs_within_bound"] = within;
  run.summary["box_violations"] = box.violations;
}

void cmd_crossing(Run& run) {
  const auto& k = run.cfg.crossing;
  const Params& p = run.cfg.params;
  if (k.K_points < 2 || !(k.K_max > k.K_min) || !(k.K_min > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "crossing sweep needs K_points >= 2 and 0 < K_min < K_max");
  }
  std::vector<double> Ks;
  for (int i = 0; i < k.K_points; ++i) {
    Ks.push_back(k.K_min * std::pow(k.K_max / k.K_min, static_cast<double>(i) / (k.K_points - 1)));
  }
  const DecayFit fit = fit_decay_exponent(Ks);
  {
    auto out = run.open("decay.csv");
    write_decay_table(out, fit);
  }
  auto out = run.open("crossval.csv");
  out << "R,a,analytic,mc_mean,mc_stderr\n" << std::setprecision(17);
  for (std::size_t i = 0; i < k.R.size(); ++i) {
    FrozenAngularModel m;
    m.R = k.R[i];
    m.sigma = p.sigma;
    m.gamma = p.gamma;
    m.a = kHalfPi - k.a_offset;
    const double analytic = expected_crossing_ua(m, kPi);
    const McEstimate mc = mc_crossing_time(m, kPi, k.mc_n, derive_seed(run.cfg.seed, i), k.h);
    out << m.R << ',' << m.a << ',' << analytic << ',' << mc.mean << ',' << mc.stderr_ << '\n';
  }
  run.summary["decay_slope"] = fit.slope;
}

void cmd_stepdown(Run& run) {
  const auto& k = run.cfg.sweep;
  const StepDownSweep sw = stepdown_sweep(k.k_lo, k.k_hi, run.cfg.params, run.cfg.stepdown, run.cfg.integrator,
                                          k.fiber, k.n, run.cfg.seed);
  auto out = run.open("stepdown.csv");
  write_stepdown_table(out, sw, run.cfg.params);
  run.summary["monotone"] = sw.monotone;
  run.summary["identity_threshold"] = sw.identity_threshold ? json(*sw.identity_threshold) : json(nullptr);
  run.summary["slope_log2_PAc"] = sw.slope;
  run.summary["C_fit"] = sw.C_fit;
}

SemiMarkovSpec estimated_spec(Run& run, bool write) {
  const auto& k = run.cfg.semimarkov;
  const auto est = estimate_up_probabilities(k.k_lo, k.k_hi, run.cfg.params, run.cfg.stepdown, run.cfg.integrator,
                                             run.cfg.sweep.fiber, k.n, run.cfg.seed);
  if (write) {
    auto out = run.open("up_probabilities.csv");
    write_up_table(out, est);
  }
  const SemiMarkovSpec spec = spec_from_estimates(est, run.cfg.params, run.cfg.stepdown, k.k_cap);
  run.summary["recurrent_floor"] = recurrent_floor(spec);
  return spec;
}

void cmd_semimarkov(Run& run) {
  const auto& k = run.cfg.semimarkov;
  const Params& p = run.cfg.params;
  const SemiMarkovSpec spec = estimated_spec(run, true);
  const Distribution nu = stationary_nu(spec);
  const Distribution mu = stationary_mu(spec);
  const double c = fit_tail_constant(nu, p.alpha());
  {
    auto out = run.open("measures.csv");
    write_measure_table(out, nu, mu, p.alpha(), c);
  }
  run.summary["tail_constant"] = c;
  run.summary["nu_residual"] = nu.residual;

  auto dom = run.open("domination.csv");
  dom << "path,jumps,grid_checks,grid_violations,jump_violations,worst_grid_ratio,worst_jump_ratio,max_hold_ratio,aborted\n"
      << std::setprecision(17);
  for (int j = 0; j < k.paths; ++j) {
    const JumpPath path = simulate_K(k.k0, p, run.cfg.stepdown, run.cfg.integrator, run.cfg.sweep.fiber, k.horizon,
                                     static_cast<std::size_t>(k.max_stages),
                                     derive_seed(run.cfg.seed, 0x5eed, static_cast<std::uint64_t>(j)));
    auto out = run.open("jump_path_" + std::to_string(j) + ".csv");
    write_jump_path(out, path);
    dom << j << ',' << path.jumps() << ',' << path.grid_checks << ',' << path.grid_violations << ','
        << path.jump_violations << ',' << path.worst_grid_ratio << ',' << path.worst_jump_ratio << ','
        << path.max_hold_ratio << ',' << path.aborted << '\n';
    if (path.aborted) run.summary["aborted_path_" + std::to_string(j)] = path.diagnostic;
  }
}

Distribution read_measure_csv(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + file);
  std::string line;
  std::getline(in, line);
  if (line.rfind("n,nu,mu", 0) != 0) throw Error(ErrorKind::Io, file + " is not a measure table");
  Distribution mu;
  int expect = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string n, nu, m;
    std::getline(ss, n, ',');
    std::getline(ss, nu, ',');
    std::getline(ss, m, ',');
    const int state = std::stoi(n);
    if (expect < 0) mu.first = state;
    else if (state != expect) throw Error(ErrorKind::Io, file + ": states must be consecutive");
    expect = state + 1;
    mu.prob.push_back(std::stod(m));
  }
  if (mu.prob.empty()) throw Error(ErrorKind::Io, file + " has no rows");
  return mu;
}

void cmd_attractor(Run& run) {
  const auto& k = run.cfg.attractor;
  const Params& p = run.cfg.params;
  const Distribution mu = k.measure_csv.empty() ? stationary_mu(estimated_spec(run, false))
                                                : read_measure_csv(k.measure_csv);
  const double Rbar = select_Rbar(mu, k.eps);
  const CriterionReport rep = criterion_check(k.eps, Rbar, p, run.cfg.integrator, k.k, k.t, k.n, k.fiber,
                                              run.cfg.seed);
  {
    auto out = run.open("criterion.csv");
    write_criterion_table(out, rep);
  }
  run.summary["Rbar"] = Rbar;
  run.summary["satisfied"] = rep.satisfied();
  run.summary["monotone_in_t"] = rep.monotone_in_t();
  json t0 = json::object();
  for (std::size_t i = 0; i < k.k.size(); ++i) {
    const auto v = rep.t0(i);
    t0[std::to_string(k.k[i])] = v ? json(*v) : json(nullptr);
  }
  run.summary["t0"] = t0;

  const auto samples = pullback_radius_samples(p, run.cfg.integrator, k.tail_k, k.tail_t, k.tail_n, k.fiber,
                                               derive_seed(run.cfg.seed, 0x7a11));
  const double c = fit_majorant_constant(samples, tail_points(samples), p.alpha(), k.x_split);
  const TailReport tail = tail_comparison(samples, p.alpha(), c, k.x_split);
  {
    auto out = run.open("tail.csv");
    write_tail_table(out, tail);
  }
  const MomentCheck m4 = moment_stability(samples);
  run.summary["tail_constant"] = c;
  run.summary["tail_dominated"] = tail.dominated;
  run.summary["moment4"] = {{"half_a", m4.m_a}, {"half_b", m4.m_b}, {"se_a", m4.se_a}, {"se_b", m4.se_b},
                            {"stable", m4.stable}};

  if (k.sensitivity_n > 0) {
    FiberRunOptions fine = k.fiber;
    fine.resolution *= 2;
    const std::vector<int> top = {*std::max_element(k.k.begin(), k.k.end())};
    const CriterionReport a = criterion_check(k.eps, Rbar, p, run.cfg.integrator, top, k.t, k.sensitivity_n, k.fiber,
                                              derive_seed(run.cfg.seed, 0x5e5));
    const CriterionReport b = criterion_check(k.eps, Rbar, p, run.cfg.integrator, top, k.t, k.sensitivity_n, fine,
                                              derive_seed(run.cfg.seed, 0x5e5));
    auto out = run.open("resolution_sensitivity.csv");
    out << "k,t,n,resolution,freq,stderr\n" << std::setprecision(17);
    for (const auto* r : {&a, &b}) {
      const std::size_t res = r == &a ? k.fiber.resolution : fine.resolution;
      for (const auto& cell : r->cells) {
        out << cell.k << ',' << cell.t << ',' << cell.n << ',' << res << ',' << cell.freq() << ','
            << cell.stderr_() << '\n';
      }
    }
  }
}

void write_manifest(const Run& run, const std::string& sub, double wall, const std::string& error) {
  json m;
  m["subcommand"] = sub;
  m["version"] = POLAR_VERSION;
  m["seed"] = run.cfg.seed;
  m["status"] = error.empty() ? "ok" : "error";
  m["partial"] = !error.empty();
  if (!error.empty()) m["error"] = error;
  m["wall_time_s"] = wall;
  m["config"] = run.cfg.echo();
  json outs = json::array();
  for (const auto& f : run.files) {
    const fs::path path = run.dir / f;
    if (!fs::exists(path)) continue;
    outs.push_back({{"file", f}, {"bytes", fs::file_size(path)}, {"sha256", sha256_file(path)}});
  }
  m["outputs"] = outs;
  m["summary"] = run.summary;
  std::ofstream out(run.dir / "manifest.json", std::ios::binary);
  out << m.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification driver for the polar blow-up SDE"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;

  using Handler = void (*)(Run&);
  const std::vector<std::pair<std::string, Handler>> commands = {
      {"field", cmd_field},         {"trajectories", cmd_trajectories}, {"det-blowup", cmd_det_blowup},
      {"crossing", cmd_crossing},   {"stepdown", cmd_stepdown},         {"semimarkov", cmd_semimarkov},
      {"attractor", cmd_attractor},
  };
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value config file")->required();
    seed_opts.push_back(sub->add_option("--seed", seed, "master seed (overrides the config)"));
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  Run run;
  try {
    run.cfg = load_config(config_path);
  } catch (const Error& e) {
    std::cerr << "polar-attractor: " << e.what() << '\n';
    return 1;
  }
  for (auto* o : seed_opts) {
    if (o->count() > 0) run.cfg.seed = seed;
  }
  if (!out_dir.empty()) run.cfg.out = out_dir;

  const auto* sub = app.get_subcommands().front();
  Handler handler = nullptr;
  for (const auto& [name, fn] : commands) {
    if (name == sub->get_name()) handler = fn;
  }

  run.dir = run.cfg.out;
  std::string error;
  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(run.dir);
    handler(run);
  } catch (const std::exception& e) {
    error = e.what();
    std::cerr << "polar-attractor " << sub->get_name() << ": " << error << '\n';
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    write_manifest(run, sub->get_name(), wall, error);
  } catch (const std::exception& e) {
    std::cerr << "polar-attractor: manifest: " << e.what() << '\n';
    return 2;
  }
  return error.empty() ? 0 : 2;
}
