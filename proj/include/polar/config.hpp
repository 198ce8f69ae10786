#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "polar/model.hpp"
#include "polar/sde.hpp"
#include "polar/stepdown.hpp"

namespace polar {

struct FieldKnobs {
  int phi_points = 64;
  int r_points = 41;
  double r_min = 1.0;
  double r_max = 5.0;
  /// |dr| <= band * max |dr| is near-zero
  double band = 0.05;
};

struct TrajectoryKnobs {
  double t_max = 10.0;
  double r_a = 5.0;
  double r_b = 0.5;
  double phi0 = kPi / 8.0;
};

struct BlowupKnobs {
  int k_max = 60;
  int samples = 50;
  double r_lo = 0.5;
  double r_hi = 4.0;
  double t_max = 100.0;
  int box_k = 2;
  int box_samples = 100;
};

struct CrossingKnobs {
  double K_min = 1e2;
  double K_max = 1e5;
  int K_points = 7;
  std::vector<double> R = {1.0, 2.0, 4.0};
  /// a = pi/2 - a_offset
  double a_offset = 0.3;
  std::int64_t mc_n = 10000;
  double h = 2e-4;
};

struct StepdownKnobs {
  int k_lo = 4;
  int k_hi = 12;
  std::int64_t n = 100;
  FiberRunOptions fiber;
};

struct SemimarkovKnobs {
  int k_lo = 2;
  int k_hi = 16;
  std::int64_t n = 100;
  int k_cap = 64;
  int k0 = 4;
  int paths = 2;
  int max_stages = 60;
  double horizon = 1e9;
};

struct AttractorKnobs {
  double eps = 0.1;
  std::vector<int> k = {2, 3, 4, 5, 6};
  std::vector<double> t = {20.0, 50.0};
  std::int64_t n = 200;
  FiberRunOptions fiber = [] {
    FiberRunOptions o;
    o.resolution = 128;
    o.refine_below_box = 8;
    o.h_max = 2e-3;
    return o;
  }();
  /// `n,nu,mu,tail_bound` file from the semimarkov command; empty means estimate here
  std::string measure_csv;
  int tail_k = 6;
  double tail_t = 20.0;
  std::int64_t tail_n = 400;
  double x_split = 8.0;
  /// realizations rerun at twice the fiber resolution (0 disables)
  std::int64_t sensitivity_n = 0;
};

struct ExperimentConfig {
  Params params;
  StepDownConfig stepdown;
  IntegratorControls integrator;
  std::uint64_t seed = 1;
  std::string out = "out";

  FieldKnobs field;
  TrajectoryKnobs trajectories;
  BlowupKnobs det_blowup;
  CrossingKnobs crossing;
  StepdownKnobs sweep;
  SemimarkovKnobs semimarkov;
  AttractorKnobs attractor;

  /// Sets one dotted key. Throws Error(Config) naming the key when it is unknown
  /// or the value does not parse.
  void set(const std::string& key, const std::string& value);

  /// Every key with its current value, in key order.
  std::map<std::string, std::string> echo() const;
};

/// key=value lines; '#' starts a comment; blank lines ignored.
ExperimentConfig parse_config(std::istream& in);

ExperimentConfig load_config(const std::string& path);

}  // namespace polar
