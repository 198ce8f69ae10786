#include "polar/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "polar/error.hpp"

namespace polar {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw Error(ErrorKind::Config, "bad value '" + text + "' for key " + key);
  }
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw Error(ErrorKind::Config, "empty list for key " + key);
  return out;
}

template <class T>
std::string format(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::string format_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format(v[i]);
  return s;
}

struct Field {
  std::function<void(const std::string& key, const std::string& value)> set;
  std::function<std::string()> get;
};

template <class T>
Field number(T& ref) {
  return {[&ref](const std::string& k, const std::string& v) { ref = parse_number<T>(k, v); },
          [&ref] { return format(ref); }};
}

template <class T>
Field list(std::vector<T>& ref) {
  return {[&ref](const std::string& k, const std::string& v) { ref = parse_list<T>(k, v); },
          [&ref] { return format_list(ref); }};
}

Field text(std::string& ref) {
  return {[&ref](const std::string&, const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

Field size(std::size_t& ref) {
  return {[&ref](const std::string& k, const std::string& v) {
            ref = static_cast<std::size_t>(parse_number<std::uint64_t>(k, v));
          },
          [&ref] { return format(static_cast<std::uint64_t>(ref)); }};
}

Field rule(StepRule& ref) {
  return {[&ref](const std::string& k, const std::string& v) {
            if (v == "stiffness") ref = StepRule::Stiffness;
            else if (v == "power_law") ref = StepRule::PowerLaw;
            else throw Error(ErrorKind::Config, "bad value '" + v + "' for key " + k);
          },
          [&ref] { return std::string(ref == StepRule::Stiffness ? "stiffness" : "power_law"); }};
}

void add_fiber(std::map<std::string, Field>& f, const std::string& prefix, FiberRunOptions& o) {
  f[prefix + ".resolution"] = size(o.resolution);
  f[prefix + ".refine_below_box"] = number(o.refine_below_box);
  f[prefix + ".h_max"] = number(o.h_max);
  f[prefix + ".min_steps"] = size(o.min_steps);
}

std::map<std::string, Field> fields(ExperimentConfig& c) {
  std::map<std::string, Field> f;
  f["seed"] = number(c.seed);
  f["out"] = text(c.out);

  f["params.w"] = number(c.params.w);
  f["params.v"] = number(c.params.v);
  f["params.gamma"] = number(c.params.gamma);
  f["params.sigma"] = number(c.params.sigma);

  f["stepdown.eps"] = number(c.stepdown.eps);
  f["stepdown.eps_tilde"] = number(c.stepdown.eps_tilde);
  f["stepdown.T"] = number(c.stepdown.T);
  f["stepdown.d"] = number(c.stepdown.d);
  f["stepdown.k_lo"] = number(c.sweep.k_lo);
  f["stepdown.k_hi"] = number(c.sweep.k_hi);
  f["stepdown.n"] = number(c.sweep.n);
  add_fiber(f, "stepdown", c.sweep.fiber);

  IntegratorControls& g = c.integrator;
  f["integrator.h0"] = number(g.h0);
  f["integrator.r_explode"] = number(g.r_explode);
  f["integrator.rule"] = rule(g.rule);
  f["integrator.stiffness_scale"] = number(g.stiffness_scale);
  f["integrator.rho"] = number(g.rho);
  f["integrator.max_steps"] = number(g.max_steps);
  f["integrator.r_min"] = number(g.r_min);
  f["integrator.refine_ratio"] = number(g.refine_ratio);
  f["integrator.max_depth"] = number(g.max_depth);

  f["field.phi_points"] = number(c.field.phi_points);
  f["field.r_points"] = number(c.field.r_points);
  f["field.r_min"] = number(c.field.r_min);
  f["field.r_max"] = number(c.field.r_max);
  f["field.band"] = number(c.field.band);

  f["trajectories.t_max"] = number(c.trajectories.t_max);
  f["trajectories.r_a"] = number(c.trajectories.r_a);
  f["trajectories.r_b"] = number(c.trajectories.r_b);
  f["trajectories.phi0"] = number(c.trajectories.phi0);

  f["det_blowup.k_max"] = number(c.det_blowup.k_max);
  f["det_blowup.samples"] = number(c.det_blowup.samples);
  f["det_blowup.r_lo"] = number(c.det_blowup.r_lo);
  f["det_blowup.r_hi"] = number(c.det_blowup.r_hi);
  f["det_blowup.t_max"] = number(c.det_blowup.t_max);
  f["det_blowup.box_k"] = number(c.det_blowup.box_k);
  f["det_blowup.box_samples"] = number(c.det_blowup.box_samples);

  f["crossing.K_min"] = number(c.crossing.K_min);
  f["crossing.K_max"] = number(c.crossing.K_max);
  f["crossing.K_points"] = number(c.crossing.K_points);
  f["crossing.R"] = list(c.crossing.R);
  f["crossing.a_offset"] = number(c.crossing.a_offset);
  f["crossing.mc_n"] = number(c.crossing.mc_n);
  f["crossing.h"] = number(c.crossing.h);

  f["semimarkov.k_lo"] = number(c.semimarkov.k_lo);
  f["semimarkov.k_hi"] = number(c.semimarkov.k_hi);
  f["semimarkov.n"] = number(c.semimarkov.n);
  f["semimarkov.k_cap"] = number(c.semimarkov.k_cap);
  f["semimarkov.k0"] = number(c.semimarkov.k0);
  f["semimarkov.paths"] = number(c.semimarkov.paths);
  f["semimarkov.max_stages"] = number(c.semimarkov.max_stages);
  f["semimarkov.horizon"] = number(c.semimarkov.horizon);

  f["attractor.eps"] = number(c.attractor.eps);
  f["attractor.k"] = list(c.attractor.k);
  f["attractor.t"] = list(c.attractor.t);
  f["attractor.n"] = number(c.attractor.n);
  add_fiber(f, "attractor", c.attractor.fiber);
  f["attractor.measure_csv"] = text(c.attractor.measure_csv);
  f["attractor.tail_k"] = number(c.attractor.tail_k);
  f["attractor.tail_t"] = number(c.attractor.tail_t);
  f["attractor.tail_n"] = number(c.attractor.tail_n);
  f["attractor.x_split"] = number(c.attractor.x_split);
  f["attractor.sensitivity_n"] = number(c.attractor.sensitivity_n);
  return f;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto f = fields(*this);
  const auto it = f.find(key);
  if (it == f.end()) throw Error(ErrorKind::Config, "unknown key " + key);
  it->second.set(key, value);
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
  ExperimentConfig copy = *this;
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields(copy)) out[key] = field.get();
  return out;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  try {
    c.params.validate();
    c.stepdown.validate();
    c.integrator.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  return parse_config(in);
}

}  // namespace polar
