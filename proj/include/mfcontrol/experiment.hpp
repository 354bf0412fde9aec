#pragma once

// Robust pulse design for distributed Bloch ensembles: configuration file handling
// and the end-to-end experiment driver.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mfcontrol/bloch.hpp"
#include "mfcontrol/descent.hpp"
#include "mfcontrol/transport.hpp"

namespace mfc::bloch {

struct ExperimentConfig {
  double horizon = 2.0;
  double alpha = 0.25;
  double beta = 0.5;
  double theta_target = 0.0;
  double phi_target = 0.5 * std::numbers::pi;
  double grid_spacing_theta = 0.05;
  double grid_spacing_phi = 0.05;
  double dt = 1e-3;                      // RK4 substep bound for particle flows
  std::size_t control_intervals = 40;    // sampling partition of the control
  PhiDomain phi_domain{};
  double u_min = 0.0;
  double u_max = 2.0;
  double u0 = 0.1;
  OffsetDistribution offsets = OffsetDistribution::single(-0.5);
  std::size_t max_iterations = 10;
  double stagnation_tolerance = 1e-3;
  std::string initial_density = "bump";  // "bump" or a grid file path
  Bump bump{};
  double mass_floor = 1e-12;
  double eulerian_cfl = 0.9;
  std::size_t snapshot_stride = 0;
  double memory_budget_mb = 1024.0;
  std::string output_dir = "bloch_out";

  std::size_t substeps() const {
    const double len = horizon / static_cast<double>(control_intervals);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / dt - 1e-9)));
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigurationError(std::string(name) + " must be positive");
    };
    positive(horizon, "T");
    positive(grid_spacing_theta, "grid_spacing_theta");
    positive(grid_spacing_phi, "grid_spacing_phi");
    positive(dt, "dt");
    positive(eulerian_cfl, "eulerian_cfl");
    positive(memory_budget_mb, "memory_budget_mb");
    positive(stagnation_tolerance, "stagnation_tolerance");
    if (alpha < 0.0) throw ConfigurationError("alpha must be nonnegative");
    if (beta < 0.0) throw ConfigurationError("beta must be nonnegative");
    if (eulerian_cfl > 1.0) throw ConfigurationError("eulerian_cfl must not exceed 1");
    if (control_intervals == 0) throw ConfigurationError("control_intervals must be >= 1");
    if (max_iterations == 0) throw ConfigurationError("max_iterations must be >= 1");
    if (!(u_min <= u_max)) throw ConfigurationError("u_min must not exceed u_max");
    if (u0 < u_min || u0 > u_max) throw ConfigurationError("u0 must lie in [u_min, u_max]");
    if (dt > horizon / static_cast<double>(control_intervals))
      throw ConfigurationError("dt exceeds the control interval length");
    phi_domain.validate();
  }
};

namespace detail {

/// Number, optionally followed by "pi" ("0.95pi", "pi").
inline double parse_angle(const std::string& key, const std::string& text) {
  std::string s = text;
  double factor = 1.0;
  if (s.size() >= 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
    factor = std::numbers::pi;
    s = s.substr(0, s.size() - 2);
    if (!s.empty() && s.back() == '*') s.pop_back();
    if (s.empty()) return factor;
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v * factor;
  } catch (const std::exception&) {
    throw ConfigurationError("key '" + key + "': cannot parse '" + text + "' as a number");
  }
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
  const double v = parse_angle(key, text);
  if (v < 0.0 || v != std::floor(v)) throw ConfigurationError("key '" + key + "' needs a nonnegative integer");
  return static_cast<std::size_t>(v);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// Flat "key = value" text; '#' starts a comment; unknown keys are errors.
/// Offsets: "offsets = single -0.5" or "offsets = uniform -0.55 -0.45 5".
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  using detail::parse_angle;
  using detail::parse_count;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
      {"T", [&](auto& k, auto& v) { c.horizon = parse_angle(k, v); }},
      {"alpha", [&](auto& k, auto& v) { c.alpha = parse_angle(k, v); }},
      {"beta", [&](auto& k, auto& v) { c.beta = parse_angle(k, v); }},
      {"theta_target", [&](auto& k, auto& v) { c.theta_target = parse_angle(k, v); }},
      {"phi_target", [&](auto& k, auto& v) { c.phi_target = parse_angle(k, v); }},
      {"grid_spacing", [&](auto& k, auto& v) { c.grid_spacing_theta = c.grid_spacing_phi = parse_angle(k, v); }},
      {"grid_spacing_theta", [&](auto& k, auto& v) { c.grid_spacing_theta = parse_angle(k, v); }},
      {"grid_spacing_phi", [&](auto& k, auto& v) { c.grid_spacing_phi = parse_angle(k, v); }},
      {"dt", [&](auto& k, auto& v) { c.dt = parse_angle(k, v); }},
      {"control_intervals", [&](auto& k, auto& v) { c.control_intervals = parse_count(k, v); }},
      {"phi_min", [&](auto& k, auto& v) { c.phi_domain.lo = parse_angle(k, v); }},
      {"phi_max", [&](auto& k, auto& v) { c.phi_domain.hi = parse_angle(k, v); }},
      {"u_min", [&](auto& k, auto& v) { c.u_min = parse_angle(k, v); }},
      {"u_max", [&](auto& k, auto& v) { c.u_max = parse_angle(k, v); }},
      {"u0", [&](auto& k, auto& v) { c.u0 = parse_angle(k, v); }},
      {"max_iterations", [&](auto& k, auto& v) { c.max_iterations = parse_count(k, v); }},
      {"stagnation_tolerance", [&](auto& k, auto& v) { c.stagnation_tolerance = parse_angle(k, v); }},
      {"initial_density", [&](auto&, auto& v) { c.initial_density = v; }},
      {"bump_theta", [&](auto& k, auto& v) { c.bump.theta = parse_angle(k, v); }},
      {"bump_phi", [&](auto& k, auto& v) { c.bump.phi = parse_angle(k, v); }},
      {"bump_sigma_theta", [&](auto& k, auto& v) { c.bump.sigma_theta = parse_angle(k, v); }},
      {"bump_sigma_phi", [&](auto& k, auto& v) { c.bump.sigma_phi = parse_angle(k, v); }},
      {"mass_floor", [&](auto& k, auto& v) { c.mass_floor = parse_angle(k, v); }},
      {"eulerian_cfl", [&](auto& k, auto& v) { c.eulerian_cfl = parse_angle(k, v); }},
      {"snapshot_stride", [&](auto& k, auto& v) { c.snapshot_stride = parse_count(k, v); }},
      {"memory_budget_mb", [&](auto& k, auto& v) { c.memory_budget_mb = parse_angle(k, v); }},
      {"output_dir", [&](auto&, auto& v) { c.output_dir = v; }},
      {"offsets",
       [&](auto& k, auto& v) {
         std::istringstream ss(v);
         std::string kind;
         ss >> kind;
         std::vector<std::string> args;
         for (std::string a; ss >> a;) args.push_back(a);
         if (kind == "single" && args.size() == 1) {
           c.offsets = OffsetDistribution::single(parse_angle(k, args[0]));
         } else if (kind == "uniform" && args.size() == 3) {
           c.offsets = OffsetDistribution::uniform_midpoint(parse_angle(k, args[0]), parse_angle(k, args[1]),
                                                            parse_count(k, args[2]));
         } else {
           throw ConfigurationError("offsets must be 'single <eta>' or 'uniform <a> <b> <n>'");
         }
       }},
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigurationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigurationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config file '" + path + "'");
  return parse_config(in);
}

struct ExperimentResult {
  IterationTrace<1> trace;
  GridMeasure<2> initial_density;
  GridMeasure<2> final_density;
  std::size_t particles = 0;
  std::size_t eulerian_clipped = 0;
  double eulerian_dt = 0.0;
};

inline GridMeasure<2> initial_grid(const ExperimentConfig& c) {
  if (c.initial_density == "bump")
    return gaussian_bump(sphere_axes(c.grid_spacing_theta, c.grid_spacing_phi, c.phi_domain), c.bump);
  return read_grid_measure<2>(c.initial_density);
}

/// Lax-Friedrichs step for the Bloch field at `eta` over all control values used. The averaging
/// update over 2N neighbours stays positive only for per-axis ratios <= 1/N, hence the factor 2.
inline double eulerian_step(const ExperimentConfig& c, const GridMeasure<2>& grid, double eta,
                            const ControlSignal<1>& control) {
  const auto field = bloch_field(eta, c.phi_domain);
  const auto [ratio, cell] = courant_number(field, control, grid, control.partition().horizon(), 1.0);
  (void)cell;
  return ratio > 0.0 ? c.eulerian_cfl / (2.0 * ratio) : c.horizon;
}

inline std::vector<EnsembleMember<2, 1>> make_members(const ExperimentConfig& c, const ParticleMeasure<2>& particles) {
  const auto cost = bloch_cost(c.theta_target, c.phi_target, c.beta);
  std::vector<EnsembleMember<2, 1>> members;
  for (std::size_t j = 0; j < c.offsets.nodes().size(); ++j)
    members.push_back({bloch_particle_field(c.offsets.nodes()[j], c.phi_domain), cost, particles, c.offsets.weights()[j]});
  return members;
}

inline DescentConfig<1> make_descent_config(const ExperimentConfig& c) {
  DescentConfig<1> d;
  d.max_iterations = c.max_iterations;
  d.stagnation_tolerance = c.stagnation_tolerance;
  d.substeps = c.substeps();
  d.energy_weight = c.alpha;
  if (c.alpha == 0.0) d.candidates = ControlSet<1>::scalar(c.u_min, c.u_max).with_uniform_candidates(41).candidates();
  return d;
}

inline ControlSignal<1> initial_control(const ExperimentConfig& c) {
  return ControlSignal<1>::constant(TimePartition::uniform(c.horizon, c.control_intervals), Vec<1>::Constant(c.u0),
                                    ControlSet<1>::scalar(c.u_min, c.u_max));
}

/// Runs the descent and writes trace.csv, control_<k>.csv, density_initial.dat and
/// density_final.dat (Lax-Friedrichs under the final control at the mean offset).
inline ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr) {
  c.validate();
  const auto grid = initial_grid(c);
  if (grid.boundaries() != kSphereBoundaries) throw ConfigurationError("initial density must be periodic x reflecting");

  // storage guard: initial + final (+ strided) snapshots of the Eulerian run
  {
    const auto u0 = initial_control(c);
    const auto bounds = ControlSet<1>::scalar(c.u_min, c.u_max);
    const auto worst = ControlSignal<1>::constant(u0.partition(), Vec<1>::Constant(std::max(std::abs(c.u_min), std::abs(c.u_max))), bounds);
    const double dt_lf = eulerian_step(c, grid, c.offsets.mean(), worst);
    const double steps = std::ceil(c.horizon / dt_lf);
    const double stored = 2.0 + (c.snapshot_stride > 0 ? steps / static_cast<double>(c.snapshot_stride) : 0.0);
    const double mb = stored * static_cast<double>(grid.cell_count()) * sizeof(double) / (1024.0 * 1024.0);
    if (mb > c.memory_budget_mb)
      throw ConfigurationError("snapshot storage of " + std::to_string(mb) + " MB exceeds memory_budget_mb = " +
                               std::to_string(c.memory_budget_mb));
  }

  const auto particles = to_particles(grid, c.mass_floor);
  const auto members = make_members(c, particles);
  const auto config = make_descent_config(c);
  const auto u0 = initial_control(c);
  if (log)
    *log << "particles: " << particles.size() << ", offsets: " << members.size()
         << ", control intervals: " << c.control_intervals << ", substeps/interval: " << config.substeps << '\n';

  const auto start = std::chrono::steady_clock::now();
  auto trace = run_descent(members, u0, config);
  if (log) {
    for (std::size_t k = 0; k < trace.entries.size(); ++k)
      *log << "iteration " << k << ": cost " << trace.entries[k].cost << ", pmp residual "
           << trace.entries[k].pmp_residual << '\n';
    *log << "descent time: "
         << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  }

  const auto& final_control = trace.entries.back().control;
  const double eta = c.offsets.mean();
  const double dt_lf = eulerian_step(c, grid, eta, final_control);
  LaxFriedrichsOptions lf;
  lf.store_stride = c.snapshot_stride;
  const auto traj = solve_lax_friedrichs(bloch_field(eta, c.phi_domain), final_control, grid, c.horizon, dt_lf, lf);

  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  write_trace_csv((dir / "trace.csv").string(), trace);
  for (std::size_t k = 0; k < trace.entries.size(); ++k)
    write_control_csv((dir / ("control_" + std::to_string(k) + ".csv")).string(), trace.entries[k].control);
  write_grid_measure((dir / "density_initial.dat").string(), grid);
  write_grid_measure((dir / "density_final.dat").string(), traj.snapshots.back());
  if (c.snapshot_stride > 0) export_trajectory(dir / "snapshots", traj);

  return {std::move(trace), grid, traj.snapshots.back(), particles.size(), traj.clipped_cells, traj.dt};
}

}  // namespace mfc::bloch
