#pragma once

// Continuity-equation solvers: Lagrangian (pushforward of particles through the
// characteristic flow) and Eulerian (explicit Lax-Friedrichs on a uniform grid).

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mfcontrol/core_types.hpp"
#include "mfcontrol/flows.hpp"

namespace mfc {

/// mu_{t_k} = (X_{0,t_k})# initial at every node of the control partition.
template <int N, int M>
std::vector<ParticleMeasure<N>> solve_lagrangian(const ParametricField<N, M>& field,
                                                 const ControlSignal<M>& control,
                                                 const ParticleMeasure<N>& initial, std::size_t substeps,
                                                 double blowup = kDefaultBlowup) {
  const StepGrid grid(control.partition(), substeps);
  const std::size_t intervals = control.partition().intervals();
  std::vector<ParticleMeasure<N>> out;
  out.reserve(intervals + 1);
  out.push_back(initial);
  std::vector<Vec<N>> pts = initial.points();
  for (std::size_t i = 0; i < intervals; ++i) {
    for (auto& x : pts) march(field, control, grid, x, grid.index_of_node(i), grid.index_of_node(i + 1), nullptr, blowup);
    out.push_back(initial.with_points(pts));
  }
  return out;
}

template <int N>
struct EulerianTrajectory {
  std::vector<double> times;
  std::vector<GridMeasure<N>> snapshots;
  double dt = 0.0;               // effective step
  std::size_t steps = 0;
  std::size_t clipped_cells = 0;  // updates that went below -1e-12 and were reset to 0
};

struct LaxFriedrichsOptions {
  std::size_t store_stride = 0;  // 0: store only the initial and final snapshots
  double negative_tolerance = 1e-12;
};

namespace detail {

template <int N>
std::array<std::size_t, N> row_major_strides(const std::array<GridAxis, N>& axes) {
  std::array<std::size_t, N> s{};
  s[N - 1] = 1;
  for (int k = N - 2; k >= 0; --k)
    s[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k + 1)] * axes[static_cast<std::size_t>(k + 1)].count;
  return s;
}

}  // namespace detail

/// Largest dt * |V_k| / h_k over cell centres and the control values used on [0, t_end].
/// Returns the ratio and the worst cell.
template <int N, int M>
std::pair<double, std::size_t> courant_number(const ParametricField<N, M>& field, const ControlSignal<M>& control,
                                              const GridMeasure<N>& grid, double t_end, double dt) {
  const auto& part = control.partition();
  const std::size_t last = part.interval_of(std::min(t_end, part.horizon()));
  double worst = 0.0;
  std::size_t worst_cell = 0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const Vec<N> x = grid.center(c);
    for (std::size_t i = 0; i <= last; ++i) {
      const Vec<N> v = field.value(x, control.value(i));
      for (int k = 0; k < N; ++k) {
        const double r = dt * std::abs(v[k]) / grid.axis(k).spacing;
        if (r > worst) {
          worst = r;
          worst_cell = c;
        }
      }
    }
  }
  return {worst, worst_cell};
}

/// Explicit Lax-Friedrichs for d/dt rho + div(V_u rho) = 0:
///   rho_i^new = mean of the 2N axis neighbours - sum_k dt/(2 h_k) (F_k,i+1 - F_k,i-1),  F_k = V_k rho.
/// Periodic axes wrap. Reflecting axes use a ghost cell that mirrors the density and negates the
/// normal flux, so no mass crosses the wall. The control is sampled at each step's left end.
template <int N, int M>
EulerianTrajectory<N> solve_lax_friedrichs(const ParametricField<N, M>& field, const ControlSignal<M>& control,
                                           const GridMeasure<N>& initial, double t_end, double dt,
                                           const LaxFriedrichsOptions& options = {}) {
  if (!(dt > 0.0) || !(t_end > 0.0) || t_end > control.partition().horizon() + 1e-12)
    throw ConfigurationError("Lax-Friedrichs needs dt > 0 and 0 < t_end <= T");
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  const double h_t = t_end / static_cast<double>(steps);

  const auto [cfl, worst_cell] = courant_number(field, control, initial, t_end, h_t);
  if (cfl > 1.0) {
    const Vec<N> x = initial.center(worst_cell);
    std::string at;
    for (int k = 0; k < N; ++k) at += (k ? ", " : "") + std::to_string(x[k]);
    throw ConfigurationError("CFL condition violated: dt*|V|/h = " + std::to_string(cfl) + " at cell " +
                             std::to_string(worst_cell) + " (" + at + ")");
  }

  const auto& axes = initial.axes();
  const auto& bnd = initial.boundaries();
  const auto stride = detail::row_major_strides<N>(axes);
  const std::size_t cells = initial.cell_count();

  std::vector<Vec<N>> centers(cells);
  for (std::size_t c = 0; c < cells; ++c) centers[c] = initial.center(c);

  // neighbour table: for cell c and axis k, (minus, plus) indices and whether the flux is mirrored
  struct Neighbour {
    std::size_t index;
    bool mirrored;
  };
  std::vector<std::array<std::array<Neighbour, 2>, N>> nb(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const auto idx = initial.unflatten(c);
    for (std::size_t k = 0; k < static_cast<std::size_t>(N); ++k) {
      const std::size_t n = axes[k].count;
      const std::size_t i = idx[k];
      Neighbour lo{}, hi{};
      if (bnd[k] == Boundary::periodic) {
        lo = {c - i * stride[k] + ((i + n - 1) % n) * stride[k], false};
        hi = {c - i * stride[k] + ((i + 1) % n) * stride[k], false};
      } else {
        lo = i == 0 ? Neighbour{c, true} : Neighbour{c - stride[k], false};
        hi = i + 1 == n ? Neighbour{c, true} : Neighbour{c + stride[k], false};
      }
      nb[c][k] = {lo, hi};
    }
  }

  EulerianTrajectory<N> traj;
  traj.dt = h_t;
  traj.steps = steps;
  traj.times.push_back(0.0);
  traj.snapshots.push_back(initial);

  std::vector<double> rho = initial.density();
  std::vector<double> next(cells);
  std::vector<Vec<N>> velocity(cells);
  std::size_t cached_interval = static_cast<std::size_t>(-1);
  std::array<double, N> ratio{};
  for (int k = 0; k < N; ++k) ratio[static_cast<std::size_t>(k)] = h_t / (2.0 * axes[static_cast<std::size_t>(k)].spacing);
  const double inv_neighbours = 1.0 / (2.0 * N);

  for (std::size_t s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) * h_t;
    const std::size_t interval = control.partition().interval_of(std::min(t, control.partition().horizon()));
    if (interval != cached_interval) {
      const auto& u = control.value(interval);
      for (std::size_t c = 0; c < cells; ++c) velocity[c] = field.value(centers[c], u);
      cached_interval = interval;
    }
    for (std::size_t c = 0; c < cells; ++c) {
      double avg = 0.0;
      double div = 0.0;
      for (std::size_t k = 0; k < static_cast<std::size_t>(N); ++k) {
        const auto& [lo, hi] = nb[c][k];
        const int kk = static_cast<int>(k);
        avg += rho[lo.index] + rho[hi.index];
        const double f_lo = (lo.mirrored ? -1.0 : 1.0) * velocity[lo.index][kk] * rho[lo.index];
        const double f_hi = (hi.mirrored ? -1.0 : 1.0) * velocity[hi.index][kk] * rho[hi.index];
        div += ratio[k] * (f_hi - f_lo);
      }
      double value = avg * inv_neighbours - div;
      if (value < 0.0) {
        if (value < -options.negative_tolerance) ++traj.clipped_cells;
        value = 0.0;
      }
      next[c] = value;
    }
    rho.swap(next);
    const bool last = s + 1 == steps;
    if (last || (options.store_stride > 0 && (s + 1) % options.store_stride == 0)) {
      traj.times.push_back(last ? t_end : static_cast<double>(s + 1) * h_t);
      traj.snapshots.push_back(initial.with_density(rho));
    }
  }
  return traj;
}

/// Writes one grid file per stored snapshot, named snapshot_<index>.dat.
template <int N>
void export_trajectory(const std::filesystem::path& dir, const EulerianTrajectory<N>& traj) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i)
    write_grid_measure((dir / ("snapshot_" + std::to_string(i) + ".dat")).string(), traj.snapshots[i]);
}

}  // namespace mfc
