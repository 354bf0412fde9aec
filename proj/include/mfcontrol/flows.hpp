#pragma once

// Characteristic flows of controlled fields: fixed-step RK4 aligned to the control
// partition, tangent (Jacobian) propagation, and the flow record used by the
// increment formula and the descent method.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mfcontrol/core_types.hpp"

namespace mfc {

inline constexpr double kDefaultBlowup = 1e6;

/// One classical RK4 step of x' = V_u(x), followed by the field's projection (if any).
template <int N, int M>
void rk4_step(const ParametricField<N, M>& field, const Vec<M>& u, Vec<N>& x, double h) {
  Vec<N> k1, k2, k3, k4;
  field.evaluate(x, u, &k1, nullptr);
  field.evaluate(x + 0.5 * h * k1, u, &k2, nullptr);
  field.evaluate(x + 0.5 * h * k2, u, &k3, nullptr);
  field.evaluate(x + h * k3, u, &k4, nullptr);
  x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  field.project(x, nullptr);
}

/// RK4 on the augmented system (x, Phi) with Phi' = D_xV(x) Phi. The update of Phi is the
/// exact derivative of the state update, so chained tangents differentiate the discrete flow.
template <int N, int M>
void rk4_tangent_step(const ParametricField<N, M>& field, const Vec<M>& u, Vec<N>& x, Mat<N>& tangent,
                      double h) {
  Vec<N> k1, k2, k3, k4;
  Mat<N> a1, a2, a3, a4;
  field.evaluate(x, u, &k1, &a1);
  const Mat<N> t1 = a1 * tangent;
  field.evaluate(x + 0.5 * h * k1, u, &k2, &a2);
  const Mat<N> t2 = a2 * (tangent + 0.5 * h * t1);
  field.evaluate(x + 0.5 * h * k2, u, &k3, &a3);
  const Mat<N> t3 = a3 * (tangent + 0.5 * h * t2);
  field.evaluate(x + h * k3, u, &k4, &a4);
  const Mat<N> t4 = a4 * (tangent + h * t3);
  x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  tangent += h * (t1 + 2.0 * t2 + 2.0 * t3 + t4) / 6.0;
  field.project(x, &tangent);
}

namespace detail {

template <int N>
void check_blowup(const Vec<N>& x, double bound, double t) {
  const double norm = x.norm();
  if (!(norm <= bound))
    throw DivergenceError("state norm " + std::to_string(norm) + " exceeded blow-up bound " +
                          std::to_string(bound), t);
}

}  // namespace detail

/// Substep lattice: every control interval split into `substeps` equal RK4 steps.
/// Lattice index k lives in interval k / substeps.
class StepGrid {
 public:
  StepGrid(TimePartition partition, std::size_t substeps)
      : partition_(std::move(partition)), substeps_(substeps) {
    if (substeps_ == 0) throw ConfigurationError("substeps per interval must be >= 1");
  }

  const TimePartition& partition() const noexcept { return partition_; }
  std::size_t substeps() const noexcept { return substeps_; }
  std::size_t total() const noexcept { return partition_.intervals() * substeps_; }
  std::size_t interval(std::size_t k) const { return std::min(k / substeps_, partition_.intervals() - 1); }
  std::size_t index_of_node(std::size_t node) const { return node * substeps_; }
  double step(std::size_t k) const {
    return partition_.length(interval(k)) / static_cast<double>(substeps_);
  }
  double time(std::size_t k) const {
    if (k >= total()) return partition_.horizon();
    const std::size_t i = k / substeps_;
    return partition_.node(i) + static_cast<double>(k % substeps_) * step(k);
  }

 private:
  TimePartition partition_;
  std::size_t substeps_;
};

/// Advances x over lattice steps [k_from, k_to) with a fixed control value.
template <int N, int M>
void march_constant(const ParametricField<N, M>& field, const Vec<M>& u, const StepGrid& grid, Vec<N>& x,
                    std::size_t k_from, std::size_t k_to, double blowup = kDefaultBlowup) {
  for (std::size_t k = k_from; k < k_to; ++k) {
    rk4_step(field, u, x, grid.step(k));
    detail::check_blowup<N>(x, blowup, grid.time(k + 1));
  }
}

/// Advances x over lattice steps [k_from, k_to) under `control`; propagates `tangent` when given.
template <int N, int M>
void march(const ParametricField<N, M>& field, const ControlSignal<M>& control, const StepGrid& grid,
           Vec<N>& x, std::size_t k_from, std::size_t k_to, std::type_identity_t<Mat<N>>* tangent = nullptr,
           double blowup = kDefaultBlowup) {
  for (std::size_t k = k_from; k < k_to; ++k) {
    const auto& u = control.value(grid.interval(k));
    const double h = grid.step(k);
    if (tangent)
      rk4_tangent_step(field, u, x, *tangent, h);
    else
      rk4_step(field, u, x, h);
    detail::check_blowup<N>(x, blowup, grid.time(k + 1));
  }
}

/// Flow map value and Jacobian from lattice index k_from to the horizon:
/// (X_{t,T}(x), D_x X_{t,T}(x)) with t = grid.time(k_from).
template <int N, int M>
std::pair<Vec<N>, Mat<N>> propagate_to_horizon(const ParametricField<N, M>& field,
                                               const ControlSignal<M>& control, const StepGrid& grid,
                                               Vec<N> x, std::size_t k_from,
                                               double blowup = kDefaultBlowup) {
  Mat<N> tangent = Mat<N>::Identity();
  march(field, control, grid, x, k_from, grid.total(), &tangent, blowup);
  return {x, tangent};
}

/// X_{from,to}(seed) by RK4 with `substeps` steps per full control interval. Pieces of
/// intervals get proportionally many steps (at least one); substeps never cross a node.
/// Backward integration (to < from) is supported.
template <int N, int M>
Vec<N> integrate_flow(const ParametricField<N, M>& field, const ControlSignal<M>& control, std::type_identity_t<Vec<N>> seed,
                      double from, double to, std::size_t substeps, double blowup = kDefaultBlowup) {
  const auto& part = control.partition();
  if (substeps == 0) throw ConfigurationError("substeps must be >= 1");
  if (from < 0.0 || from > part.horizon() || to < 0.0 || to > part.horizon())
    throw std::out_of_range("integration bounds outside [0, T]");
  if (from == to) return seed;
  const bool forward = to > from;
  double t = from;
  while (forward ? t < to : t > to) {
    // interval on the side we are moving into
    std::size_t i = 0;
    if (forward) {
      i = part.interval_of(t);
    } else {
      const auto& n = part.nodes();
      i = static_cast<std::size_t>(std::distance(n.begin(), std::lower_bound(n.begin(), n.end(), t))) - 1;
    }
    const double edge = forward ? std::min(part.node(i + 1), to) : std::max(part.node(i), to);
    const double span = std::abs(edge - t);
    const auto steps = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(static_cast<double>(substeps) * span / part.length(i) - 1e-9)));
    const double h = (edge - t) / static_cast<double>(steps);
    const auto& u = control.value(i);
    for (std::size_t s = 0; s < steps; ++s) {
      rk4_step(field, u, seed, h);
      detail::check_blowup<N>(seed, blowup, t + static_cast<double>(s + 1) * h);
    }
    t = edge;
  }
  return seed;
}

/// Forward states X_{0,t_i}(x) and Jacobians J_{t_i,T} = D_x X_{t_i,T} at every partition node.
template <int N>
struct FlowRecord {
  TimePartition partition;
  std::size_t substeps = 1;
  std::vector<std::vector<Vec<N>>> states;     // [node][seed]
  std::vector<std::vector<Mat<N>>> jacobians;  // [node][seed]

  double anchor_time() const { return partition.horizon(); }
  std::size_t nodes() const { return states.size(); }
  std::size_t seeds() const { return states.empty() ? 0 : states.front().size(); }
};

/// Integrates the flow forward from each seed, collecting per-interval tangents, and then
/// solves the Jacobian equation backward from J_{T,T} = E by J_{t_i,T} = J_{t_{i+1},T} Phi_i,
/// where Phi_i is the interval tangent along the stored trajectory.
template <int N, int M>
FlowRecord<N> integrate_jacobian_to_anchor(const ParametricField<N, M>& field,
                                           const ControlSignal<M>& control,
                                           const std::vector<Vec<N>>& seeds, std::size_t substeps,
                                           double blowup = kDefaultBlowup) {
  const StepGrid grid(control.partition(), substeps);
  const std::size_t intervals = control.partition().intervals();
  FlowRecord<N> rec{control.partition(), substeps, {}, {}};
  rec.states.assign(intervals + 1, std::vector<Vec<N>>(seeds.size()));
  rec.jacobians.assign(intervals + 1, std::vector<Mat<N>>(seeds.size(), Mat<N>::Identity()));
  std::vector<Mat<N>> interval_tangent(intervals);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (!all_finite<N>(seeds[s])) throw ConfigurationError("seed " + std::to_string(s) + " is not finite");
    Vec<N> x = seeds[s];
    rec.states[0][s] = x;
    for (std::size_t i = 0; i < intervals; ++i) {
      Mat<N> tangent = Mat<N>::Identity();
      march(field, control, grid, x, grid.index_of_node(i), grid.index_of_node(i + 1), &tangent, blowup);
      rec.states[i + 1][s] = x;
      interval_tangent[i] = tangent;
    }
    for (std::size_t i = intervals; i-- > 0;)
      rec.jacobians[i][s] = rec.jacobians[i + 1][s] * interval_tangent[i];
  }
  return rec;
}

/// d/dt X_{t,T}(x) = -J_{t,T}(x) V_t(x) at a recorded node.
template <int N>
Vec<N> inverse_flow_time_derivative(const FlowRecord<N>& record, const std::type_identity_t<Vec<N>>& field_value_at_t,
                                    std::size_t node, std::size_t seed) {
  return -record.jacobians.at(node).at(seed) * field_value_at_t;
}

}  // namespace mfc
