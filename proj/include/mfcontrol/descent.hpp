#pragma once

// Line-search-free descent for ensemble control. Each iteration:
//  i)   takes the current control u^k as the reference flow,
//  ii)  marches the particle ensemble forward interval by interval; at every node the
//       feedback objective is built from the adjoint vectors of the composite measure
//       (Xbar_{t,T} o current states) and minimized over U (sampled feedback),
//  iii) returns the piecewise-constant control assembled from those minimizers.
// Several ensemble members (distributed ensembles) share one control; their adjoint
// sums are combined with the member weights before minimizing.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mfcontrol/core_types.hpp"
#include "mfcontrol/flows.hpp"
#include "mfcontrol/functionals.hpp"
#include "mfcontrol/increment.hpp"

namespace mfc {

template <int N, int M>
struct EnsembleMember {
  ParametricField<N, M> field;
  Functional<N> ell;
  ParticleMeasure<N> initial;
  double weight = 1.0;
};

template <int M>
struct DescentConfig {
  std::size_t max_iterations = 10;
  double stagnation_tolerance = 1e-3;  // relative cost decrease that ends the run
  std::size_t substeps = 50;           // RK4 steps per control interval
  std::vector<Vec<M>> candidates;      // exhaustive minimization grid (non-affine fields or alpha = 0)
  double energy_weight = 0.0;          // alpha
  double monotonicity_slack = 1e-9;    // admissible absolute cost increase
  double blowup = kDefaultBlowup;

  void validate(const ControlSet<M>& bounds) const {
    if (max_iterations < 1) throw ConfigurationError("max_iterations must be >= 1");
    if (!(stagnation_tolerance > 0.0)) throw ConfigurationError("stagnation_tolerance must be positive");
    if (substeps < 1) throw ConfigurationError("substeps must be >= 1");
    if (energy_weight < 0.0) throw ConfigurationError("energy weight must be nonnegative");
    for (const auto& c : candidates)
      if (!bounds.contains(c, 1e-12)) throw ConfigurationError("control candidate outside U");
  }
};

/// Phi(v) = sum_terms w p . V_v(x) + (alpha/2)|v|^2.
template <int N, int M>
class FeedbackObjective {
 public:
  explicit FeedbackObjective(double alpha) : alpha_(alpha) {}

  void add(const ParametricField<N, M>& field, const Vec<N>& x, double weight, const Vec<N>& p) {
    if (field.has_affine()) {
      linear_ += weight * field.gain(x).transpose() * p;
      constant_ += weight * p.dot(field.drift(x));
    } else {
      all_affine_ = false;
    }
    terms_.push_back({&field, x, weight, p});
  }

  double operator()(const Vec<M>& v) const {
    double s = 0.0;
    if (all_affine_) {
      s = linear_.dot(v) + constant_;
    } else {
      for (const auto& t : terms_) s += t.weight * t.p.dot(t.field->value(t.x, v));
    }
    return s + 0.5 * alpha_ * v.squaredNorm();
  }

  /// Affine fields with alpha > 0 have the separable minimizer clip(-c / alpha, U).
  bool has_closed_form() const noexcept { return all_affine_ && alpha_ > 0.0; }
  const Vec<M>& linear_coefficient() const noexcept { return linear_; }

  /// argmin over U. Exhaustive ties (within 1e-12 relative) go to the candidate closest to
  /// `previous`, then to the lexicographically smallest one.
  Vec<M> minimize(const ControlSet<M>& bounds, const std::vector<Vec<M>>& candidates, const Vec<M>& previous) const {
    if (has_closed_form()) return bounds.clip(-linear_ / alpha_);
    if (candidates.empty())
      throw ConfigurationError("feedback minimization needs a candidate grid (non-affine field or alpha = 0)");
    std::vector<double> phi(candidates.size());
    double best = std::numeric_limits<double>::infinity();
    double scale = 0.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      phi[c] = (*this)(candidates[c]);
      best = std::min(best, phi[c]);
      scale = std::max(scale, std::abs(phi[c]));
    }
    const double tie = 1e-12 * (1.0 + scale);
    std::size_t pick = candidates.size();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (phi[c] > best + tie) continue;
      if (pick == candidates.size()) {
        pick = c;
        continue;
      }
      const double dc = (candidates[c] - previous).norm();
      const double dp = (candidates[pick] - previous).norm();
      if (dc < dp || (dc == dp && lexicographically_less(candidates[c], candidates[pick]))) pick = c;
    }
    return candidates[pick];
  }

  /// min over U, or over candidates plus `current` when no closed form exists.
  double minimum(const ControlSet<M>& bounds, const std::vector<Vec<M>>& candidates, const Vec<M>& current) const {
    if (has_closed_form()) return (*this)(bounds.clip(-linear_ / alpha_));
    double best = (*this)(current);
    for (const auto& c : candidates) best = std::min(best, (*this)(c));
    return best;
  }

 private:
  struct Term {
    const ParametricField<N, M>* field;
    Vec<N> x;
    double weight;
    Vec<N> p;
  };

  static bool lexicographically_less(const Vec<M>& a, const Vec<M>& b) {
    for (int k = 0; k < M; ++k) {
      if (a[k] < b[k]) return true;
      if (a[k] > b[k]) return false;
    }
    return false;
  }

  double alpha_;
  bool all_affine_ = true;
  Vec<M> linear_ = Vec<M>::Zero();
  double constant_ = 0.0;
  std::vector<Term> terms_;
};

template <int N>
struct AdjointSample {
  Vec<N> x;
  double weight;
  Vec<N> p;  // transported intrinsic derivative
};

/// Pointwise feedback: argmin_v sum_i w_i p_i . V_v(x_i) + (alpha/2)|v|^2 over U.
template <int N, int M>
Vec<M> feedback_minimize(const std::vector<AdjointSample<N>>& samples, const ParametricField<N, M>& field,
                         const ControlSet<M>& bounds, const std::vector<std::type_identity_t<Vec<M>>>& candidates,
                         double alpha, const std::type_identity_t<Vec<M>>& previous) {
  FeedbackObjective<N, M> obj(alpha);
  for (const auto& s : samples) obj.add(field, s.x, s.weight, s.p);
  return obj.minimize(bounds, candidates, previous);
}

/// I[u] = sum_j weight_j l_j(mu_T^j[u]) + (alpha/2) int |u|^2.
template <int N, int M>
double total_cost(const std::vector<EnsembleMember<N, M>>& members, const ControlSignal<M>& control,
                  const DescentConfig<M>& config) {
  const StepGrid grid(control.partition(), config.substeps);
  double cost = 0.0;
  for (const auto& m : members) {
    std::vector<Vec<N>> pts = m.initial.points();
    for (auto& x : pts) march(m.field, control, grid, x, 0, grid.total(), nullptr, config.blowup);
    cost += m.weight * m.ell.value(m.initial.with_points(std::move(pts)));
  }
  return cost + energy_cost(control, config.energy_weight);
}

/// sum_i dt_i [Phi_i(u_i) - min Phi_i] with Phi_i built along the control's own flow.
template <int N, int M>
double pmp_residual(const std::vector<EnsembleMember<N, M>>& members, const ControlSignal<M>& control,
                    const DescentConfig<M>& config) {
  const auto& part = control.partition();
  std::vector<FlowRecord<N>> records;
  std::vector<std::vector<Vec<N>>> terminal_grads;
  for (const auto& m : members) {
    records.push_back(integrate_jacobian_to_anchor(m.field, control, m.initial.points(), config.substeps, config.blowup));
    terminal_grads.push_back(m.ell.intrinsic_derivatives(m.initial.with_points(records.back().states.back())));
  }
  double residual = 0.0;
  for (std::size_t i = 0; i < part.intervals(); ++i) {
    FeedbackObjective<N, M> obj(config.energy_weight);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const auto& m = members[j];
      for (std::size_t p = 0; p < m.initial.size(); ++p)
        obj.add(m.field, records[j].states[i][p], m.weight * m.initial.weight(p),
                records[j].jacobians[i][p].transpose() * terminal_grads[j][p]);
    }
    const auto& u = control.value(i);
    residual += part.length(i) * std::max(0.0, obj(u) - obj.minimum(control.bounds(), config.candidates, u));
  }
  return residual;
}

template <int M>
struct TraceEntry {
  double cost = 0.0;
  double pmp_residual = 0.0;
  ControlSignal<M> control;
};

template <int M>
struct IterationTrace {
  std::vector<TraceEntry<M>> entries;  // entries[0] is the initial control
  bool stagnated = false;

  std::vector<double> costs() const {
    std::vector<double> c;
    for (const auto& e : entries) c.push_back(e.cost);
    return c;
  }
};

template <int N, int M>
TraceEntry<M> run_iteration(const std::vector<EnsembleMember<N, M>>& members, const ControlSignal<M>& current,
                            const DescentConfig<M>& config) {
  config.validate(current.bounds());
  if (members.empty()) throw ConfigurationError("descent needs at least one ensemble member");
  const auto& part = current.partition();
  const StepGrid grid(part, config.substeps);

  std::vector<std::vector<Vec<N>>> states;
  for (const auto& m : members) states.push_back(m.initial.points());

  std::vector<Vec<M>> values(part.intervals());
  for (std::size_t i = 0; i < part.intervals(); ++i) {
    const std::size_t k = grid.index_of_node(i);
    FeedbackObjective<N, M> obj(config.energy_weight);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const auto& m = members[j];
      const auto p = transported_gradients(m.field, current, grid, m.ell, m.initial, states[j], k, config.blowup);
      for (std::size_t s = 0; s < states[j].size(); ++s)
        obj.add(m.field, states[j][s], m.weight * m.initial.weight(s), p[s]);
    }
    values[i] = obj.minimize(current.bounds(), config.candidates, current.value(i));
    for (std::size_t j = 0; j < members.size(); ++j)
      for (auto& x : states[j])
        march_constant(members[j].field, values[i], grid, x, k, grid.index_of_node(i + 1), config.blowup);
  }

  ControlSignal<M> next(part, std::move(values), current.bounds());
  double cost = 0.0;
  for (std::size_t j = 0; j < members.size(); ++j)
    cost += members[j].weight * members[j].ell.value(members[j].initial.with_points(states[j]));
  cost += energy_cost(next, config.energy_weight);
  const double residual = pmp_residual(members, next, config);
  return {cost, residual, std::move(next)};
}

template <int N, int M>
IterationTrace<M> run_descent(const std::vector<EnsembleMember<N, M>>& members, const ControlSignal<M>& u0,
                              const DescentConfig<M>& config) {
  config.validate(u0.bounds());
  IterationTrace<M> trace;
  trace.entries.push_back({total_cost(members, u0, config), pmp_residual(members, u0, config), u0});
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    auto entry = run_iteration(members, trace.entries.back().control, config);
    const double before = trace.entries.back().cost;
    if (entry.cost > before + config.monotonicity_slack)
      throw MonotonicityViolation("descent iteration " + std::to_string(it) + " increased the cost from " +
                                      std::to_string(before) + " to " + std::to_string(entry.cost) +
                                      "; the control partition is too coarse for the sampling scheme",
                                  it, before, entry.cost);
    const double decrease = before - entry.cost;
    trace.entries.push_back(std::move(entry));
    const double relative = std::abs(before) > 0.0 ? decrease / std::abs(before) : 0.0;
    if (relative < config.stagnation_tolerance) {
      trace.stagnated = true;
      break;
    }
  }
  return trace;
}

// single-ensemble conveniences

template <int N, int M>
std::vector<EnsembleMember<N, M>> single_member(const ParametricField<N, M>& field, const Functional<N>& ell,
                                                const ParticleMeasure<N>& initial) {
  return {EnsembleMember<N, M>{field, ell, initial, 1.0}};
}

template <int N, int M>
IterationTrace<M> run_descent(const ParametricField<N, M>& field, const Functional<N>& ell,
                              const ParticleMeasure<N>& initial, const ControlSignal<M>& u0,
                              const DescentConfig<M>& config) {
  return run_descent(single_member(field, ell, initial), u0, config);
}

template <int N, int M>
double pmp_residual(const ParametricField<N, M>& field, const Functional<N>& ell, const ParticleMeasure<N>& initial,
                    const ControlSignal<M>& control, const DescentConfig<M>& config) {
  return pmp_residual(single_member(field, ell, initial), control, config);
}

// exports

template <int M>
void write_trace_csv(std::ostream& os, const IterationTrace<M>& trace) {
  os << std::setprecision(17) << "iteration,cost,pmp_residual\n";
  for (std::size_t k = 0; k < trace.entries.size(); ++k)
    os << k << ',' << trace.entries[k].cost << ',' << trace.entries[k].pmp_residual << '\n';
}

/// Step-function samples (t_i, u_i) for every node; the final node repeats the last value.
template <int M>
void write_control_csv(std::ostream& os, const ControlSignal<M>& control) {
  os << std::setprecision(17) << 't';
  for (int k = 0; k < M; ++k) os << (M == 1 ? std::string(",u") : ",u" + std::to_string(k + 1));
  os << '\n';
  const auto& part = control.partition();
  for (std::size_t i = 0; i <= part.intervals(); ++i) {
    const auto& v = control.value(std::min(i, part.intervals() - 1));
    os << part.node(i);
    for (int k = 0; k < M; ++k) os << ',' << v[k];
    os << '\n';
  }
}

template <int M>
void write_trace_csv(const std::string& path, const IterationTrace<M>& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigurationError("cannot open '" + path + "' for writing");
  write_trace_csv(out, trace);
}

template <int M>
void write_control_csv(const std::string& path, const ControlSignal<M>& control) {
  std::ofstream out(path);
  if (!out) throw ConfigurationError("cannot open '" + path + "' for writing");
  write_control_csv(out, control);
}

}  // namespace mfc
