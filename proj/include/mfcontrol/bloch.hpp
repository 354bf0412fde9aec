#pragma once

// Non-dissipative Bloch equations in spherical coordinates (theta azimuthal, phi polar)
// in the rotating frame, driven by a single envelope u and detuned by the offset eta:
//
//   theta' = u cot(phi) cos(theta) - eta,   phi' = u sin(theta).
//
// The cost pairs a kernel-targeting term with a pairwise interaction term, both built on
// g(x, x') = 2 - cos(theta - theta') - cos(phi - phi').
//
// The azimuth is periodic; the polar angle is restricted to [phi_min, phi_max] to keep
// away from the coordinate singularity at the poles.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "mfcontrol/core_types.hpp"
#include "mfcontrol/functionals.hpp"

namespace mfc::bloch {

using State = Vec<2>;

struct PhiDomain {
  double lo = 0.05;
  double hi = 0.95 * std::numbers::pi;

  void validate() const {
    if (!(lo > 0.0) || !(hi < std::numbers::pi) || !(lo < hi))
      throw ConfigurationError("phi domain must satisfy 0 < phi_min < phi_max < pi");
  }
  bool contains(double phi) const { return phi >= lo && phi <= hi; }
};

namespace detail {

inline void bloch_eval(double eta, const State& x, double u, State* v, Mat<2>* j) {
  const double st = std::sin(x[0]), ct = std::cos(x[0]);
  const double sp = std::sin(x[1]), cp = std::cos(x[1]);
  const double cot = cp / sp;
  if (v) *v = State(u * cot * ct - eta, u * st);
  if (j) *j << -u * cot * st, -u * ct / (sp * sp), u * ct, 0.0;
}

}  // namespace detail

/// V_u^eta on the phi domain; evaluating outside it throws DomainError.
inline ParametricField<2, 1> bloch_field(double eta, PhiDomain domain = {}) {
  domain.validate();
  auto guard = [domain](const State& x) {
    if (!domain.contains(x[1]))
      throw DomainError("Bloch field evaluated at phi = " + std::to_string(x[1]) + " outside [" +
                        std::to_string(domain.lo) + ", " + std::to_string(domain.hi) + "]");
  };
  return ParametricField<2, 1>([eta, guard](const State& x, const Vec<1>& u, State* v, Mat<2>* j) {
           guard(x);
           detail::bloch_eval(eta, x, u[0], v, j);
         })
      .with_affine(
          [guard](const State& x) -> Gain<2, 1> {
            guard(x);
            return Gain<2, 1>(std::cos(x[1]) / std::sin(x[1]) * std::cos(x[0]), std::sin(x[0]));
          },
          [eta](const State&) -> State { return State(-eta, 0.0); });
}

/// Particle version of the field: the polar angle is clamped into the domain before evaluation
/// and every integrator substep ends with the projection phi -> clamp(phi). A particle at a wall
/// keeps sliding along it in theta; this mirrors the zero normal flux of the grid solver.
inline ParametricField<2, 1> bloch_particle_field(double eta, PhiDomain domain = {}) {
  domain.validate();
  return ParametricField<2, 1>([eta, domain](const State& x, const Vec<1>& u, State* v, Mat<2>* j) {
           const bool inside = domain.contains(x[1]);
           const State xc(x[0], std::clamp(x[1], domain.lo, domain.hi));
           detail::bloch_eval(eta, xc, u[0], v, j);
           if (j && !inside) j->col(1).setZero();
         })
      .with_affine(
          [domain](const State& x) -> Gain<2, 1> {
            const double phi = std::clamp(x[1], domain.lo, domain.hi);
            return Gain<2, 1>(std::cos(phi) / std::sin(phi) * std::cos(x[0]), std::sin(x[0]));
          },
          [eta](const State&) -> State { return State(-eta, 0.0); })
      .with_projection([domain](State& x, Mat<2>* tangent) {
        if (domain.contains(x[1])) return;
        x[1] = std::clamp(x[1], domain.lo, domain.hi);
        if (tangent) tangent->row(1).setZero();
      });
}

inline double kernel(const State& a, const State& b) {
  return 2.0 - std::cos(a[0] - b[0]) - std::cos(a[1] - b[1]);
}

/// Gradient of the kernel in its first argument.
inline State kernel_gradient(const State& a, const State& b) {
  return State(std::sin(a[0] - b[0]), std::sin(a[1] - b[1]));
}

/// (beta/2) int int g d(mu x mu) in O(particles): cos(a - b) = cos a cos b + sin a sin b, so
/// every integral against mu reduces to the four trigonometric moments of mu.
class Interaction final : public FunctionalImpl<2> {
 public:
  explicit Interaction(double beta) : beta_(beta) {}

  double value(const ParticleMeasure<2>& mu) const override {
    const auto m = trig_moments(mu);
    return 0.5 * beta_ * (2.0 - (m[0] * m[0] + m[1] * m[1]) - (m[2] * m[2] + m[3] * m[3]));
  }
  double flat_derivative(const ParticleMeasure<2>& mu, const State& x) const override {
    const auto m = trig_moments(mu);
    return beta_ * (2.0 - (std::cos(x[0]) * m[0] + std::sin(x[0]) * m[1]) -
                    (std::cos(x[1]) * m[2] + std::sin(x[1]) * m[3]));
  }
  State intrinsic_derivative(const ParticleMeasure<2>& mu, const State& x) const override {
    return gradient(trig_moments(mu), x);
  }
  std::vector<State> intrinsic_derivatives(const ParticleMeasure<2>& mu,
                                           const std::vector<State>& xs) const override {
    const auto m = trig_moments(mu);
    std::vector<State> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(gradient(m, x));
    return out;
  }

 private:
  // {E cos theta, E sin theta, E cos phi, E sin phi}
  static std::array<double, 4> trig_moments(const ParticleMeasure<2>& mu) {
    std::array<double, 4> m{};
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double w = mu.weight(i);
      const auto& x = mu.point(i);
      m[0] += w * std::cos(x[0]);
      m[1] += w * std::sin(x[0]);
      m[2] += w * std::cos(x[1]);
      m[3] += w * std::sin(x[1]);
    }
    return m;
  }
  State gradient(const std::array<double, 4>& m, const State& x) const {
    return beta_ * State(std::sin(x[0]) * m[0] - std::cos(x[0]) * m[1], std::sin(x[1]) * m[2] - std::cos(x[1]) * m[3]);
  }

  double beta_;
};

/// l(mu) = int g(., target) dmu + (beta/2) int int g d(mu x mu).
inline Functional<2> bloch_cost(double theta_target, double phi_target, double beta) {
  if (beta < 0.0) throw ConfigurationError("interaction weight beta must be nonnegative");
  const State target(theta_target, phi_target);
  auto targeting = potential_functional<2>([target](const State& x) { return kernel(x, target); },
                                           [target](const State& x) { return kernel_gradient(x, target); });
  auto interaction = make_functional<2, Interaction>(beta);
  return sum_functionals<2>({targeting, interaction}, {1.0, 1.0});
}

/// Quadrature (nodes, weights) for the offset distribution.
class OffsetDistribution {
 public:
  OffsetDistribution(std::vector<double> nodes, std::vector<double> weights)
      : nodes_(std::move(nodes)), weights_(std::move(weights)) {
    if (nodes_.empty() || nodes_.size() != weights_.size())
      throw ConfigurationError("offset distribution needs matching, nonempty nodes and weights");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw ConfigurationError("offset weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigurationError("offset weights must sum to 1");
  }

  static OffsetDistribution single(double eta) { return OffsetDistribution({eta}, {1.0}); }

  /// Midpoint rule for the uniform law on [a, b].
  static OffsetDistribution uniform_midpoint(double a, double b, std::size_t n) {
    if (n == 0 || !(b > a)) throw ConfigurationError("uniform offset law needs a < b and n >= 1");
    std::vector<double> nodes(n), weights(n, 1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) nodes[i] = a + (b - a) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    return OffsetDistribution(std::move(nodes), std::move(weights));
  }

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) m += weights_[i] * nodes_[i];
    return m;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Periodic theta axis on [0, 2 pi) and reflecting phi axis on the domain; spacings are
/// adjusted so that an integer number of cells tiles each interval.
inline std::array<GridAxis, 2> sphere_axes(double spacing_theta, double spacing_phi, const PhiDomain& domain) {
  return {GridAxis::covering(0.0, 2.0 * std::numbers::pi, spacing_theta),
          GridAxis::covering(domain.lo, domain.hi, spacing_phi)};
}

inline constexpr std::array<Boundary, 2> kSphereBoundaries{Boundary::periodic, Boundary::reflecting};

struct Bump {
  double theta = std::numbers::pi;
  double phi = 0.3 * std::numbers::pi;
  double sigma_theta = 0.5;
  double sigma_phi = 0.2;
};

/// Normalized Gaussian bump truncated to the grid; theta distance is measured on the circle.
inline GridMeasure<2> gaussian_bump(const std::array<GridAxis, 2>& axes, const Bump& bump = {}) {
  std::vector<double> density(axes[0].count * axes[1].count);
  for (std::size_t i = 0; i < axes[0].count; ++i) {
    double dt = std::remainder(axes[0].center(i) - bump.theta, 2.0 * std::numbers::pi);
    for (std::size_t j = 0; j < axes[1].count; ++j) {
      const double dp = axes[1].center(j) - bump.phi;
      density[i * axes[1].count + j] =
          std::exp(-0.5 * (dt * dt / (bump.sigma_theta * bump.sigma_theta) + dp * dp / (bump.sigma_phi * bump.sigma_phi)));
    }
  }
  return GridMeasure<2>::normalized(axes, kSphereBoundaries, std::move(density));
}

}  // namespace mfc::bloch
