#pragma once

// Cost functionals on probability measures together with their flat derivative
// (delta l / delta mu, up to an additive constant) and intrinsic derivative
// D_mu l(mu)(x) = grad_x of the flat derivative. Derivatives are closed-form.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mfcontrol/core_types.hpp"

namespace mfc {

template <int N>
class FunctionalImpl {
 public:
  virtual ~FunctionalImpl() = default;
  virtual double value(const ParticleMeasure<N>& mu) const = 0;
  virtual double flat_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const = 0;
  virtual Vec<N> intrinsic_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const = 0;

  /// Intrinsic derivative at many points for one measure. Overridden where
  /// measure-dependent quantities can be computed once.
  virtual std::vector<Vec<N>> intrinsic_derivatives(const ParticleMeasure<N>& mu,
                                                    const std::vector<Vec<N>>& xs) const {
    std::vector<Vec<N>> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(intrinsic_derivative(mu, x));
    return out;
  }
};

/// Immutable, cheaply copyable handle to a cost functional.
template <int N>
class Functional {
 public:
  explicit Functional(std::shared_ptr<const FunctionalImpl<N>> impl) : impl_(std::move(impl)) {}

  double value(const ParticleMeasure<N>& mu) const { return impl_->value(mu); }
  double value(const GridMeasure<N>& grid) const { return impl_->value(to_particles(grid, 0.0)); }
  double flat_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const { return impl_->flat_derivative(mu, x); }
  Vec<N> intrinsic_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const {
    return impl_->intrinsic_derivative(mu, x);
  }
  std::vector<Vec<N>> intrinsic_derivatives(const ParticleMeasure<N>& mu, const std::vector<Vec<N>>& xs) const {
    return impl_->intrinsic_derivatives(mu, xs);
  }
  /// D_mu l(mu) at the support points of mu.
  std::vector<Vec<N>> intrinsic_derivatives(const ParticleMeasure<N>& mu) const {
    return impl_->intrinsic_derivatives(mu, mu.points());
  }

  const FunctionalImpl<N>& impl() const { return *impl_; }

 private:
  std::shared_ptr<const FunctionalImpl<N>> impl_;
};

template <int N, typename Impl, typename... Args>
Functional<N> make_functional(Args&&... args) {
  return Functional<N>(std::make_shared<const Impl>(std::forward<Args>(args)...));
}

// ---------------------------------------------------------------------------
// l(mu) = int f dmu

template <int N>
class PotentialFunctional final : public FunctionalImpl<N> {
 public:
  using Potential = std::function<double(const Vec<N>&)>;
  using Gradient = std::function<Vec<N>(const Vec<N>&)>;

  PotentialFunctional(Potential f, Gradient grad) : f_(std::move(f)), grad_(std::move(grad)) {}

  double value(const ParticleMeasure<N>& mu) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weight(i) * f_(mu.point(i));
    return s;
  }
  double flat_derivative(const ParticleMeasure<N>&, const Vec<N>& x) const override { return f_(x); }
  Vec<N> intrinsic_derivative(const ParticleMeasure<N>&, const Vec<N>& x) const override { return grad_(x); }

 private:
  Potential f_;
  Gradient grad_;
};

template <int N>
Functional<N> potential_functional(std::function<double(const Vec<N>&)> f,
                                   std::function<Vec<N>(const Vec<N>&)> grad) {
  return make_functional<N, PotentialFunctional<N>>(std::move(f), std::move(grad));
}

/// l(mu; x_T) = int |y - x_T|^2 dmu(y).
template <int N>
Functional<N> targeting_functional(const Vec<N>& target) {
  if (!all_finite<N>(target)) throw ConfigurationError("targeting functional needs a finite target");
  return potential_functional<N>([target](const Vec<N>& y) { return (y - target).squaredNorm(); },
                                 [target](const Vec<N>& y) -> Vec<N> { return 2.0 * (y - target); });
}

// ---------------------------------------------------------------------------
// Statistical tracking: psi1(E(mu) - E_hat) + psi2(Var(mu) - V_hat)

template <int N>
struct VectorPenalty {
  std::function<double(const Vec<N>&)> value;
  std::function<Vec<N>(const Vec<N>&)> gradient;

  static VectorPenalty squared_norm() {
    return {[](const Vec<N>& z) { return z.squaredNorm(); }, [](const Vec<N>& z) -> Vec<N> { return 2.0 * z; }};
  }
  static VectorPenalty zero() {
    return {[](const Vec<N>&) { return 0.0; }, [](const Vec<N>&) -> Vec<N> { return Vec<N>::Zero(); }};
  }
};

struct ScalarPenalty {
  std::function<double(double)> value;
  std::function<double(double)> derivative;

  static ScalarPenalty square() {
    return {[](double z) { return z * z; }, [](double z) { return 2.0 * z; }};
  }
  static ScalarPenalty zero() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }};
  }
};

template <int N>
class TrackingFunctional final : public FunctionalImpl<N> {
 public:
  TrackingFunctional(Vec<N> mean, double variance, VectorPenalty<N> psi1, ScalarPenalty psi2)
      : mean_(std::move(mean)), variance_(variance), psi1_(std::move(psi1)), psi2_(std::move(psi2)) {}

  double value(const ParticleMeasure<N>& mu) const override {
    const auto m = moments(mu);
    return psi1_.value(m.expectation - mean_) + psi2_.value(m.variance - variance_);
  }
  // flat derivatives: E -> y, Var -> |y|^2 - 2 <E, y>
  double flat_derivative(const ParticleMeasure<N>& mu, const Vec<N>& y) const override {
    const auto m = moments(mu);
    return psi1_.gradient(m.expectation - mean_).dot(y) +
           psi2_.derivative(m.variance - variance_) * (y.squaredNorm() - 2.0 * m.expectation.dot(y));
  }
  Vec<N> intrinsic_derivative(const ParticleMeasure<N>& mu, const Vec<N>& y) const override {
    return intrinsic_derivatives(mu, {y}).front();
  }
  std::vector<Vec<N>> intrinsic_derivatives(const ParticleMeasure<N>& mu,
                                            const std::vector<Vec<N>>& ys) const override {
    const auto m = moments(mu);
    const Vec<N> g1 = psi1_.gradient(m.expectation - mean_);
    const double d2 = psi2_.derivative(m.variance - variance_);
    std::vector<Vec<N>> out;
    out.reserve(ys.size());
    for (const auto& y : ys) out.push_back(g1 + d2 * 2.0 * (y - m.expectation));
    return out;
  }

 private:
  Vec<N> mean_;
  double variance_;
  VectorPenalty<N> psi1_;
  ScalarPenalty psi2_;
};

template <int N>
Functional<N> tracking_functional(const Vec<N>& target_mean, double target_variance, VectorPenalty<N> psi1,
                                  ScalarPenalty psi2) {
  return make_functional<N, TrackingFunctional<N>>(target_mean, target_variance, std::move(psi1), std::move(psi2));
}

// ---------------------------------------------------------------------------
// Interaction: (beta/2) int int g d(mu x mu), symmetric kernel

template <int N>
class InteractionFunctional final : public FunctionalImpl<N> {
 public:
  using Kernel = std::function<double(const Vec<N>&, const Vec<N>&)>;
  using KernelGradient = std::function<Vec<N>(const Vec<N>&, const Vec<N>&)>;

  InteractionFunctional(Kernel g, KernelGradient grad, double beta)
      : g_(std::move(g)), grad_(std::move(grad)), beta_(beta) {}

  double value(const ParticleMeasure<N>& mu) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < mu.size(); ++j) row += mu.weight(j) * g_(mu.point(i), mu.point(j));
      s += mu.weight(i) * row;
    }
    return 0.5 * beta_ * s;
  }
  double flat_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const override {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) s += mu.weight(j) * g_(x, mu.point(j));
    return beta_ * s;
  }
  Vec<N> intrinsic_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const override {
    Vec<N> s = Vec<N>::Zero();
    for (std::size_t j = 0; j < mu.size(); ++j) s += mu.weight(j) * grad_(x, mu.point(j));
    return beta_ * s;
  }

 private:
  Kernel g_;
  KernelGradient grad_;
  double beta_;
};

/// Throws ConfigurationError when |g(x, x') - g(x', x)| > 1e-12 on the sample pairs. Without
/// samples, 24 fixed pseudo-random points in [-2, 2]^N are used.
template <int N>
Functional<N> interaction_functional(typename InteractionFunctional<N>::Kernel kernel,
                                     typename InteractionFunctional<N>::KernelGradient kernel_gradient, double beta,
                                     std::vector<Vec<N>> symmetry_samples = {}) {
  if (symmetry_samples.empty()) {
    std::mt19937 rng(20240611u);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int s = 0; s < 24; ++s) {
      Vec<N> x;
      for (int k = 0; k < N; ++k) x[k] = d(rng);
      symmetry_samples.push_back(x);
    }
  }
  for (const auto& a : symmetry_samples)
    for (const auto& b : symmetry_samples)
      if (std::abs(kernel(a, b) - kernel(b, a)) > 1e-12)
        throw ConfigurationError("interaction kernel is not symmetric");
  return make_functional<N, InteractionFunctional<N>>(std::move(kernel), std::move(kernel_gradient), beta);
}

// ---------------------------------------------------------------------------
// Linear combinations

template <int N>
class SumFunctional final : public FunctionalImpl<N> {
 public:
  SumFunctional(std::vector<Functional<N>> parts, std::vector<double> coefficients)
      : parts_(std::move(parts)), coefficients_(std::move(coefficients)) {}

  double value(const ParticleMeasure<N>& mu) const override {
    double s = 0.0;
    for (std::size_t p = 0; p < parts_.size(); ++p) s += coefficients_[p] * parts_[p].value(mu);
    return s;
  }
  double flat_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const override {
    double s = 0.0;
    for (std::size_t p = 0; p < parts_.size(); ++p) s += coefficients_[p] * parts_[p].flat_derivative(mu, x);
    return s;
  }
  Vec<N> intrinsic_derivative(const ParticleMeasure<N>& mu, const Vec<N>& x) const override {
    Vec<N> s = Vec<N>::Zero();
    for (std::size_t p = 0; p < parts_.size(); ++p) s += coefficients_[p] * parts_[p].intrinsic_derivative(mu, x);
    return s;
  }
  std::vector<Vec<N>> intrinsic_derivatives(const ParticleMeasure<N>& mu,
                                            const std::vector<Vec<N>>& xs) const override {
    std::vector<Vec<N>> out(xs.size(), Vec<N>::Zero());
    for (std::size_t p = 0; p < parts_.size(); ++p) {
      const auto d = parts_[p].intrinsic_derivatives(mu, xs);
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] += coefficients_[p] * d[i];
    }
    return out;
  }

 private:
  std::vector<Functional<N>> parts_;
  std::vector<double> coefficients_;
};

template <int N>
Functional<N> sum_functionals(std::vector<Functional<N>> parts, std::vector<double> coefficients) {
  if (parts.empty()) throw ConfigurationError("sum of functionals needs at least one part");
  if (parts.size() != coefficients.size())
    throw ConfigurationError("sum of functionals: " + std::to_string(parts.size()) + " parts but " +
                             std::to_string(coefficients.size()) + " coefficients");
  return make_functional<N, SumFunctional<N>>(std::move(parts), std::move(coefficients));
}

/// (alpha/2) int_0^T |u|^2 dt, exact for piecewise-constant controls.
template <int M>
double energy_cost(const ControlSignal<M>& control, double alpha) {
  if (alpha < 0.0) throw ConfigurationError("energy weight must be nonnegative");
  double s = 0.0;
  for (std::size_t i = 0; i < control.values().size(); ++i)
    s += control.value(i).squaredNorm() * control.partition().length(i);
  return 0.5 * alpha * s;
}

}  // namespace mfc
