#pragma once

// Small reference problems: the 1-D translation field, randomized smooth 2-D fields and
// random increment cases built on them.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "mfcontrol/core_types.hpp"
#include "mfcontrol/functionals.hpp"

namespace mfc::toys {

/// V_v(x) = v on the real line.
inline ParametricField<1, 1> translation_field() {
  return ParametricField<1, 1>([](const Vec<1>&, const Vec<1>& u, Vec<1>* v, Mat<1>* j) {
           if (v) *v = u;
           if (j) j->setZero();
         })
      .with_affine([](const Vec<1>&) { return Gain<1, 1>::Ones(); }, [](const Vec<1>&) { return Vec<1>::Zero(); });
}

/// V_v(x) = x on the real line, whose flow is x e^{t}. Control enters nowhere.
inline ParametricField<1, 1> linear_field(double rate) {
  return ParametricField<1, 1>([rate](const Vec<1>& x, const Vec<1>&, Vec<1>* v, Mat<1>* j) {
    if (v) *v = rate * x;
    if (j) (*j)(0, 0) = rate;
  });
}

/// V_v(x)_r = sum_k A_rk sin(w_k . x + c_k v + s_k) + B_r v, smooth and globally Lipschitz.
struct RandomSmoothField {
  static constexpr int kModes = 3;
  std::array<Vec<2>, kModes> frequency;
  std::array<double, kModes> control_coupling;
  std::array<double, kModes> phase;
  std::array<std::array<double, kModes>, 2> amplitude;
  Vec<2> control_gain;

  static RandomSmoothField draw(std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    RandomSmoothField f{};
    for (int k = 0; k < kModes; ++k) {
      f.frequency[k] = Vec<2>(normal(rng), normal(rng));
      f.control_coupling[k] = 0.5 * unit(rng);
      f.phase[k] = std::numbers::pi * unit(rng);
      for (int r = 0; r < 2; ++r) f.amplitude[r][k] = 0.5 * unit(rng);
    }
    f.control_gain = Vec<2>(unit(rng), unit(rng));
    return f;
  }

  void evaluate(const Vec<2>& x, double u, Vec<2>* v, Mat<2>* j) const {
    if (v) *v = control_gain * u;
    if (j) j->setZero();
    for (int k = 0; k < kModes; ++k) {
      const double arg = frequency[k].dot(x) + control_coupling[k] * u + phase[k];
      const double s = std::sin(arg), c = std::cos(arg);
      for (int r = 0; r < 2; ++r) {
        if (v) (*v)[r] += amplitude[r][k] * s;
        if (j) j->row(r) += amplitude[r][k] * c * frequency[k].transpose();
      }
    }
  }

  ParametricField<2, 1> field() const {
    const RandomSmoothField self = *this;
    return ParametricField<2, 1>([self](const Vec<2>& x, const Vec<1>& u, Vec<2>* v, Mat<2>* j) {
      self.evaluate(x, u[0], v, j);
    });
  }
};

inline ParametricField<2, 1> random_smooth_field(std::uint32_t seed) { return RandomSmoothField::draw(seed).field(); }

/// Random smooth field, a pair of 4-interval controls on [0, 1] and 50 particles in [-1, 1]^2,
/// scored by a tracking functional.
struct IncrementCase {
  ParametricField<2, 1> field;
  Functional<2> ell;
  ParticleMeasure<2> initial;
  ControlSignal<1> reference;
  ControlSignal<1> target;
};

inline IncrementCase random_increment_case(std::uint32_t seed, std::size_t particles = 50) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto part = TimePartition::uniform(1.0, 4);
  const auto bounds = ControlSet<1>::scalar(-1.0, 1.0);
  std::vector<Vec<1>> a(4), b(4);
  for (std::size_t i = 0; i < 4; ++i) {
    a[i] = Vec<1>::Constant(unit(rng));
    b[i] = Vec<1>::Constant(unit(rng));
  }
  std::vector<Vec<2>> pts(particles);
  for (auto& p : pts) p = Vec<2>(unit(rng), unit(rng));
  return {random_smooth_field(seed),
          tracking_functional<2>(Vec<2>(0.3, -0.2), 0.1, VectorPenalty<2>::squared_norm(), ScalarPenalty::square()),
          ParticleMeasure<2>::uniform(std::move(pts)), ControlSignal<1>(part, std::move(a), bounds),
          ControlSignal<1>(part, std::move(b), bounds)};
}

}  // namespace mfc::toys
