#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfcontrol/flows.hpp"
#include "mfcontrol/toys.hpp"

using namespace mfc;

namespace {

ControlSignal<1> constant1(double T, std::size_t n, double u, double lo = -5.0, double hi = 5.0) {
  return ControlSignal<1>::constant(TimePartition::uniform(T, n), Vec<1>::Constant(u), ControlSet<1>::scalar(lo, hi));
}

ControlSignal<1> random_control(std::mt19937& rng, double T, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec<1>> v(n);
  for (auto& x : v) x = Vec<1>::Constant(u(rng));
  return ControlSignal<1>(TimePartition::uniform(T, n), v, ControlSet<1>::scalar(-1.0, 1.0));
}

ParametricField<2, 1> zero_field() {
  return ParametricField<2, 1>([](const Vec<2>&, const Vec<1>&, Vec<2>* v, Mat<2>* j) {
    if (v) v->setZero();
    if (j) j->setZero();
  });
}

/// Central-difference Jacobian of x -> X_{t_node,T}(x).
template <int N>
Mat<N> fd_flow_jacobian(const ParametricField<N, 1>& f, const ControlSignal<1>& u, const Vec<N>& x, double t,
                        std::size_t substeps, double eps) {
  Mat<N> j;
  const double T = u.partition().horizon();
  for (int c = 0; c < N; ++c) {
    Vec<N> xp = x, xm = x;
    xp[c] += eps;
    xm[c] -= eps;
    j.col(c) = (integrate_flow(f, u, xp, t, T, substeps) - integrate_flow(f, u, xm, t, T, substeps)) / (2.0 * eps);
  }
  return j;
}

}  // namespace

TEST(IntegrateFlow, ZeroField) {
  const Vec<2> x(0.3, -1.2);
  EXPECT_EQ(integrate_flow(zero_field(), constant1(2.0, 4, 0.5), x, 0.0, 2.0, 10), x);
}

TEST(IntegrateFlow, Translation) {
  const auto y = integrate_flow(toys::translation_field(), constant1(1.0, 1, 1.0), Vec<1>::Zero(), 0.0, 1.0, 1000);
  EXPECT_NEAR(y[0], 1.0, 1e-10);
}

TEST(IntegrateFlow, Exponential) {
  const auto y = integrate_flow(toys::linear_field(1.0), constant1(1.0, 1, 0.0), Vec<1>::Ones(), 0.0, 1.0, 1000);
  EXPECT_NEAR(y[0], std::exp(1.0), 1e-8);
}

TEST(IntegrateFlow, BackwardAndPartialIntervals) {
  const TimePartition p({0.0, 0.3, 1.0});
  const ControlSignal<1> u(p, {Vec<1>::Constant(2.0), Vec<1>::Constant(-1.0)}, ControlSet<1>::scalar(-2.0, 2.0));
  const auto f = toys::translation_field();
  EXPECT_NEAR(integrate_flow(f, u, Vec<1>::Zero(), 0.1, 0.8, 7)[0], 2.0 * 0.2 - 0.5, 1e-13);
  EXPECT_NEAR(integrate_flow(f, u, Vec<1>::Zero(), 0.8, 0.1, 7)[0], -(2.0 * 0.2 - 0.5), 1e-13);
  EXPECT_THROW(integrate_flow(f, u, Vec<1>::Zero(), 0.0, 1.5, 7), std::out_of_range);
  EXPECT_THROW(integrate_flow(f, u, Vec<1>::Zero(), 0.0, 1.0, 0), ConfigurationError);
}

TEST(IntegrateFlow, DivergenceReportsTime) {
  try {
    integrate_flow(toys::linear_field(20.0), constant1(2.0, 2, 0.0), Vec<1>::Ones(), 0.0, 2.0, 200, 1e3);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NEAR(e.time(), std::log(1e3) / 20.0, 0.02);
  }
}

TEST(IntegrateFlow, FourthOrderConvergence) {
  const auto f = toys::linear_field(1.3);
  const auto u = constant1(1.0, 1, 0.0);
  const double ref = integrate_flow(f, u, Vec<1>::Ones(), 0.0, 1.0, 400)[0];
  const double e1 = std::abs(integrate_flow(f, u, Vec<1>::Ones(), 0.0, 1.0, 20)[0] - ref);
  const double e2 = std::abs(integrate_flow(f, u, Vec<1>::Ones(), 0.0, 1.0, 40)[0] - ref);
  EXPECT_NEAR(e1 / e2, 16.0, 1.5);
}

TEST(IntegrateFlow, SemigroupAndInverse) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> x(-1.0, 1.0);
  for (std::uint32_t s = 0; s < 5; ++s) {
    const auto f = toys::random_smooth_field(s);
    const auto u = random_control(rng, 1.0, 5);
    const Vec<2> seed(x(rng), x(rng));
    const auto direct = integrate_flow(f, u, seed, 0.2, 1.0, 200);
    const auto split = integrate_flow(f, u, integrate_flow(f, u, seed, 0.2, 0.6, 200), 0.6, 1.0, 200);
    EXPECT_LE((direct - split).norm(), 1e-11);
    const auto back = integrate_flow(f, u, integrate_flow(f, u, seed, 0.0, 0.8, 200), 0.8, 0.0, 200);
    EXPECT_LE((back - seed).norm(), 1e-10);
  }
}

TEST(JacobianRecord, Invariants) {
  const auto f = toys::random_smooth_field(3);
  std::mt19937 rng(1);
  const auto u = random_control(rng, 1.0, 4);
  const std::vector<Vec<2>> seeds{Vec<2>(0.1, 0.2), Vec<2>(-0.5, 0.7)};
  const auto rec = integrate_jacobian_to_anchor(f, u, seeds, 50);
  EXPECT_EQ(rec.nodes(), 5u);
  EXPECT_EQ(rec.seeds(), 2u);
  EXPECT_DOUBLE_EQ(rec.anchor_time(), 1.0);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    EXPECT_EQ(rec.states[0][s], seeds[s]);
    EXPECT_EQ(rec.jacobians[4][s], Mat<2>::Identity());
    EXPECT_LE((rec.states[4][s] - integrate_flow(f, u, seeds[s], 0.0, 1.0, 50)).norm(), 1e-14);
  }
}

TEST(JacobianRecord, ZeroFieldIdentity) {
  const auto rec = integrate_jacobian_to_anchor(zero_field(), constant1(1.0, 3, 0.0), {Vec<2>(1.0, 2.0)}, 5);
  for (const auto& node : rec.jacobians) EXPECT_EQ(node[0], Mat<2>::Identity());
}

TEST(JacobianRecord, LinearFieldExponential) {
  const double a = 0.7;
  const auto u = constant1(2.0, 8, 0.0);
  const auto rec = integrate_jacobian_to_anchor(toys::linear_field(a), u, {Vec<1>::Ones()}, 250);
  for (std::size_t i = 0; i < rec.nodes(); ++i) {
    const double t = u.partition().node(i);
    EXPECT_NEAR(rec.jacobians[i][0](0, 0), std::exp(a * (2.0 - t)), 1e-8);
  }
}

TEST(JacobianRecord, MatchesFiniteDifferences) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> x(-1.0, 1.0);
  for (std::uint32_t s = 0; s < 10; ++s) {
    const auto f = toys::random_smooth_field(100 + s);
    const auto u = random_control(rng, 1.0, 5);
    const std::vector<Vec<2>> seeds{Vec<2>(x(rng), x(rng))};
    const auto rec = integrate_jacobian_to_anchor(f, u, seeds, 200);
    for (std::size_t i = 0; i < rec.nodes(); ++i) {
      const auto fd = fd_flow_jacobian<2>(f, u, rec.states[i][0], u.partition().node(i), 200, 1e-5);
      const double rel = (rec.jacobians[i][0] - fd).norm() / fd.norm();
      EXPECT_LE(rel, 1e-4) << "field " << s << " node " << i;
    }
  }
}

TEST(InverseFlowTimeDerivative, Examples) {
  const auto rec2 = integrate_jacobian_to_anchor(zero_field(), constant1(1.0, 2, 0.0), {Vec<2>::Zero()}, 3);
  EXPECT_EQ(inverse_flow_time_derivative(rec2, Vec<2>(1.0, 0.0), 2, 0), Vec<2>(-1.0, 0.0));
  EXPECT_EQ(inverse_flow_time_derivative(rec2, Vec<2>::Zero(), 0, 0), Vec<2>::Zero());

  const double a = -0.4;
  const auto u = constant1(1.0, 4, 0.0);
  const auto rec = integrate_jacobian_to_anchor(toys::linear_field(a), u, {Vec<1>::Ones()}, 200);
  for (std::size_t i = 0; i < rec.nodes(); ++i) {
    const double t = u.partition().node(i);
    const auto d = inverse_flow_time_derivative(rec, Vec<1>::Constant(a), i, 0);
    EXPECT_NEAR(d[0], -a * std::exp(a * (1.0 - t)), 1e-9);
  }
}

TEST(InverseFlowTimeDerivative, MatchesDifferenceQuotient) {
  // d/dt X_{t,T}(x) for fixed x, against central differences in t
  const auto f = toys::random_smooth_field(21);
  std::mt19937 rng(4);
  const auto u = random_control(rng, 1.0, 4);
  const Vec<2> x(0.3, -0.4);
  const double t = 0.375, h = 1e-4;
  const Vec<2> fd = (integrate_flow(f, u, x, t + h, 1.0, 4000) - integrate_flow(f, u, x, t - h, 1.0, 4000)) / (2.0 * h);
  // build the record on a partition whose node 0 sits at t by shifting the control
  const std::vector<Vec<1>> tail(u.values().begin() + 1, u.values().end());
  const TimePartition shifted({0.0, 0.5 - t, 0.75 - t, 1.0 - t});
  const ControlSignal<1> v(shifted, tail, u.bounds());
  const auto rec = integrate_jacobian_to_anchor(f, v, {x}, 2000);
  const auto d = inverse_flow_time_derivative(rec, f.value(x, u.value(1)), 0, 0);
  EXPECT_LE((d - fd).norm(), 1e-6);
}

TEST(StepGrid, AlignedToPartition) {
  const StepGrid g(TimePartition({0.0, 0.3, 1.0}), 4);
  EXPECT_EQ(g.total(), 8u);
  EXPECT_EQ(g.interval(3), 0u);
  EXPECT_EQ(g.interval(4), 1u);
  EXPECT_DOUBLE_EQ(g.time(4), 0.3);
  EXPECT_DOUBLE_EQ(g.step(0), 0.075);
  EXPECT_DOUBLE_EQ(g.step(5), 0.175);
  EXPECT_DOUBLE_EQ(g.time(8), 1.0);
  EXPECT_THROW(StepGrid(TimePartition::uniform(1.0, 1), 0), ConfigurationError);
}
