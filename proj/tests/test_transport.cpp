#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "mfcontrol/bloch.hpp"
#include "mfcontrol/toys.hpp"
#include "mfcontrol/transport.hpp"

using namespace mfc;

namespace {

ControlSignal<1> constant1(double T, std::size_t n, double u) {
  return ControlSignal<1>::constant(TimePartition::uniform(T, n), Vec<1>::Constant(u), ControlSet<1>::scalar(-5.0, 5.0));
}

ParametricField<1, 1> zero_field1() {
  return ParametricField<1, 1>([](const Vec<1>&, const Vec<1>&, Vec<1>* v, Mat<1>* j) {
    if (v) v->setZero();
    if (j) j->setZero();
  });
}

GridMeasure<1> periodic_bump(std::size_t n, double center) {
  const double h = 4.0 / static_cast<double>(n);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * h;
    d[i] = std::exp(-20.0 * (x - center) * (x - center));
  }
  return GridMeasure<1>::normalized({GridAxis{0.0, h, n}}, {Boundary::periodic}, d);
}

}  // namespace

TEST(Lagrangian, ZeroFieldKeepsMeasure) {
  const auto mu = ParticleMeasure<1>::uniform({Vec<1>::Constant(-1.0), Vec<1>::Constant(2.0)});
  const auto traj = solve_lagrangian(zero_field1(), constant1(1.0, 3, 0.0), mu, 5);
  ASSERT_EQ(traj.size(), 4u);
  for (const auto& m : traj) EXPECT_EQ(m.points(), mu.points());
}

TEST(Lagrangian, TranslationMovesDirac) {
  const auto u = constant1(1.0, 4, 1.0);
  const auto traj = solve_lagrangian(toys::translation_field(), u, ParticleMeasure<1>::dirac(Vec<1>::Zero()), 10);
  for (std::size_t k = 0; k < traj.size(); ++k) EXPECT_NEAR(traj[k].point(0)[0], u.partition().node(k), 1e-14);
}

TEST(Lagrangian, ExponentialMoments) {
  const auto mu = ParticleMeasure<1>::uniform({Vec<1>::Constant(-1.0), Vec<1>::Constant(1.0)});
  const auto traj = solve_lagrangian(toys::linear_field(1.0), constant1(1.0, 2, 0.0), mu, 500);
  const auto m = moments(traj.back());
  EXPECT_NEAR(traj.back().point(1)[0], std::numbers::e, 1e-9);
  EXPECT_NEAR(m.expectation[0], 0.0, 1e-14);
  EXPECT_NEAR(m.variance, std::exp(2.0), 1e-8);
  EXPECT_EQ(traj.back().weights(), mu.weights());
}

TEST(LaxFriedrichs, ZeroFieldKeepsFlatDensity) {
  const GridMeasure<1> flat({GridAxis{0.0, 0.25, 16}}, {Boundary::periodic}, std::vector<double>(16, 0.25));
  const auto traj = solve_lax_friedrichs(zero_field1(), constant1(1.0, 1, 0.0), flat, 1.0, 0.01);
  for (double v : traj.snapshots.back().density()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(LaxFriedrichs, ZeroFieldOnlyAveragesBump) {
  const auto g = periodic_bump(80, 2.0);
  const auto traj = solve_lax_friedrichs(zero_field1(), constant1(1.0, 1, 0.0), g, 1.0, 0.01);
  EXPECT_NEAR(traj.snapshots.back().total_mass(), 1.0, 1e-12);
  EXPECT_NEAR(moments(traj.snapshots.back()).expectation[0], 2.0, 1e-12);
}

TEST(LaxFriedrichs, PeriodicShiftAndMass) {
  const std::size_t n = 400;
  const auto g = periodic_bump(n, 1.0);
  const double h = g.axis(0).spacing;
  LaxFriedrichsOptions opt;
  opt.store_stride = 1;
  const auto traj = solve_lax_friedrichs(toys::translation_field(), constant1(1.0, 1, 1.0), g, 1.0, 0.9 * h, opt);
  for (std::size_t s = 1; s < traj.snapshots.size(); ++s)
    EXPECT_NEAR(traj.snapshots[s].total_mass(), traj.snapshots[s - 1].total_mass(), 1e-12);
  EXPECT_NEAR(moments(traj.snapshots.back()).expectation[0], 2.0, h);
  EXPECT_EQ(traj.clipped_cells, 0u);
}

TEST(LaxFriedrichs, WeakFormConsistency) {
  // d/dt int phi drho = int phi' V drho on the translation test, first order in h
  const std::size_t n = 800;
  const auto g = periodic_bump(n, 1.5);
  const double h = g.axis(0).spacing;
  const double dt = 0.5 * h;
  const auto traj = solve_lax_friedrichs(toys::translation_field(), constant1(1.0, 1, 1.0), g, 0.2, dt);
  auto integral = [&](const GridMeasure<1>& m, auto&& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += f(m.center(i)[0]) * m.density()[i] * h;
    return s;
  };
  auto phi = [](double x) { return std::sin(std::numbers::pi * x / 2.0); };
  auto dphi = [](double x) { return std::numbers::pi / 2.0 * std::cos(std::numbers::pi * x / 2.0); };
  const double lhs = (integral(traj.snapshots.back(), phi) - integral(g, phi)) / 0.2;
  const double mid = 0.5 * (integral(g, dphi) + integral(traj.snapshots.back(), dphi));
  EXPECT_NEAR(lhs, mid, 10.0 * h);
}

TEST(LaxFriedrichs, CflViolationReportsCell) {
  const auto g = periodic_bump(100, 2.0);
  try {
    solve_lax_friedrichs(toys::translation_field(), constant1(1.0, 1, 1.0), g, 1.0, 0.1);
    FAIL() << "expected ConfigurationError";
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("CFL"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("cell"), std::string::npos);
  }
}

TEST(LaxFriedrichs, ReflectingWallsConserveMass) {
  const auto domain = bloch::PhiDomain{};
  const auto g = bloch::gaussian_bump(bloch::sphere_axes(0.1, 0.1, domain));
  const auto u = constant1(2.0, 4, 1.5);
  const auto field = bloch::bloch_field(-0.5, domain);
  const auto [ratio, cell] = courant_number(field, u, g, 2.0, 1.0);
  (void)cell;
  LaxFriedrichsOptions opt;
  opt.store_stride = 1;
  const auto traj = solve_lax_friedrichs(field, u, g, 2.0, 0.9 / ratio, opt);
  for (std::size_t s = 1; s < traj.snapshots.size(); ++s) {
    EXPECT_NEAR(traj.snapshots[s].total_mass(), traj.snapshots[s - 1].total_mass(), 1e-6);
    for (double v : traj.snapshots[s].density()) EXPECT_GE(v, 0.0);
  }
}

TEST(LaxFriedrichs, StoreStrideAndExport) {
  const auto g = periodic_bump(50, 2.0);
  LaxFriedrichsOptions opt;
  opt.store_stride = 10;
  const auto traj = solve_lax_friedrichs(toys::translation_field(), constant1(1.0, 1, 1.0), g, 1.0, 0.04, opt);
  EXPECT_EQ(traj.steps, 25u);
  EXPECT_EQ(traj.snapshots.size(), 4u);  // 0, 10, 20, 25
  EXPECT_DOUBLE_EQ(traj.times.back(), 1.0);
  const auto dir = std::filesystem::temp_directory_path() / "mfc_export_test";
  std::filesystem::remove_all(dir);
  export_trajectory(dir, traj);
  EXPECT_TRUE(std::filesystem::exists(dir / "snapshot_3.dat"));
  const auto back = read_grid_measure<1>((dir / "snapshot_3.dat").string());
  EXPECT_NEAR(back.density()[7], traj.snapshots[3].density()[7], 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(CrossSolver, BlochMomentsAgreeAndConverge) {
  // Eulerian vs Lagrangian moments, at two resolutions, under u = 0.1
  const auto domain = bloch::PhiDomain{};
  const auto u = constant1(2.0, 40, 0.1);
  double err[2];
  int r = 0;
  for (double h : {0.1, 0.05}) {
    const auto g = bloch::gaussian_bump(bloch::sphere_axes(h, h, domain));
    const auto field = bloch::bloch_field(-0.5, domain);
    const auto [ratio, cell] = courant_number(field, u, g, 2.0, 1.0);
    (void)cell;
    const auto lf = solve_lax_friedrichs(field, u, g, 2.0, 0.9 / ratio);
    const auto particles = solve_lagrangian(bloch::bloch_particle_field(-0.5, domain), u, to_particles(g), 50).back();
    const auto me = moments(lf.snapshots.back());
    const auto ml = moments(particles);
    err[r++] = (me.expectation - ml.expectation).norm() / ml.expectation.norm();
  }
  EXPECT_LE(err[1], 0.02);
  EXPECT_GE(err[0] / err[1], 1.5);
}
