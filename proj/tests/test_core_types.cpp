#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mfcontrol/core_types.hpp"

using namespace mfc;

TEST(TimePartition, RejectsBadNodes) {
  EXPECT_THROW(TimePartition({0.0}), ConfigurationError);
  EXPECT_THROW(TimePartition({0.1, 1.0}), ConfigurationError);
  EXPECT_THROW(TimePartition({0.0, 0.5, 0.5}), ConfigurationError);
  EXPECT_THROW(TimePartition::uniform(1.0, 0), ConfigurationError);
  EXPECT_NO_THROW(TimePartition({0.0, 0.2, 1.0}));
}

TEST(TimePartition, IntervalLookup) {
  const auto p = TimePartition::uniform(2.0, 4);
  EXPECT_EQ(p.interval_of(0.0), 0u);
  EXPECT_EQ(p.interval_of(0.5), 1u);
  EXPECT_EQ(p.interval_of(1.9), 3u);
  EXPECT_EQ(p.interval_of(2.0), 3u);
  EXPECT_THROW(p.interval_of(-1e-9), std::out_of_range);
  EXPECT_THROW(p.interval_of(2.0 + 1e-9), std::out_of_range);
}

TEST(ControlSignal, SampleConstant) {
  const auto u = ControlSignal<1>::constant(TimePartition::uniform(2.0, 40), Vec<1>::Constant(0.1),
                                            ControlSet<1>::scalar(0.0, 2.0));
  EXPECT_DOUBLE_EQ(sample_control(u, 1.3)[0], 0.1);
}

TEST(ControlSignal, RightContinuousAtNodes) {
  const TimePartition p({0.0, 0.5, 1.0});
  const ControlSignal<1> u(p, {Vec<1>::Constant(1.0), Vec<1>::Constant(2.0)}, ControlSet<1>::scalar(0.0, 3.0));
  EXPECT_DOUBLE_EQ(sample_control(u, 0.5)[0], 2.0);
  EXPECT_DOUBLE_EQ(sample_control(u, 0.0)[0], 1.0);
  EXPECT_DOUBLE_EQ(sample_control(u, 1.0)[0], 2.0);
  EXPECT_THROW(sample_control(u, 1.5), std::out_of_range);
}

TEST(ControlSignal, ValidatesLengthAndBounds) {
  const TimePartition p({0.0, 0.5, 1.0});
  const auto box = ControlSet<1>::scalar(0.0, 1.0);
  EXPECT_THROW(ControlSignal<1>(p, {Vec<1>::Zero()}, box), ConfigurationError);
  EXPECT_THROW(ControlSignal<1>(p, {Vec<1>::Zero(), Vec<1>::Constant(1.5)}, box), ConfigurationError);
}

TEST(ControlSet, BoxAndCandidates) {
  EXPECT_THROW(ControlSet<1>::scalar(1.0, 0.0), ConfigurationError);
  const auto box = ControlSet<2>(Vec<2>(0.0, -1.0), Vec<2>(1.0, 1.0)).with_uniform_candidates(3);
  EXPECT_EQ(box.candidates().size(), 9u);
  for (const auto& c : box.candidates()) EXPECT_TRUE(box.contains(c));
  EXPECT_TRUE(box.clip(Vec<2>(2.0, -3.0)).isApprox(Vec<2>(1.0, -1.0)));
  EXPECT_THROW(box.with_candidates({Vec<2>(2.0, 0.0)}), ConfigurationError);
}

TEST(ParticleMeasure, Validation) {
  EXPECT_THROW(ParticleMeasure<1>({Vec<1>::Zero()}, {0.5}), ConfigurationError);
  EXPECT_THROW(ParticleMeasure<1>({Vec<1>::Zero(), Vec<1>::Ones()}, {1.5, -0.5}), ConfigurationError);
  EXPECT_THROW(ParticleMeasure<1>({Vec<1>::Constant(NAN)}, {1.0}), ConfigurationError);
  EXPECT_THROW(ParticleMeasure<1>({Vec<1>::Zero()}, {0.5, 0.5}), ConfigurationError);
  EXPECT_NO_THROW(ParticleMeasure<1>({Vec<1>::Zero(), Vec<1>::Ones()}, {0.5, 0.5 + 5e-13}));
}

TEST(Pushforward, DiracTranslation) {
  const auto mu = pushforward(ParticleMeasure<1>::dirac(Vec<1>::Constant(1.0)),
                              [](const Vec<1>& x) -> Vec<1> { return x.array() + 2.0; });
  ASSERT_EQ(mu.size(), 1u);
  EXPECT_DOUBLE_EQ(mu.point(0)[0], 3.0);
  EXPECT_DOUBLE_EQ(mu.weight(0), 1.0);
}

TEST(Pushforward, IdentityKeepsMeasure) {
  const auto mu = ParticleMeasure<2>::normalized({Vec<2>(1, 2), Vec<2>(-1, 0.5)}, {1.0, 3.0});
  const auto nu = pushforward(mu, [](const Vec<2>& x) { return x; });
  EXPECT_EQ(nu.points(), mu.points());
  EXPECT_EQ(nu.weights(), mu.weights());
}

TEST(Pushforward, DoublingDoublesExpectation) {
  const auto mu = ParticleMeasure<1>::uniform({Vec<1>::Zero(), Vec<1>::Ones()});
  const auto nu = pushforward(mu, [](const Vec<1>& x) -> Vec<1> { return 2.0 * x; });
  EXPECT_DOUBLE_EQ(moments(mu).expectation[0], 0.5);
  EXPECT_DOUBLE_EQ(moments(nu).expectation[0], 1.0);
}

TEST(Pushforward, NonFiniteNamesParticle) {
  const auto mu = ParticleMeasure<1>::uniform({Vec<1>::Constant(1.0), Vec<1>::Zero()});
  try {
    pushforward(mu, [](const Vec<1>& x) -> Vec<1> { return Vec<1>::Constant(1.0 / x[0]); });
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("particle 1"), std::string::npos);
  }
}

TEST(Pushforward, CompositionAndAffineMoments) {
  std::mt19937 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec<2>> pts(30);
  std::vector<double> w(30);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = Vec<2>(n(rng), n(rng));
    w[i] = std::abs(n(rng)) + 0.1;
  }
  const auto mu = ParticleMeasure<2>::normalized(pts, w);
  Mat<2> a;
  a << 1.5, -0.3, 0.2, 0.7;
  const Vec<2> b(0.4, -1.0);
  auto f = [&](const Vec<2>& x) -> Vec<2> { return a * x + b; };
  auto g = [](const Vec<2>& x) -> Vec<2> { return Vec<2>(std::sin(x[0]), x[1] * x[1]); };

  const auto fg = pushforward(pushforward(mu, f), g);
  const auto composed = pushforward(mu, [&](const Vec<2>& x) { return g(f(x)); });
  EXPECT_EQ(fg.points(), composed.points());

  const auto m = moments(pushforward(mu, f));
  EXPECT_TRUE(m.expectation.isApprox(a * moments(mu).expectation + b, 1e-12));

  double total = 0.0;
  for (double x : fg.weights()) total += x;
  EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(Moments, Examples) {
  const auto d = moments(ParticleMeasure<1>::dirac(Vec<1>::Constant(3.0)));
  EXPECT_DOUBLE_EQ(d.expectation[0], 3.0);
  EXPECT_DOUBLE_EQ(d.variance, 0.0);
  const auto two = moments(ParticleMeasure<1>::uniform({Vec<1>::Zero(), Vec<1>::Constant(2.0)}));
  EXPECT_DOUBLE_EQ(two.expectation[0], 1.0);
  EXPECT_DOUBLE_EQ(two.variance, 1.0);
}

TEST(Moments, UniformGridRiemannSums) {
  for (std::size_t n : {10u, 100u}) {
    const double h = 1.0 / static_cast<double>(n);
    const GridMeasure<1> g({GridAxis{0.0, h, n}}, {Boundary::reflecting}, std::vector<double>(n, 1.0));
    const auto m = moments(g);
    EXPECT_NEAR(m.expectation[0], 0.5, h);
    EXPECT_NEAR(m.variance, 1.0 / 12.0, h * h);
  }
}

TEST(GridMeasure, Validation) {
  const std::array<GridAxis, 1> ax{GridAxis{0.0, 0.5, 2}};
  EXPECT_THROW(GridMeasure<1>(ax, {Boundary::periodic}, {1.0, 0.5}), ConfigurationError);
  EXPECT_THROW(GridMeasure<1>(ax, {Boundary::periodic}, {2.5, -0.5}), ConfigurationError);
  EXPECT_THROW(GridMeasure<1>(ax, {Boundary::periodic}, {2.0}), ConfigurationError);
  EXPECT_NO_THROW(GridMeasure<1>(ax, {Boundary::periodic}, {1.0, 1.0}));
}

TEST(GridMeasure, RowMajorLayout) {
  const auto g = GridMeasure<2>::normalized({GridAxis{0.0, 1.0, 2}, GridAxis{10.0, 1.0, 3}},
                                            {Boundary::periodic, Boundary::reflecting}, std::vector<double>(6, 1.0));
  EXPECT_EQ(g.unflatten(4), (std::array<std::size_t, 2>{1, 1}));
  EXPECT_TRUE(g.center(5).isApprox(Vec<2>(1.5, 12.5)));
  EXPECT_NEAR(g.total_mass(), 1.0, 1e-15);
}

TEST(GridMeasure, RoundTripText) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(12);
  for (auto& v : d) v = u(rng);
  const auto g = GridMeasure<2>::normalized({GridAxis{0.0, 0.25, 4}, GridAxis{-1.0, 0.5, 3}},
                                            {Boundary::periodic, Boundary::reflecting}, d);
  std::stringstream ss;
  write_grid_measure(ss, g);
  const auto back = read_grid_measure<2>(ss);
  EXPECT_EQ(back.boundaries(), g.boundaries());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(back.density()[i], g.density()[i], 1e-14);
  EXPECT_EQ(back.axis(1).count, 3u);
}

TEST(GridMeasure, RejectsMalformedFiles) {
  std::stringstream bad1("axes: 0 1 2; boundary: sideways\n0.5\n0.5\n");
  EXPECT_THROW(read_grid_measure<1>(bad1), ConfigurationError);
  std::stringstream bad2("axes: 0 1 2; boundary: periodic\n0.5\nfoo\n");
  EXPECT_THROW(read_grid_measure<1>(bad2), ConfigurationError);
  std::stringstream bad3("axes: 0 1 2; boundary: periodic\n0.5\n");
  EXPECT_THROW(read_grid_measure<1>(bad3), ConfigurationError);
}

TEST(GridMeasure, ToParticlesKeepsMassAndMoments) {
  const auto g = GridMeasure<1>::normalized({GridAxis{0.0, 0.1, 10}}, {Boundary::reflecting},
                                            {0, 0, 1, 2, 3, 4, 3, 2, 1, 0});
  const auto p = to_particles(g);
  EXPECT_EQ(p.size(), 7u);
  EXPECT_NEAR(moments(p).expectation[0], moments(g).expectation[0], 1e-14);
  EXPECT_NEAR(moments(p).variance, moments(g).variance, 1e-14);
}

TEST(ParametricField, AffineDecompositionAndGrowth) {
  const auto field = ParametricField<2, 1>([](const Vec<2>& x, const Vec<1>& u, Vec<2>* v, Mat<2>* j) {
                       if (v) *v = Vec<2>(u[0] * std::sin(x[1]), -x[0]);
                       if (j) *j << 0.0, u[0] * std::cos(x[1]), -1.0, 0.0;
                     }).with_affine([](const Vec<2>& x) { return Gain<2, 1>(std::sin(x[1]), 0.0); },
                                    [](const Vec<2>& x) { return Vec<2>(0.0, -x[0]); });
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<std::pair<Vec<2>, Vec<1>>> samples;
  for (int i = 0; i < 200; ++i) samples.emplace_back(Vec<2>(u(rng), u(rng)), Vec<1>::Constant(u(rng)));
  EXPECT_LE(affine_mismatch(field, samples), 1e-12);
  EXPECT_TRUE(satisfies_growth_bound(field, 4.0, samples));
  EXPECT_FALSE(satisfies_growth_bound(field, 0.01, samples));
}
