#include <gtest/gtest.h>

#include "nilsynth/oracle.hpp"
#include "nilsynth/synthesis.hpp"
#include "test_support.hpp"

using namespace nilsynth;
using namespace nilsynth::testing;

namespace {

OracleConfig serial() {
  OracleConfig c;
  c.threads = 1;
  return c;
}

ControlGrid sampled_geodesic(const MetricSpec& spec, const Covector& cov, double t, int n) {
  // Midpoint samples of u(s) = e^{sA} u0.
  const SkewMatrix a = vertical_combination(spec, cov.r);
  ControlGrid g{n, Eigen::MatrixXd(n, spec.rank()), t};
  for (int j = 0; j < n; ++j) g.controls.row(j) = (skew_exp(a, (j + 0.5) * t / n) * cov.u0).transpose();
  return g;
}

}  // namespace

TEST(IntegrateControls, TrivialCases) {
  Rng rng(91);
  const MetricSpec spec = random_spec(rng, 4);
  const ControlGrid zero{8, Eigen::MatrixXd::Zero(8, 4), 2.0};
  const GeodesicPoint p0 = integrate_controls(spec, zero);
  EXPECT_EQ(p0.x.norm(), 0.0);
  EXPECT_EQ(p0.y.norm(), 0.0);
  const Eigen::VectorXd u = gaussian_vector(rng, 4);
  const ControlGrid one{1, u.transpose(), 1.5};
  const GeodesicPoint p1 = integrate_controls(spec, one);
  EXPECT_TRUE(p1.x.isApprox(1.5 * u, 1e-15));
  EXPECT_NEAR(p1.y.norm(), 0.0, 1e-15);  // straight segment from the origin
  // Two segments: y_h = tau^2/2 u1^T L_h u2.
  const Eigen::VectorXd v = gaussian_vector(rng, 4);
  ControlGrid two{2, Eigen::MatrixXd(2, 4), 2.0};
  two.controls << u.transpose(), v.transpose();
  const GeodesicPoint p2 = integrate_controls(spec, two);
  for (int h = 0; h < 2; ++h) EXPECT_NEAR(p2.y(h), 0.5 * u.dot(spec.generator(h).matrix() * v), 1e-14);
  EXPECT_THROW(integrate_controls(spec, ControlGrid{2, Eigen::MatrixXd::Zero(3, 4), 1.0}), InputError);
}

TEST(IntegrateControls, ConvergesToGeodesicAtSecondOrder) {
  Rng rng(92);
  for (int trial = 0; trial < 5; ++trial) {
    const MetricSpec spec = random_spec(rng, 3 + trial % 3);
    const Covector cov = random_covector(rng, spec.rank());
    const double t = cut_time(spec, cov);
    const Eigen::VectorXd exact = geodesic_closed_form(spec, cov, t).stacked();
    const double e1 = (integrate_controls(spec, sampled_geodesic(spec, cov, t, 256)).stacked() - exact).norm();
    const double e2 = (integrate_controls(spec, sampled_geodesic(spec, cov, t, 512)).stacked() - exact).norm();
    EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.1);
    EXPECT_LT(e2, 10.0 * t * t / (512.0 * 512.0));
  }
}

TEST(Oracle, AdjointJacobianMatchesFiniteDifferences) {
  Rng rng(93);
  const MetricSpec spec = random_spec(rng, 4);
  Eigen::MatrixXd u(16, 4);
  for (int i = 0; i < 16; ++i) u.row(i) = gaussian_vector(rng, 4).transpose();
  Eigen::VectorXd f;
  Eigen::MatrixXd jac;
  detail::endpoint_and_jacobian(spec, u, f, jac);
  const double h = 1e-6;
  for (int c = 0; c < jac.cols(); c += 5) {
    Eigen::MatrixXd up = u, um = u;
    up(c / 4, c % 4) += h;
    um(c / 4, c % 4) -= h;
    Eigen::VectorXd fp, fm;
    Eigen::MatrixXd dummy;
    detail::endpoint_and_jacobian(spec, up, fp, dummy);
    detail::endpoint_and_jacobian(spec, um, fm, dummy);
    EXPECT_LT(((fp - fm) / (2 * h) - jac.col(c)).norm(), 1e-8);
  }
  const GeodesicPoint p = integrate_controls(spec, ControlGrid{16, u, 1.0});
  EXPECT_LT((p.stacked() - f).norm(), 1e-14);
}

TEST(Oracle, StraightLineTarget) {
  Rng rng(94);
  const MetricSpec spec = random_spec(rng, 4);
  const Eigen::VectorXd x = gaussian_vector(rng, 4);
  const OracleResult r = brute_force_distance(spec, GeodesicPoint{x, Eigen::VectorXd::Zero(2), 0.0}, serial());
  EXPECT_NEAR(r.distance, x.norm(), 1e-3);
  EXPECT_LE(r.residual, 1e-9);
  EXPECT_LE(r.best.max_speed(), 1.0 + 1e-12);
}

TEST(Oracle, PreCutTargetsAreNotBeaten) {
  Rng rng(95);
  for (int trial = 0; trial < 4; ++trial) {
    const MetricSpec spec = random_spec(rng, 4);
    const Covector cov = random_covector(rng, 4);
    const double t = 0.5 * cut_time(spec, cov);
    const OracleResult r = brute_force_distance(spec, geodesic_closed_form(spec, cov, t), serial());
    EXPECT_GE(r.distance, t - 1e-3);
    EXPECT_NEAR(r.distance, t, 1e-3);
    EXPECT_GT(r.feasible_restarts, 0);
  }
}

TEST(Oracle, LossOfOptimalityAfterCut) {
  Rng rng(96);
  for (int trial = 0; trial < 4; ++trial) {
    const MetricSpec spec = random_spec(rng, 4);
    const Covector cov = random_covector(rng, 4);
    const double t = 1.2 * cut_time(spec, cov);
    const OracleResult r = brute_force_distance(spec, geodesic_closed_form(spec, cov, t), serial());
    EXPECT_LT(r.distance, t - 1e-2);
  }
}

TEST(Oracle, DeterministicAndIsometryInvariant) {
  Rng rng(97);
  const MetricSpec spec = random_spec(rng, 4);
  const Covector cov = random_covector(rng, 4);
  const GeodesicPoint target = geodesic_closed_form(spec, cov, 0.6 * cut_time(spec, cov));
  const OracleResult a = brute_force_distance(spec, target, serial());
  OracleConfig par = serial();
  par.threads = 3;
  EXPECT_EQ(brute_force_distance(spec, target, par).distance, a.distance);
  // Horizontal rotation moves the target accordingly.
  const Eigen::MatrixXd q = random_orthogonal(rng, 4);
  const GeodesicPoint moved{q * target.x, target.y, target.t};
  EXPECT_NEAR(brute_force_distance(conjugate_spec(spec, q), moved, serial()).distance, a.distance, 1e-4);
}
