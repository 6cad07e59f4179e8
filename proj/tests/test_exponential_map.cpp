#include <gtest/gtest.h>

#include <numbers>

#include "nilsynth/exponential_map.hpp"
#include "test_support.hpp"

using namespace nilsynth;
using namespace nilsynth::testing;

namespace {

double sup_gap(const GeodesicPoint& a, const GeodesicPoint& b) {
  return std::max((a.x - b.x).cwiseAbs().maxCoeff(), (a.y - b.y).cwiseAbs().maxCoeff());
}

double cut_time_of(const MetricSpec& spec, const Covector& cov) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(spec.rank(), spec.rank());
  for (int h = 0; h < spec.corank(); ++h) a += cov.r(h) * spec.generator(h).matrix();
  return 2.0 * std::numbers::pi / max_modulus(SkewMatrix::skew_part(a));
}

}  // namespace

TEST(GeodesicClosedForm, StraightLineAndOrigin) {
  Rng rng(1);
  const MetricSpec spec = random_spec(rng, 4);
  Covector cov{unit_vector(rng, 4), Eigen::VectorXd::Zero(2)};
  const GeodesicPoint p = geodesic_closed_form(spec, cov, 2.5);
  EXPECT_EQ((p.x - 2.5 * cov.u0).norm(), 0.0);
  EXPECT_EQ(p.y.norm(), 0.0);
  cov.r << 0.3, -1.1;
  const GeodesicPoint o = geodesic_closed_form(spec, cov, 0.0);
  EXPECT_EQ(o.x.norm(), 0.0);
  EXPECT_EQ(o.y.norm(), 0.0);
}

TEST(GeodesicClosedForm, MatchesOdeAcrossRanks) {
  Rng rng(2024);
  for (int trial = 0; trial < 120; ++trial) {
    const int m = 3 + trial % 4;
    const int k = (trial % 5 == 0) ? 1 : 2;
    const MetricSpec spec = random_spec(rng, m, k);
    const Covector cov = random_covector(rng, m, k, uniform(rng, 0.2, 2.0));
    const double t = uniform(rng, 0.0, std::min(2.0 * cut_time_of(spec, cov), 4.0 * std::numbers::pi));
    const GeodesicPoint a = geodesic_closed_form(spec, cov, t);
    const GeodesicPoint b = geodesic_ode(spec, cov, t, 4000);
    EXPECT_LT(sup_gap(a, b), 1e-8) << "m=" << m << " k=" << k << " t=" << t;
  }
}

TEST(GeodesicOde, StraightLineNormAndOrder) {
  Rng rng(9);
  const MetricSpec spec = random_spec(rng, 5);
  Covector cov{unit_vector(rng, 5), Eigen::VectorXd::Zero(2)};
  const GeodesicPoint s = geodesic_ode(spec, cov, 3.0, 3);
  EXPECT_LT((s.x - 3.0 * cov.u0).norm(), 1e-14);
  EXPECT_LT(s.y.norm(), 1e-14);

  cov.r << 0.7, 0.4;
  const GeodesicPoint exact = geodesic_closed_form(spec, cov, 3.0);
  const double e1 = sup_gap(geodesic_ode(spec, cov, 3.0, 40), exact);
  const double e2 = sup_gap(geodesic_ode(spec, cov, 3.0, 80), exact);
  EXPECT_NEAR(e1 / e2, 16.0, 2.0);
  // Horizontal speed is preserved: u(t) = e^{tA} u0 at the final step.
  const double h = 1e-4;
  const GeodesicPoint p = geodesic_closed_form(spec, cov, 2.0 + h), q = geodesic_closed_form(spec, cov, 2.0 - h);
  EXPECT_NEAR(((p.x - q.x) / (2 * h)).norm(), 1.0, 1e-7);
}

TEST(CMatrix, SignAndTopBlockAtMaxwellTime) {
  // A = r L_theta block diagonal with moduli (a1, a2); A~ has top block alpha0 J.
  Rng rng(77);
  const double a1 = 1.7, a2 = 0.6, r = 1.3;
  Eigen::MatrixXd lt = Eigen::MatrixXd::Zero(4, 4);
  lt(0, 1) = a1;
  lt(1, 0) = -a1;
  lt(2, 3) = a2;
  lt(3, 2) = -a2;
  const SkewMatrix l_theta(lt);
  const SkewMatrix l_tilde = random_skew(rng, 4);
  const double alpha0 = l_tilde(0, 1);
  const double t_star = 2.0 * std::numbers::pi / (a1 * r);
  const Eigen::MatrixXd c = c_matrix(r * l_theta, l_tilde, t_star);
  const double expect = -std::numbers::pi * alpha0 / (a1 * a1 * r * r);
  EXPECT_LT((c.topLeftCorner(2, 2) - expect * Eigen::Matrix2d::Identity()).norm(), 1e-12);

  // <C u0, u0> reproduces y_2 of the ODE.
  const MetricSpec spec(l_theta, l_tilde);
  for (int s = 0; s < 50; ++s) {
    Covector cov{unit_vector(rng, 4), Eigen::Vector2d(r, 0.0)};
    const double t = uniform(rng, 0.0, 2.0 * t_star);
    const double y2 = cov.u0.dot(c_matrix(r * l_theta, l_tilde, t) * cov.u0);
    EXPECT_NEAR(y2, geodesic_ode(spec, cov, t, 4000).y(1), 1e-8);
  }
  EXPECT_LT(c_matrix(l_theta, SkewMatrix::zero(4), 2.0).norm(), 1e-15);
}

TEST(CMatrix, SingularAndOddDimension) {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 3 + trial % 3;
    Eigen::MatrixXd e = random_skew(rng, m).matrix();
    if (trial % 2 == 0) {
      e.row(0).setZero();
      e.col(0).setZero();
    }
    const SkewMatrix l1(e);
    const SkewMatrix l2 = random_skew(rng, m);
    const MetricSpec spec(l1, l2);
    Covector cov{unit_vector(rng, m), Eigen::Vector2d(1.0, 0.0)};
    const double t = uniform(rng, 0.0, 6.0);
    const double y2 = cov.u0.dot(c_matrix(l1, l2, t) * cov.u0);
    EXPECT_NEAR(y2, geodesic_ode(spec, cov, t, 4000).y(1), 1e-8);
  }
}

TEST(ExpUnitTime, HomogeneityAndQuadraticStructure) {
  Rng rng(4);
  const MetricSpec spec = random_spec(rng, 4);
  const Covector cov = random_covector(rng, 4);
  EXPECT_EQ(exp_unit_time(spec, Covector{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2)}).x.norm(), 0.0);
  EXPECT_LT(sup_gap(exp_unit_time(spec, cov), geodesic_closed_form(spec, cov, 1.0)), 1e-15);
  for (double t : {0.1, 0.5, 1.3, 2.9}) {
    const Covector scaled{t * cov.u0, t * cov.r};
    EXPECT_LT(sup_gap(exp_unit_time(spec, scaled), geodesic_closed_form(spec, cov, t)), 1e-12);
  }
  // x linear, y quadratic in u0 at fixed (r, t).
  const GeodesicPoint p1 = geodesic_closed_form(spec, cov, 1.7);
  for (double s : {0.5, 2.0}) {
    const GeodesicPoint ps = geodesic_closed_form(spec, Covector{s * cov.u0, cov.r}, 1.7);
    EXPECT_LT((ps.x - s * p1.x).norm(), 1e-13);
    EXPECT_LT((ps.y - s * s * p1.y).norm(), 1e-13);
  }
}

TEST(GeodesicFlow, AnalyticRDerivativeMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 3 + trial % 4;
    const MetricSpec spec = random_spec(rng, m);
    const Covector cov = random_covector(rng, m);
    const double t = uniform(rng, 0.1, 5.0);
    const FlowSnapshot snap = GeodesicFlow(spec, cov.r).snapshot(t, true);
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-5;
      Eigen::VectorXd rp = cov.r, rm = cov.r;
      rp(j) += h;
      rm(j) -= h;
      const Eigen::VectorXd fd =
          (GeodesicFlow(spec, rp).evaluate(cov.u0, t).x - GeodesicFlow(spec, rm).evaluate(cov.u0, t).x) / (2 * h);
      EXPECT_LT((snap.dX_dr[j] * cov.u0 - fd).norm(), 1e-7);
    }
  }
  // Straight branch: (t^2 / 2) L_j u0.
  const MetricSpec spec = random_spec(rng, 4);
  const Eigen::VectorXd u0 = unit_vector(rng, 4);
  const FlowSnapshot s0 = GeodesicFlow(spec, Eigen::VectorXd::Zero(2)).snapshot(2.0, true);
  const Eigen::VectorXd h = Eigen::Vector2d(1e-6, 0.0);
  const Eigen::VectorXd fd =
      (GeodesicFlow(spec, h).evaluate(u0, 2.0).x - GeodesicFlow(spec, -h).evaluate(u0, 2.0).x) / 2e-6;
  EXPECT_LT((s0.dX_dr[0] * u0 - fd).norm(), 1e-7);
}
