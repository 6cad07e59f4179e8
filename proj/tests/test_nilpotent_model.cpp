#include <gtest/gtest.h>

#include <numbers>

#include "nilsynth/exponential_map.hpp"
#include "nilsynth/nilpotent_model.hpp"
#include "nilsynth/quaternion_so4.hpp"
#include "test_support.hpp"

using namespace nilsynth;
using namespace nilsynth::testing;

TEST(MetricSpec, ValidatesGenerators) {
  EXPECT_THROW(MetricSpec(quat::i(), 2.0 * quat::i()), InputError);
  EXPECT_THROW(MetricSpec(quat::i(), SkewMatrix::zero(4)), InputError);
  EXPECT_THROW(MetricSpec(quat::i(), SkewMatrix::zero(3)), InputError);
  EXPECT_THROW(MetricSpec(std::vector<SkewMatrix>{}), InputError);
  const MetricSpec k1({quat::i()});
  EXPECT_EQ(k1.corank(), 1);
  EXPECT_TRUE(MetricSpec(quat::i(), quat::i_hat()).normalized());
  EXPECT_FALSE(MetricSpec(2.0 * quat::i(), quat::i_hat()).normalized());
}

TEST(Normalize, ExamplesAndIdempotence) {
  const MetricSpec a = normalize(MetricSpec(quat::i(), quat::i_hat()));
  EXPECT_LT((a.generator(0).matrix() - quat::i().matrix()).norm(), 1e-15);
  EXPECT_LT((a.generator(1).matrix() - quat::i_hat().matrix()).norm(), 1e-15);

  const MetricSpec b = normalize(MetricSpec(2.0 * quat::i(), quat::i() + quat::j_hat()));
  EXPECT_LT((b.generator(0).matrix() - quat::i().matrix()).norm(), 1e-14);
  EXPECT_LT((b.generator(1).matrix() - quat::j_hat().matrix()).norm(), 1e-14);

  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 3 + trial % 5;
    const MetricSpec n = normalize(random_spec(rng, m));
    EXPECT_TRUE(n.normalized());
    const MetricSpec nn = normalize(n);
    for (int h = 0; h < 2; ++h) EXPECT_LT((nn.generator(h).matrix() - n.generator(h).matrix()).norm(), 1e-13);
  }
}

TEST(ReduceFrame, Examples) {
  Rng rng(13);
  const MetricSpec spec = random_spec(rng, 4);
  const ReducedFrame f0 = reduce_frame(spec, Eigen::Vector2d(2.5, 0.0));
  EXPECT_EQ(f0.theta, 0.0);
  EXPECT_EQ(f0.r_mod, 2.5);
  EXPECT_LT((f0.L_theta.matrix() - spec.generator(0).matrix()).norm(), 1e-15);

  const ReducedFrame f1 = reduce_frame(spec, Eigen::Vector2d(0.0, 1.0));
  EXPECT_NEAR(f1.theta, std::numbers::pi / 2, 1e-15);
  EXPECT_LT((f1.L_theta.matrix() - spec.generator(1).matrix()).norm(), 1e-15);
  EXPECT_LT((f1.L_theta_tilde.matrix() + spec.generator(0).matrix()).norm(), 1e-15);

  EXPECT_THROW(reduce_frame(spec, Eigen::Vector2d::Zero()), InputError);

  const Eigen::Vector2d r(0.3, -0.8);
  const ReducedFrame fa = reduce_frame(spec, r), fb = reduce_frame(spec, 3.0 * r);
  EXPECT_NEAR(fb.r_mod, 3.0 * fa.r_mod, 1e-15);
  EXPECT_NEAR(fa.theta, fb.theta, 1e-15);
  EXPECT_LT((fa.L_theta.matrix() - fb.L_theta.matrix()).norm(), 1e-15);
  const Eigen::MatrixXd& om = fa.omega_map;
  EXPECT_LT((om * om.transpose() - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-12);
}

// Master property: Omega E_{L1,L2}^{u0,r1,r2}(t) = E_{L_theta,L~_theta}^{M u0,|r|,0}(t)
// with the right side evaluated in the adapted (block) coordinates.
TEST(ReduceFrame, EquivarianceIdentity) {
  Rng rng(14);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 3 + trial % 4;
    const MetricSpec spec = random_spec(rng, m);
    const Covector cov = random_covector(rng, m);
    const ReducedFrame f = reduce_frame(spec, cov.r);
    const MetricSpec reduced = conjugate_spec(rotate_spec(spec, f.theta), f.block.conjugator);
    const Covector red_cov{f.block.conjugator * cov.u0, Eigen::Vector2d(f.r_mod, 0.0)};
    const double t_cut = 2.0 * std::numbers::pi / (f.r_mod * f.block.moduli.front());
    for (int s = 1; s <= 20; ++s) {
      const double t = t_cut * s / 20.0;
      const Eigen::VectorXd lhs = f.omega_map * geodesic_closed_form(spec, cov, t).stacked();
      const Eigen::VectorXd rhs = geodesic_closed_form(reduced, red_cov, t).stacked();
      EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
    }
    const double t = 0.7 * t_cut;
    const Eigen::VectorXd ode = geodesic_ode(reduced, red_cov, t, 3000).stacked();
    EXPECT_LT((f.omega_map * geodesic_closed_form(spec, cov, t).stacked() - ode).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(SpecJson, RoundtripAndRejection) {
  const MetricSpec spec(quat::i(), quat::j_hat());
  const MetricSpec back = spec_from_json(spec_to_json(spec));
  EXPECT_EQ(back.rank(), 4);
  EXPECT_LT((back.generator(1).matrix() - quat::j_hat().matrix()).norm(), 0.0 + 1e-300);

  nlohmann::json bad = spec_to_json(spec);
  bad["extra"] = 1;
  EXPECT_THROW(spec_from_json(bad), InputError);
  nlohmann::json nonskew = spec_to_json(spec);
  nonskew["L"][0][0][1] = 5.0;
  EXPECT_THROW(spec_from_json(nonskew), InputError);
  nlohmann::json wrong_m = spec_to_json(spec);
  wrong_m["m"] = 5;
  EXPECT_THROW(spec_from_json(wrong_m), InputError);
  nlohmann::json tiny = spec_to_json(spec);
  tiny["L"][0][1][0] = tiny["L"][0][1][0].get<double>() + 1e-11;
  EXPECT_NO_THROW(spec_from_json(tiny));
  EXPECT_THROW(load_spec("/nonexistent/spec.json"), InputError);
}
