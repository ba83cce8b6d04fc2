#include "matchctl/matching.hpp"

#include <gtest/gtest.h>

#include "matchctl/ballbeam.hpp"
#include "matchctl/linear.hpp"
#include "test_oracles.hpp"

using namespace matchctl;

namespace {

struct BallBeamFixture : public ::testing::Test {
  void SetUp() override {
    model = ballbeam::BallBeamModel::create_default();
    open = model->open_loop_system();
    closed = model->closed_loop_family();
  }
  std::shared_ptr<const ballbeam::BallBeamModel> model;
  LagrangianSystem open;
  ClosedLoopSpec closed;
};

/// Scales one entry (i, j) (and its mirror) of the hat metric, leaving the
/// rest of the family untouched; used as a non-matching probe.
ClosedLoopSpec scale_ghat_entry(const ClosedLoopSpec& spec, int i, int j,
                                double factor) {
  ClosedLoopSpec out = spec;
  auto base = spec.metric_hat.value;
  out.metric_hat = MetricField::with_fd([base, i, j, factor](const VectorXd& q) {
    MatrixXd g = base(q);
    g(i, j) *= factor;
    if (i != j) g(j, i) *= factor;
    return g;
  });
  return out;
}

}  // namespace

TEST_F(BallBeamFixture, IdenticalDataMatchTrivially) {
  const ClosedLoopSpec same = closed_loop_from_open(open);
  const MatchingResidual r = matching_residuals(
      open, same, Eigen::Vector2d(20.0, 0.2), Eigen::Vector2d(0.5, -0.3));
  EXPECT_LE(r.norms.geodesic, 1e-12);
  EXPECT_LE(r.norms.dissipative, 1e-12);
  EXPECT_LE(r.norms.potential, 1e-12);
}

TEST_F(BallBeamFixture, DefaultFamilyMatchesAtEquilibrium) {
  const MatchingResidual r = matching_residuals(
      open, closed, Eigen::Vector2d(22.0, 0.0), Eigen::Vector2d::Zero());
  EXPECT_LE(r.norms.geodesic, 1e-6);
  EXPECT_LE(r.norms.dissipative, 1e-6);
  EXPECT_LE(r.norms.potential, 1e-6);
}

TEST_F(BallBeamFixture, LambdaTensorLowersHatMetricToOpenMetric) {
  const Eigen::Vector2d q(22.0, 0.0);
  const MatrixXd lam = lambda_tensor(open, closed, q);
  const MatrixXd back = lam * closed.metric_hat.value(q);
  EXPECT_LT((back - open.metric.value(q)).cwiseAbs().maxCoeff(), 1e-10);
  // First row of lambda carries the family frame (sigma, mu).
  const auto f = model->eval_family(22.0, 0.0);
  EXPECT_NEAR(lam(0, 0), f.sigma, 1e-12);
  EXPECT_NEAR(lam(0, 1), f.mu, 1e-12);
}

TEST(LambdaTensor, TrivialScalings) {
  const LinearInstance inst = make_random_admissible_instance(3, 1, 99);
  const LagrangianSystem open = to_lagrangian(inst.sys);
  ClosedLoopSpec same = closed_loop_from_open(open);
  const Eigen::Vector3d q(0.3, -0.2, 0.9);
  EXPECT_LT((lambda_tensor(open, same, q) - MatrixXd::Identity(3, 3))
                .cwiseAbs()
                .maxCoeff(),
            1e-13);
  same.metric_hat = MetricField::constant((2.0 * inst.sys.g).eval());
  EXPECT_LT((lambda_tensor(open, same, q) - 0.5 * MatrixXd::Identity(3, 3))
                .cwiseAbs()
                .maxCoeff(),
            1e-13);
}

TEST_F(BallBeamFixture, LambdaPdeResidualsVanishOnFamily) {
  for (double s : {6.0, 14.0, 22.0, 30.0, 37.0}) {
    for (double th : {-0.35, -0.1, 0.0, 0.2, 0.4}) {
      const auto r = lambda_pde_residuals(open, closed, Eigen::Vector2d(s, th));
      EXPECT_LE(r.lambda_norm, 1e-5) << "s=" << s << " th=" << th;
      EXPECT_LE(r.transport_norm, 1e-5) << "s=" << s << " th=" << th;
    }
  }
}

TEST_F(BallBeamFixture, LambdaPdeResidualsVanishWhenClosedEqualsOpen) {
  const ClosedLoopSpec same = closed_loop_from_open(open);
  const auto r = lambda_pde_residuals(open, same, Eigen::Vector2d(18.0, 0.1));
  EXPECT_LE(r.lambda_norm, 1e-8);
  EXPECT_LE(r.transport_norm, 1e-8);
}

TEST_F(BallBeamFixture, PerturbedHatMetricIsDetected) {
  const ClosedLoopSpec bad = scale_ghat_entry(closed, 0, 0, 1.01);
  const Eigen::Vector2d q(22.0, 0.1);
  const MatchingResidual r =
      matching_residuals(open, bad, q, Eigen::Vector2d(0.3, -0.2));
  const auto pde = lambda_pde_residuals(open, bad, q);
  EXPECT_GT(std::max(r.norms.max(),
                     std::max(pde.lambda_norm, pde.transport_norm)),
            1e-3);
}

TEST_F(BallBeamFixture, TheoremEquivalenceOnGrid) {
  // Points where the geodesic block vanishes are the points where the
  // first-order system does, and a perturbation breaks both.
  for (double s : {8.0, 22.0, 34.0}) {
    for (double th : {-0.3, 0.0, 0.3}) {
      const Eigen::Vector2d q(s, th);
      const auto good = matching_residuals(open, closed, q,
                                           Eigen::Vector2d(0.1, 0.1));
      const auto pde = lambda_pde_residuals(open, closed, q);
      EXPECT_LE(good.norms.geodesic, 1e-7);
      EXPECT_LE(std::max(pde.lambda_norm, pde.transport_norm), 1e-5);
    }
  }
  const ClosedLoopSpec bad = scale_ghat_entry(closed, 0, 0, 1.01);
  const Eigen::Vector2d q(22.0, 0.1);
  EXPECT_GT(matching_residuals(open, bad, q, Eigen::Vector2d::Zero())
                .norms.geodesic,
            1e-4);
  EXPECT_GT(lambda_pde_residuals(open, bad, q).transport_norm, 1e-4);
}

TEST_F(BallBeamFixture, DerivationIdentitiesVanishOnFamily) {
  for (double s : {7.0, 22.0, 35.0}) {
    for (double th : {-0.3, 0.05, 0.35}) {
      const auto r = derivation_residuals(open, closed, Eigen::Vector2d(s, th));
      EXPECT_LE(r.projected_dghat.max_abs(), 1e-8) << s << " " << th;
      EXPECT_LE(r.lambda_contracted.max_abs(), 1e-8) << s << " " << th;
    }
  }
}

TEST_F(BallBeamFixture, ControlLawVanishesWhenClosedEqualsOpen) {
  const ClosedLoopSpec same = closed_loop_from_open(open);
  const VectorXd u = control_law(
      open, same, ConfigState(Eigen::Vector2d(17.0, -0.2),
                              Eigen::Vector2d(1.0, 0.4)));
  EXPECT_LT(u.cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(BallBeamFixture, ControlLawRespectsActuationConstraint) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const VectorXd q = open.domain.sample(rng);
    const Eigen::Vector2d qd(uni(rng), uni(rng));
    const VectorXd u = control_law(open, closed, ConfigState(q, qd));
    const MatrixXd gi = open.metric.value(q).fullPivLu().inverse();
    const VectorXd defect = open.projection.value(q) * gi * u;
    EXPECT_LE(defect.cwiseAbs().maxCoeff(),
              1e-7 * (1.0 + u.cwiseAbs().maxCoeff()));
  }
}

TEST_F(BallBeamFixture, ControlLawUnactuatedComponentAtEquilibrium) {
  const VectorXd u = control_law(
      open, closed,
      ConfigState(Eigen::Vector2d(22.0, 0.0), Eigen::Vector2d::Zero()));
  const MatrixXd gi =
      open.metric.value(Eigen::Vector2d(22.0, 0.0)).fullPivLu().inverse();
  const VectorXd defect =
      open.projection.value(Eigen::Vector2d(22.0, 0.0)) * gi * u;
  EXPECT_LE(std::abs(defect[0]), 1e-8);
}

TEST(MatchingLinear, ConstantConstructionMatchesAtRandomStates) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const LinearInstance inst = make_random_admissible_instance(4, 2, 7);
  const ConstantClosedLoop cl = theorem2_match(inst.sys, inst.fb);
  const LagrangianSystem open = to_lagrangian(inst.sys);
  const ClosedLoopSpec closed = to_closed_loop(inst.sys, cl);
  for (int i = 0; i < 50; ++i) {
    VectorXd q(4), qd(4);
    for (int k = 0; k < 4; ++k) {
      q[k] = uni(rng);
      qd[k] = uni(rng);
    }
    const MatchingResidual r = matching_residuals(open, closed, q, qd);
    EXPECT_LE(r.norms.max(), 1e-9);
  }
}

TEST(MatchingLinear, ControlLawReproducesFeedback) {
  const LinearInstance inst = make_random_admissible_instance(3, 1, 21);
  const ConstantClosedLoop cl = theorem2_match(inst.sys, inst.fb);
  const LagrangianSystem open = to_lagrangian(inst.sys);
  const ClosedLoopSpec closed = to_closed_loop(inst.sys, cl);
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    VectorXd q(3), qd(3);
    for (int k = 0; k < 3; ++k) {
      q[k] = uni(rng);
      qd[k] = uni(rng);
    }
    const VectorXd u = control_law(open, closed, ConfigState(q, qd));
    const VectorXd u_fb = inst.fb.v + inst.fb.a * q + inst.fb.b * qd;
    EXPECT_LE((u - u_fb).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST_F(BallBeamFixture, ClosedLoopEnergyBasics) {
  const ConfigState rest(Eigen::Vector2d(18.0, 0.1), Eigen::Vector2d::Zero());
  const EnergySample e = closed_loop_energy(closed, rest);
  EXPECT_NEAR(e.value, closed.potential_hat.value(rest.q), 1e-14);
  EXPECT_EQ(e.rate, 0.0);

  // Conservative family member: CHat_2 = 0 stays inside the family and
  // zeroes the rate.
  ballbeam::BallBeamConfig cfg;
  cfg.tuning.c2_hat.kind = ballbeam::C2HatChoice::Kind::LinearDamping;
  cfg.tuning.c2_hat.c = 0.0;
  auto conservative = ballbeam::BallBeamModel::create(cfg);
  const ClosedLoopSpec cons = conservative->closed_loop_family();
  const EnergySample e2 = closed_loop_energy(
      cons, ConfigState(Eigen::Vector2d(20.0, 0.1), Eigen::Vector2d(0.5, 0.2)));
  EXPECT_EQ(e2.rate, 0.0);
}

TEST_F(BallBeamFixture, ResidualRecordSerializesToJson) {
  ResidualRecord rec;
  rec.q = Eigen::Vector2d(5.0, 0.1);
  rec.qdot = Eigen::Vector2d(0.0, 0.0);
  rec.geodesic_norm = 1e-9;
  const nlohmann::json j = rec;
  EXPECT_EQ(j.at("q").size(), 2u);
  EXPECT_DOUBLE_EQ(j.at("geodesic_norm").get<double>(), 1e-9);
}

TEST_F(BallBeamFixture, SingularHatMetricThrows) {
  ClosedLoopSpec bad = closed;
  bad.metric_hat = MetricField::constant(MatrixXd::Zero(2, 2));
  EXPECT_THROW(matching_residuals(open, bad, Eigen::Vector2d(22.0, 0.0),
                                  Eigen::Vector2d::Zero()),
               SingularMatrixError);
}
