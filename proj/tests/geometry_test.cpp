#include "matchctl/geometry.hpp"

#include <gtest/gtest.h>

#include "matchctl/ballbeam.hpp"
#include "test_oracles.hpp"

using namespace matchctl;
using testutil::AnalyticMetric2;

namespace {

Tensor3 christoffel_first_fd(const MetricField& metric, const VectorXd& q) {
  // Independent route: first-kind symbols from fd partials of the values.
  MetricField fd = MetricField::with_fd(metric.value);
  return christoffel_first(fd, q);
}

}  // namespace

TEST(FdPartials, QuadraticIsExactUnderRichardson) {
  const auto f = [](const VectorXd& q) { return q[0] * q[0]; };
  const VectorXd g = fd_partials(std::function<double(const VectorXd&)>(f),
                                 Eigen::VectorXd::Constant(1, 3.0), 1e-4);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FdPartials, ConstantFieldVanishes) {
  const auto f = [](const VectorXd&) { return 42.0; };
  const VectorXd g = fd_partials(std::function<double(const VectorXd&)>(f),
                                 Eigen::Vector2d(1.0, -2.0));
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FdPartials, ShrinksStepOnceNearBoundaryThenErrors) {
  Box box;
  box.lo = Eigen::VectorXd::Constant(1, 0.0);
  box.hi = Eigen::VectorXd::Constant(1, 1.0);
  const std::function<double(const VectorXd&)> f = [](const VectorXd& q) {
    return q[0] * q[0];
  };
  // Inside: fine. Step 0.4 around 0.7 would leave [0,1]; one halving saves it.
  EXPECT_NEAR(fd_partials(f, Eigen::VectorXd::Constant(1, 0.7), 0.4, &box)[0],
              1.4, 1e-10);
  // At the edge even the halved stencil leaves the box.
  EXPECT_THROW(fd_partials(f, Eigen::VectorXd::Constant(1, 1.0), 0.4, &box),
               DomainError);
}

TEST(Christoffel, ConstantMetricVanishes) {
  MatrixXd g(2, 2);
  g << 2.0, 0.3, 0.3, 1.5;
  const MetricField metric = MetricField::constant(g);
  const Tensor3 G1 = christoffel_first(metric, Eigen::Vector2d(0.4, -1.0));
  const Tensor3 G2 = christoffel_second(metric, Eigen::Vector2d(0.4, -1.0));
  EXPECT_EQ(G1.max_abs(), 0.0);
  EXPECT_EQ(G2.max_abs(), 0.0);
}

TEST(Christoffel, IdentityMetricVanishesAnywhere) {
  const MetricField metric = MetricField::constant(MatrixXd::Identity(3, 3));
  const Tensor3 G2 =
      christoffel_second(metric, Eigen::Vector3d(1.0, 2.0, -0.5));
  EXPECT_EQ(G2.max_abs(), 0.0);
}

TEST(Christoffel, PolarStyleHandValues) {
  const MetricField metric = testutil::polar_metric();
  const Eigen::Vector2d q(2.0, 0.7);
  const Tensor3 G1 = christoffel_first(metric, q);
  // [22,1] = -q0, [12,2] = [21,2] = q0, everything else zero.
  EXPECT_NEAR(G1(0, 1, 1), -2.0, 1e-14);
  EXPECT_NEAR(G1(1, 0, 1), 2.0, 1e-14);
  EXPECT_NEAR(G1(1, 1, 0), 2.0, 1e-14);
  EXPECT_NEAR(G1(0, 0, 0), 0.0, 1e-14);
  EXPECT_NEAR(G1(1, 1, 1), 0.0, 1e-14);

  const Tensor3 G2 = christoffel_second(metric, q);
  EXPECT_NEAR(G2(0, 1, 1), -2.0, 1e-14);    // Gamma^1_22 = -q0
  EXPECT_NEAR(G2(1, 0, 1), 0.5, 1e-14);     // Gamma^2_12 = 1/(2 q0)... = 1/2
  EXPECT_NEAR(G2(1, 1, 0), 0.5, 1e-14);
}

TEST(Christoffel, SingularMetricThrows) {
  const MetricField metric = MetricField::constant(MatrixXd::Zero(2, 2));
  EXPECT_THROW(christoffel_second(metric, Eigen::Vector2d(0, 0)),
               SingularMatrixError);
}

TEST(Christoffel, BallBeamEntryMatchesHandExpansion) {
  auto model = ballbeam::BallBeamModel::create_default();
  const LagrangianSystem sys = model->open_loop_system();
  const Eigen::Vector2d q(22.0, 0.15);
  const auto k = model->alpha_derivatives(q[1]);
  const Tensor3 G1 = christoffel_first(sys.metric, q);
  // [22,1] = dg12/dtheta - (1/2) dg22/ds with dg22/ds = 5 s alpha'^2.
  EXPECT_NEAR(G1(0, 1, 1), k.d2 - 2.5 * q[0] * k.d1 * k.d1, 1e-12);
}

TEST(Christoffel, AgreesWithFiniteDifferenceOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  const AnalyticMetric2 fam;
  const MetricField metric = fam.field();
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d q(uni(rng), uni(rng));
    const Tensor3 a = christoffel_first(metric, q);
    const Tensor3 b = christoffel_first_fd(metric, q);
    EXPECT_LT((a - b).max_abs(), 1e-8 * (1.0 + a.max_abs()));
  }
}

TEST(Christoffel, LoweringConsistencyAndSymmetry) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  const MetricField metric = AnalyticMetric2{}.field();
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d q(uni(rng), uni(rng));
    const MatrixXd g = metric.value(q);
    const Tensor3 G1 = christoffel_first(metric, q);
    const Tensor3 G2 = christoffel_second(metric, q);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          // exact symmetry in the last index pair
          EXPECT_EQ(G1(a, b, c), G1(a, c, b));
          EXPECT_EQ(G2(a, b, c), G2(a, c, b));
          double lowered = 0.0;
          for (int l = 0; l < 2; ++l) lowered += g(a, l) * G2(l, b, c);
          EXPECT_NEAR(G1(a, b, c), lowered, 1e-10 * (1.0 + G1.max_abs()));
        }
  }
}

TEST(Fields, FdPartialsAgreeWithAnalyticOnRandomPoints) {
  const MetricField metric = AnalyticMetric2{}.field();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d q(uni(rng), uni(rng));
    const Tensor3 a = metric.partials(q);
    const Tensor3 n = fd_partials(metric.value, q);
    worst = std::max(worst, (a - n).max_abs() / (1.0 + a.max_abs()));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Fields, BallBeamG22PartialMatchesAnalyticChainRule) {
  auto model = ballbeam::BallBeamModel::create_default();
  const LagrangianSystem sys = model->open_loop_system();
  std::mt19937_64 rng(5);
  const auto pts = testutil::sample_box(sys.domain, 40, 13);
  double worst = 0.0;
  for (const auto& q : pts) {
    const Tensor3 a = sys.metric.partials(q);
    const Tensor3 n = fd_partials(sys.metric.value, q);
    worst = std::max(worst, (a - n).max_abs() / (1.0 + a.max_abs()));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Fields, GradientConsistencyCheckPasses) {
  auto model = ballbeam::BallBeamModel::create_default();
  const LagrangianSystem sys = model->open_loop_system();
  const auto pts = testutil::sample_box(sys.domain, 100, 17);
  const FieldCheck r = check_gradient_consistency(sys.potential, pts);
  EXPECT_TRUE(r.ok) << r.detail << " worst=" << r.worst;
}

TEST(Fields, ProjectionInvariantsHoldOnShippedSystem) {
  auto model = ballbeam::BallBeamModel::create_default();
  const LagrangianSystem sys = model->open_loop_system();
  const auto pts = testutil::sample_box(sys.domain, 100, 19);
  const FieldCheck r = check_projection(sys.projection, sys.metric, pts);
  EXPECT_TRUE(r.ok) << r.detail << " worst=" << r.worst;
  const FieldCheck spd = check_metric_spd(sys.metric, pts);
  EXPECT_TRUE(spd.ok) << spd.detail;
}

TEST(Fields, DissipationOddness) {
  auto model = ballbeam::BallBeamModel::create_default();
  const LagrangianSystem sys = model->open_loop_system();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  std::vector<VectorXd> qs, qds;
  for (int i = 0; i < 50; ++i) {
    qs.push_back(sys.domain.sample(rng));
    qds.push_back(Eigen::Vector2d(uni(rng), uni(rng)));
  }
  const FieldCheck r = check_dissipation_odd(sys.dissipation, qs, qds);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Fields, ConfigStateRejectsDimensionMismatch) {
  EXPECT_THROW(ConfigState(Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3)),
               std::invalid_argument);
  EXPECT_THROW(ConfigState(Eigen::VectorXd(), Eigen::VectorXd()),
               std::invalid_argument);
}

TEST(Fields, DomainErrorOutsideBox) {
  auto model = ballbeam::BallBeamModel::create_default();
  const LagrangianSystem sys = model->open_loop_system();
  EXPECT_THROW(christoffel_first(sys.metric, Eigen::Vector2d(50.0, 0.0),
                                 &sys.domain),
               DomainError);
}
