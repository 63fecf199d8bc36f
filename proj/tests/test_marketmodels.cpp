#include <gtest/gtest.h>

#include <cmath>

#include "volrec/marketmodels.hpp"
#include "volrec/numerics.hpp"
#include "volrec/serialization.hpp"

namespace {

using namespace volrec;

BergomiScalar scalar_ref() { return BergomiScalar{0.5, ScalarOU{1.0, 0.6}, 0.2}; }

BergomiMulti multi_ref() {
  BergomiMulti m;
  m.gamma = Eigen::Vector2d(0.5, 0.5);
  m.factor.K = Eigen::Vector2d(1.0, 10.0).asDiagonal();
  m.factor.S.resize(2, 2);
  m.factor.S << 0.6, 0.0, 0.32, 0.7332121111929344;
  m.h0 = 0.2;
  return m;
}

ThreeHalves th_ref() { return ThreeHalves{CIR{4.0, 30.0, std::sqrt(48.0)}}; }

DoubleNelsonModel dn_ref() {
  return DoubleNelsonModel{DoubleNelson{1.0, 2.0, 0.2, 0.5, 0.4, 0.3}};
}

double cmf_value(const MarketModelSpec& m, const Eigen::VectorXd& x, double theta) {
  const auto r = cmf(m, x, theta);
  EXPECT_TRUE(std::holds_alternative<double>(r));
  return std::get<double>(r);
}

double roll_value(const MarketModelSpec& m, const Eigen::VectorXd& x, double theta) {
  const auto r = roll_yield(m, x, theta);
  EXPECT_TRUE(std::holds_alternative<double>(r));
  return std::get<double>(r);
}

TEST(ModelValidate, RejectsBadParametersAndThinTails) {
  EXPECT_THROW(validate(MarketModelSpec{BergomiScalar{0.5, ScalarOU{1.0, 0.6}, -0.2}}),
               std::invalid_argument);
  BergomiMulti mismatched = multi_ref();
  mismatched.gamma = Eigen::Vector3d(0.5, 0.5, 0.5);
  EXPECT_THROW(validate(MarketModelSpec{mismatched}), std::invalid_argument);
  // Squared spot value 1/x is only integrable when 2 kappa xbar / sigma^2 > 1.
  EXPECT_THROW(validate(MarketModelSpec{ThreeHalves{CIR{1.0, 0.4, 1.0}}}),
               std::invalid_argument);
  EXPECT_NO_THROW(validate(MarketModelSpec{scalar_ref()}));
  EXPECT_NO_THROW(validate(MarketModelSpec{multi_ref()}));
  EXPECT_NO_THROW(validate(MarketModelSpec{th_ref()}));
  EXPECT_NO_THROW(validate(MarketModelSpec{dn_ref()}));
}

TEST(ModelBasics, NamesFactorsAndSpotValues) {
  EXPECT_FALSE(model_name(MarketModelSpec{scalar_ref()}).empty());
  EXPECT_NE(model_name(MarketModelSpec{th_ref()}), model_name(MarketModelSpec{dn_ref()}));
  EXPECT_EQ(state_dim(model_factor(MarketModelSpec{multi_ref()})), 2);

  Eigen::VectorXd x(1);
  x << 0.4;
  EXPECT_NEAR(vix(MarketModelSpec{scalar_ref()}, x), 0.2 * std::exp(0.2), 1e-15);
  Eigen::VectorXd y(1);
  y << 25.0;
  EXPECT_NEAR(vix(MarketModelSpec{th_ref()}, y), 0.2, 1e-15);
  EXPECT_THROW(vix(MarketModelSpec{th_ref()}, Eigen::VectorXd::Zero(1)), std::domain_error);
  Eigen::VectorXd z(2);
  z << 0.25, 0.18;
  EXPECT_NEAR(vix(MarketModelSpec{dn_ref()}, z), 0.25, 1e-15);

  // vix_squared is the pointwise square of the spot value.
  for (const MarketModelSpec m :
       {MarketModelSpec{scalar_ref()}, MarketModelSpec{multi_ref()}}) {
    Eigen::VectorXd s = Eigen::VectorXd::Constant(state_dim(model_factor(m)), 0.3);
    const double h = vix(m, s);
    EXPECT_NEAR(vix_squared(m)(s), h * h, 1e-15);
  }
}

TEST(CurveNormalizationBehavior, MartingaleCurveIsConditionalExpectation) {
  // Scalar: quadrature of the spot value against the exact transition law.
  const BergomiScalar p = scalar_ref();
  Eigen::VectorXd x(1);
  x << 0.4;
  const double theta = 0.25;
  const GaussianTransition tr = ou_transition(p.factor, x[0], theta);
  const double sd = std::sqrt(tr.cov(0, 0));
  const QuadratureRule rule = gauss_hermite(40);
  double expect = 0.0;
  for (int i = 0; i < rule.nodes.size(); ++i)
    expect += rule.weights[i] * p.h0 * std::exp(p.gamma * (tr.mean[0] + sd * rule.nodes[i]));
  EXPECT_NEAR(cmf_value(MarketModelSpec{p}, x, theta) / expect, 1.0, 1e-12);

  // Two-factor version with the tensorized transition law.
  const BergomiMulti m = multi_ref();
  Eigen::VectorXd x2(2);
  x2 << 0.1, -0.05;
  const GaussianTransition mt = multiou_transition(m.factor, x2, 0.2);
  const Eigen::Matrix2d L = Eigen::LLT<Eigen::Matrix2d>(mt.cov).matrixL();
  double expect2 = 0.0;
  for (int i = 0; i < rule.nodes.size(); ++i) {
    for (int j = 0; j < rule.nodes.size(); ++j) {
      const Eigen::Vector2d xv = mt.mean + L * Eigen::Vector2d(rule.nodes[i], rule.nodes[j]);
      expect2 += rule.weights[i] * rule.weights[j] * m.h0 * std::exp(m.gamma.dot(xv));
    }
  }
  EXPECT_NEAR(cmf_value(MarketModelSpec{m}, x2, 0.2) / expect2, 1.0, 1e-11);

  // The constant-front normalization pins the front value and therefore
  // breaks the conditional-expectation identity away from theta = 0.
  BergomiScalar front = scalar_ref();
  front.norm = CurveNormalization::ConstantFront;
  Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(cmf_value(MarketModelSpec{front}, origin, 0.5), front.h0, 1e-15);
  EXPECT_GT(std::abs(cmf_value(MarketModelSpec{scalar_ref()}, origin, 0.5) - front.h0), 1e-4);
  EXPECT_NEAR(cmf_value(MarketModelSpec{front}, origin, 0.0),
              cmf_value(MarketModelSpec{scalar_ref()}, origin, 0.0), 1e-15);
}

TEST(RollYield, MatchesLogCurveSlopeInMaturity) {
  const MarketModelSpec models[] = {MarketModelSpec{scalar_ref()},
                                    MarketModelSpec{multi_ref()}, MarketModelSpec{dn_ref()}};
  for (const auto& m : models) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(state_dim(model_factor(m)), 0.22);
    const double theta = 0.3;
    const double slope = fd_derivative(
        [&](double t) { return std::log(cmf_value(m, x, t)); }, theta, 1.0);
    EXPECT_NEAR(roll_value(m, x, theta), slope, 1e-7) << model_name(m);
  }
}

TEST(ThreeHalvesCurve, FrontQuantitiesOnlyAndClosedForms) {
  const MarketModelSpec m{th_ref()};
  const CIR c = th_ref().factor;
  Eigen::VectorXd x(1);
  x << 25.0;

  EXPECT_NEAR(cmf_value(m, x, 0.0), 1.0 / std::sqrt(25.0), 1e-15);
  const double front = (0.375 * c.sigma * c.sigma - 0.5 * c.kappa * c.xbar) / x[0] +
                       0.5 * c.kappa;
  EXPECT_NEAR(roll_value(m, x, 0.0), front, 1e-13);

  const auto grad = roll_yield_gradient(m, x, 0.0);
  ASSERT_TRUE(std::holds_alternative<Eigen::VectorXd>(grad));
  EXPECT_NEAR(std::get<Eigen::VectorXd>(grad)[0],
              -(0.375 * c.sigma * c.sigma - 0.5 * c.kappa * c.xbar) / (x[0] * x[0]), 1e-13);

  const auto vol = cmf_vol(m, x, 0.0);
  ASSERT_TRUE(std::holds_alternative<Eigen::VectorXd>(vol));
  EXPECT_NEAR(std::get<Eigen::VectorXd>(vol)[0], -c.sigma / (2.0 * std::sqrt(x[0])), 1e-13);

  EXPECT_TRUE(std::holds_alternative<NotAvailable>(cmf(m, x, 0.1)));
  EXPECT_TRUE(std::holds_alternative<NotAvailable>(roll_yield(m, x, 0.1)));
  EXPECT_TRUE(std::holds_alternative<NotAvailable>(cmf_vol(m, x, 0.1)));
  EXPECT_TRUE(std::holds_alternative<NotAvailable>(roll_yield_gradient(m, x, 0.1)));
  Eigen::VectorXd thetas(2);
  thetas << 0.0, 0.1;
  EXPECT_TRUE(std::holds_alternative<NotAvailable>(futures_curve(m, x, thetas)));
}

TEST(CurveDerivatives, GradientAndHessianMatchFiniteDifferences) {
  const MarketModelSpec m{scalar_ref()};
  Eigen::VectorXd x(1);
  x << 0.4;
  const double theta = 0.3;
  const auto cp = cmf_with_derivatives(m, x, theta);
  ASSERT_TRUE(std::holds_alternative<CurvePoint>(cp));
  const CurvePoint& pt = std::get<CurvePoint>(cp);
  EXPECT_NEAR(pt.h, cmf_value(m, x, theta), 1e-15);
  const double g_fd = fd_derivative(
      [&](double s) {
        Eigen::VectorXd xs(1);
        xs << s;
        return cmf_value(m, xs, theta);
      },
      x[0], 1.0);
  EXPECT_NEAR(pt.grad[0], g_fd, 1e-9);
  const double h_fd = fd_derivative(
      [&](double s) {
        Eigen::VectorXd xs(1);
        xs << s;
        const auto q = cmf_with_derivatives(m, xs, theta);
        return std::get<CurvePoint>(q).grad[0];
      },
      x[0], 1.0);
  EXPECT_NEAR(pt.hess(0, 0), h_fd, 1e-8);

  // The affine curve has state-independent gradient and vanishing curvature.
  const MarketModelSpec dn{dn_ref()};
  Eigen::VectorXd z(2);
  z << 0.25, 0.3;
  const auto dp = cmf_with_derivatives(dn, z, 0.5);
  ASSERT_TRUE(std::holds_alternative<CurvePoint>(dp));
  const CurvePoint& dpt = std::get<CurvePoint>(dp);
  EXPECT_EQ(dpt.hess.cwiseAbs().maxCoeff(), 0.0);
  for (int k = 0; k < 2; ++k) {
    const double fd = fd_derivative(
        [&](double s) {
          Eigen::VectorXd zs = z;
          zs[k] = s;
          return cmf_value(dn, zs, 0.5);
        },
        z[k], 1.0);
    EXPECT_NEAR(dpt.grad[k], fd, 1e-10);
  }
}

TEST(CurveVolatility, ClosedFormsPerModel) {
  // Exponential scalar model: maturity-decayed constant, one driver.
  const auto sv = cmf_vol(MarketModelSpec{scalar_ref()}, Eigen::VectorXd::Constant(1, 0.7), 0.4);
  ASSERT_TRUE(std::holds_alternative<Eigen::VectorXd>(sv));
  EXPECT_NEAR(std::get<Eigen::VectorXd>(sv)[0], 0.6 * 0.5 * std::exp(-0.4), 1e-13);

  // Affine two-factor curve at the front: loading only on the first driver.
  Eigen::VectorXd z(2);
  z << 0.25, 0.18;
  const auto dv = cmf_vol(MarketModelSpec{dn_ref()}, z, 0.0);
  ASSERT_TRUE(std::holds_alternative<Eigen::VectorXd>(dv));
  const Eigen::VectorXd dvol = std::get<Eigen::VectorXd>(dv);
  ASSERT_EQ(dvol.size(), 2);
  EXPECT_NEAR(dvol[0], 0.5, 1e-13);
  EXPECT_NEAR(dvol[1], 0.0, 1e-15);
}

TEST(DoubleNelsonCurve, PinnedValuesLimitsAndContinuityInMeanReversion) {
  const MarketModelSpec m{dn_ref()};
  Eigen::VectorXd x(2);
  x << 0.25, 0.3;
  EXPECT_NEAR(cmf_value(m, x, 0.5), 0.25419165483975076, 1e-14);
  EXPECT_NEAR(cmf_value(m, x, 0.0), 0.25, 1e-15);
  EXPECT_NEAR(cmf_value(m, x, 50.0), 0.2, 1e-10);

  // The curve agrees with the first conditional moment of the factor.
  const Eigen::VectorXd mom = dn_moments(dn_ref().factor, Eigen::Vector2d(0.25, 0.3), 0.5);
  EXPECT_NEAR(cmf_value(m, x, 0.5), mom[0], 1e-12);

  // Equal mean-reversion speeds sit on a removable singularity of the
  // two-speed formula; the curve must be continuous across it.
  DoubleNelsonModel eq = dn_ref();
  eq.factor.kappa2 = eq.factor.kappa1;
  DoubleNelsonModel near_eq = dn_ref();
  near_eq.factor.kappa2 = near_eq.factor.kappa1 * (1.0 + 1e-7);
  EXPECT_NEAR(cmf_value(MarketModelSpec{eq}, x, 0.5),
              cmf_value(MarketModelSpec{near_eq}, x, 0.5), 1e-6);
}

TEST(RollYieldGradient, MatchesStateFiniteDifferences) {
  struct Case {
    MarketModelSpec model;
    Eigen::VectorXd x;
    double theta;
  };
  std::vector<Case> cases;
  cases.push_back({MarketModelSpec{scalar_ref()}, Eigen::VectorXd::Constant(1, 0.4), 0.3});
  Eigen::VectorXd x2(2);
  x2 << 0.1, -0.05;
  cases.push_back({MarketModelSpec{multi_ref()}, x2, 0.2});
  Eigen::VectorXd z(2);
  z << 0.25, 0.3;
  cases.push_back({MarketModelSpec{dn_ref()}, z, 0.5});
  for (const auto& c : cases) {
    const auto g = roll_yield_gradient(c.model, c.x, c.theta);
    ASSERT_TRUE(std::holds_alternative<Eigen::VectorXd>(g)) << model_name(c.model);
    const Eigen::VectorXd grad = std::get<Eigen::VectorXd>(g);
    for (int k = 0; k < c.x.size(); ++k) {
      const double fd = fd_derivative(
          [&](double s) {
            Eigen::VectorXd xs = c.x;
            xs[k] = s;
            return roll_value(c.model, xs, c.theta);
          },
          c.x[k], 1.0);
      EXPECT_NEAR(grad[k], fd, 1e-6) << model_name(c.model) << " component " << k;
    }
  }
}

TEST(FuturesCurveTable, RowsAgreeWithPointwiseQuantities) {
  const MarketModelSpec m{scalar_ref()};
  Eigen::VectorXd x(1);
  x << 0.4;
  Eigen::VectorXd thetas(3);
  thetas << 0.0, 0.1, 0.5;
  const auto fc = futures_curve(m, x, thetas);
  ASSERT_TRUE(std::holds_alternative<FuturesCurve>(fc));
  const FuturesCurve& curve = std::get<FuturesCurve>(fc);
  ASSERT_EQ(curve.prices.size(), 3);
  ASSERT_EQ(curve.vols.rows(), 3);
  EXPECT_EQ(curve.asof_state[0], 0.4);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(curve.prices[i], cmf_value(m, x, thetas[i]), 1e-14);
    EXPECT_NEAR(curve.roll_yields[i], roll_value(m, x, thetas[i]), 1e-14);
    const auto vol = cmf_vol(m, x, thetas[i]);
    EXPECT_NEAR(curve.vols(i, 0), std::get<Eigen::VectorXd>(vol)[0], 1e-14);
  }
}

TEST(ModelEquivalence, OneFactorExponentialModelsCoincide) {
  BergomiMulti m;
  m.gamma = Eigen::VectorXd::Constant(1, 0.5);
  m.factor.K = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m.factor.S = Eigen::MatrixXd::Constant(1, 1, 0.6);
  m.h0 = 0.2;
  Eigen::VectorXd x(1);
  x << 0.3;
  for (double theta : {0.0, 0.1, 0.6}) {
    EXPECT_NEAR(cmf_value(MarketModelSpec{m}, x, theta),
                cmf_value(MarketModelSpec{scalar_ref()}, x, theta), 1e-13)
        << "theta " << theta;
  }
}

TEST(ModelSerialization, JsonRoundTripsPreserveEveryField) {
  const MarketModelSpec models[] = {MarketModelSpec{scalar_ref()},
                                    MarketModelSpec{multi_ref()},
                                    MarketModelSpec{th_ref()}, MarketModelSpec{dn_ref()}};
  Eigen::VectorXd probe2(2);
  probe2 << 0.21, 0.17;
  for (const auto& m : models) {
    const MarketModelSpec back = model_from_json(to_json(m));
    EXPECT_EQ(model_name(back), model_name(m));
    Eigen::VectorXd probe =
        state_dim(model_factor(m)) == 2 ? probe2 : Eigen::VectorXd::Constant(1, 0.21);
    if (std::holds_alternative<ThreeHalves>(m)) probe = Eigen::VectorXd::Constant(1, 21.0);
    EXPECT_EQ(vix(back, probe), vix(m, probe)) << model_name(m);
  }

  BergomiScalar front = scalar_ref();
  front.norm = CurveNormalization::ConstantFront;
  const MarketModelSpec back = model_from_json(to_json(MarketModelSpec{front}));
  Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);
  EXPECT_EQ(cmf_value(back, origin, 0.5), front.h0);

  const FactorSpec specs[] = {FactorSpec{ScalarOU{1.0, 0.6}}, FactorSpec{multi_ref().factor},
                              FactorSpec{CIR{4.0, 30.0, std::sqrt(48.0)}},
                              FactorSpec{dn_ref().factor}};
  for (const auto& s : specs) {
    const FactorSpec back2 = factor_from_json(to_json(s));
    EXPECT_EQ(scheme_name(back2), scheme_name(s));
    EXPECT_EQ((stationary_mean(back2) - stationary_mean(s)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(
        (stationary_covariance(back2) - stationary_covariance(s)).cwiseAbs().maxCoeff(), 0.0);
  }
}

}  // namespace
