#include <gtest/gtest.h>

#include <cmath>

#include "volrec/inverse.hpp"
#include "volrec/numerics.hpp"
#include "volrec/oracle.hpp"
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

// Exact time average of E[X_u^2 | x0] for the scalar mean-reverting factor.
double ou_phi_square(const ScalarOU& p, double x0, double tau) {
  const double lam2 = phi_eigenvalue(2.0 * p.kappa, tau);
  const double vstat = p.sigma * p.sigma / (2.0 * p.kappa);
  return x0 * x0 * lam2 + vstat * (1.0 - lam2);
}

TEST(McPhi, DeterministicUnderFixedSeed) {
  const FactorSpec factor{ScalarOU{1.0, 0.6}};
  auto g = [](const Eigen::VectorXd& x) { return x[0] * x[0]; };
  MCConfig cfg;
  cfg.n_paths = 2000;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.5);
  const OracleEstimate a = mc_phi(factor, g, x0, kDefaultTau, cfg);
  const OracleEstimate b = mc_phi(factor, g, x0, kDefaultTau, cfg);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.method, "MonteCarlo");
  EXPECT_EQ(a.n_paths, 2000);
  cfg.seed += 1;
  const OracleEstimate c = mc_phi(factor, g, x0, kDefaultTau, cfg);
  EXPECT_NE(c.value, a.value);
}

TEST(TransitionQuadrature, ReproducesExactTimeAveragedMoments) {
  const ScalarOU p{1.0, 0.6};
  const double x0 = 0.5, tau = kDefaultTau;
  const OracleEstimate lin = tq_phi(p, [](double x) { return x; }, x0, tau);
  EXPECT_EQ(lin.method, "TransitionQuadrature");
  EXPECT_NEAR(lin.value, x0 * phi_eigenvalue(p.kappa, tau), 1e-11);

  const OracleEstimate sq = tq_phi(p, [](double x) { return x * x; }, x0, tau);
  EXPECT_NEAR(sq.value, ou_phi_square(p, x0, tau), 1e-10);
}

TEST(TransitionQuadrature, AgreesWithSpectralImageOfTheRecoveredSolution) {
  const BergomiScalar model = scalar_ref();
  const EigenSolution sol = recover_bergomi_scalar(model, kDefaultTau, 40);
  auto v2 = [&sol](double x) {
    return evaluate_v2(sol, Eigen::VectorXd::Constant(1, x));
  };
  for (double x0 : {-0.8, 0.0, 0.5}) {
    const OracleEstimate est = tq_phi(model.factor, v2, x0, kDefaultTau);
    const double h2 = std::pow(0.2 * std::exp(0.5 * x0), 2);
    EXPECT_NEAR(est.value, h2, 1e-9) << "x0 " << x0;
    EXPECT_NEAR(est.value,
                evaluate_phi_v2(sol, Eigen::VectorXd::Constant(1, x0)), 1e-9)
        << "x0 " << x0;
  }
}

TEST(McPhi, RecoveredSolutionsAverageBackToTheCurveWithinFourSigma) {
  struct Case {
    std::string name;
    FactorSpec factor;
    std::function<double(const Eigen::VectorXd&)> v2;
    Eigen::VectorXd x0;
    double target;
  };
  std::vector<Case> cases;

  {
    const BergomiScalar m = scalar_ref();
    const EigenSolution sol = recover_bergomi_scalar(m);
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.5);
    cases.push_back({"scalar", FactorSpec{m.factor},
                     [sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); }, x0,
                     std::pow(0.2 * std::exp(0.25), 2)});
  }
  {
    const BergomiMulti m = multi_ref();
    const EigenSolution sol = recover_bergomi_multi(m, kDefaultTau, 8);
    Eigen::VectorXd x0(2);
    x0 << 0.2, -0.1;
    cases.push_back({"multi", FactorSpec{m.factor},
                     [sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); }, x0,
                     std::pow(0.2 * std::exp(0.5 * 0.1), 2)});
  }
  {
    const ThreeHalves m = th_ref();
    const EigenSolution sol = recover_three_halves(m, kDefaultTau, 30);
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 25.0);
    cases.push_back({"three_halves", FactorSpec{m.factor},
                     [sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); }, x0,
                     1.0 / 25.0});
  }
  {
    const DoubleNelsonModel m = dn_ref();
    const PolynomialSolution sol = recover_double_nelson(m);
    Eigen::VectorXd x0(2);
    x0 << 0.25, 0.18;
    cases.push_back({"double_nelson", FactorSpec{m.factor},
                     [sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); }, x0,
                     0.0625});
  }

  MCConfig cfg;
  cfg.n_paths = 20000;
  for (const auto& c : cases) {
    const OracleEstimate est = mc_phi(c.factor, c.v2, c.x0, kDefaultTau, cfg);
    EXPECT_NEAR(est.value, c.target, 4.0 * est.std_error) << c.name;
    EXPECT_GT(est.std_error, 0.0) << c.name;
  }
}

TEST(SemigroupCheck, EigenfunctionsDecayAtTheirLadderRate) {
  {
    const FactorSpec factor{ScalarOU{1.0, 0.6}};
    const SpectralFrame frame = make_frame(factor, 10);
    Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.8);
    const SemigroupCheck chk = semigroup_check(factor, frame, BasisIndex{3, 0}, z, 0.25,
                                               40000, 20240801ULL);
    const double he3 = 0.8 * 0.8 * 0.8 - 3.0 * 0.8;
    EXPECT_NEAR(chk.analytic, std::exp(-3.0 * 0.25) * he3, 1e-14);
    EXPECT_LT(std::abs(chk.z_score), 4.5);
  }
  {
    const FactorSpec factor{CIR{4.0, 30.0, std::sqrt(48.0)}};
    const SpectralFrame frame = make_frame(factor, 10);
    Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 5.0);
    const SemigroupCheck chk =
        semigroup_check(factor, frame, BasisIndex{2, 0}, z, 0.2, 40000, 20240801ULL);
    EXPECT_LT(std::abs(chk.z_score), 4.5);
    EXPECT_NEAR(chk.analytic,
                std::exp(-8.0 * 0.2) * basis_eval(frame.basis, BasisIndex{2, 0}, z), 1e-14);
  }
  {
    MultiOU p;
    p.K = Eigen::Vector2d(1.0, 10.0).asDiagonal();
    p.S.resize(2, 2);
    p.S << 0.6, 0.0, 0.32, 0.7332121111929344;
    const FactorSpec factor{p};
    const SpectralFrame frame = make_frame(factor, 8);
    Eigen::VectorXd z(2);
    z << 0.3, -0.1;
    const SemigroupCheck chk =
        semigroup_check(factor, frame, BasisIndex{1, 1}, z, 0.15, 40000, 20240801ULL);
    EXPECT_LT(std::abs(chk.z_score), 4.5);
    // The dual family carries the decay; rate adds across coordinates.
    EXPECT_NEAR(chk.analytic,
                std::exp(-11.0 * 0.15) * basis_dual_eval(frame.basis, BasisIndex{1, 1}, z),
                1e-14);
  }
}

TEST(McPhi, ZScoresAgainstExactAnswerBehaveLikeStandardNormals) {
  const ScalarOU p{1.0, 0.6};
  const FactorSpec factor{p};
  auto g = [](const Eigen::VectorXd& x) { return x[0] * x[0]; };
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.4);
  const double exact = ou_phi_square(p, 0.4, kDefaultTau);

  const int n_seeds = 50;
  double sum = 0.0, sumsq = 0.0, worst = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    MCConfig cfg;
    cfg.n_paths = 4000;
    cfg.seed = 1000 + static_cast<std::uint64_t>(s);
    const OracleEstimate est = mc_phi(factor, g, x0, kDefaultTau, cfg);
    const double z = (est.value - exact) / est.std_error;
    sum += z;
    sumsq += z * z;
    worst = std::max(worst, std::abs(z));
  }
  const double mean = sum / n_seeds;
  const double sd = std::sqrt(sumsq / n_seeds - mean * mean);
  EXPECT_LT(std::abs(mean), 0.6);
  EXPECT_GT(sd, 0.7);
  EXPECT_LT(sd, 1.3);
  EXPECT_LT(worst, 4.5);
}

TEST(McPhi, TimeStepRefinementLeavesTheEstimateStatisticallyUnchanged) {
  const FactorSpec factor{dn_ref().factor};
  auto g = [](const Eigen::VectorXd& x) { return x[0] * x[0]; };
  Eigen::VectorXd x0(2);
  x0 << 0.25, 0.18;
  MCConfig coarse;
  coarse.n_paths = 20000;
  coarse.n_steps = 64;
  MCConfig fine = coarse;
  fine.n_steps = 128;
  const OracleEstimate a = mc_phi(factor, g, x0, kDefaultTau, coarse);
  const OracleEstimate b = mc_phi(factor, g, x0, kDefaultTau, fine);
  const double combined = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
  EXPECT_LT(std::abs(a.value - b.value), 3.0 * combined);
  EXPECT_NEAR(a.dt, kDefaultTau / 64.0, 1e-18);
}

TEST(OracleSerialization, EstimateFieldsSurviveJson) {
  const ScalarOU p{1.0, 0.6};
  const OracleEstimate est = tq_phi(p, [](double x) { return x; }, 0.3, kDefaultTau);
  const nlohmann::json j = to_json(est);
  EXPECT_DOUBLE_EQ(j.at("value").get<double>(), est.value);
  EXPECT_EQ(j.at("method").get<std::string>(), "TransitionQuadrature");
  EXPECT_EQ(j.at("n_paths").get<int>(), est.n_paths);
}

}  // namespace
