#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "volrec/numerics.hpp"

namespace {

using volrec::adaptive_simpson;
using volrec::expm1_ratio;
using volrec::fd_derivative;
using volrec::gauss_hermite;
using volrec::gauss_laguerre;
using volrec::gauss_legendre;
using volrec::QuadratureRule;

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f) {
  double acc = 0.0;
  for (int i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * f(rule.nodes[i]);
  return acc;
}

TEST(GaussHermite, MatchesStandardNormalMoments) {
  const QuadratureRule rule = gauss_hermite(5);
  ASSERT_EQ(rule.nodes.size(), 5);
  EXPECT_NEAR(integrate(rule, [](double) { return 1.0; }), 1.0, 1e-14);
  EXPECT_NEAR(integrate(rule, [](double z) { return z; }), 0.0, 1e-14);
  EXPECT_NEAR(integrate(rule, [](double z) { return z * z; }), 1.0, 1e-13);
  EXPECT_NEAR(integrate(rule, [](double z) { return z * z * z; }), 0.0, 1e-13);
  EXPECT_NEAR(integrate(rule, [](double z) { return std::pow(z, 4); }), 3.0, 1e-12);
}

TEST(GaussHermite, ExactForHighEvenMoments) {
  // n-point rule integrates polynomials up to degree 2n-1; E[z^14] = 13!! = 135135.
  const QuadratureRule rule = gauss_hermite(8);
  const double m14 = integrate(rule, [](double z) { return std::pow(z, 14); });
  EXPECT_NEAR(m14 / 135135.0, 1.0, 1e-12);
}

TEST(GaussHermite, LargeRuleStaysNormalized) {
  const QuadratureRule rule = gauss_hermite(128);
  double sum = 0.0;
  for (int i = 0; i < rule.weights.size(); ++i) {
    EXPECT_GT(rule.weights[i], 0.0);
    sum += rule.weights[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(integrate(rule, [](double z) { return z * z; }), 1.0, 1e-11);
}

TEST(GaussLaguerre, MatchesGammaMoments) {
  const double alpha = 1.5;
  const QuadratureRule rule = gauss_laguerre(8, alpha);
  // Weights normalized against Gamma(alpha+1): moments of a Gamma(alpha+1,1) density.
  EXPECT_NEAR(integrate(rule, [](double) { return 1.0; }), 1.0, 1e-13);
  EXPECT_NEAR(integrate(rule, [](double z) { return z; }), alpha + 1.0, 1e-12);
  EXPECT_NEAR(integrate(rule, [](double z) { return z * z; }), (alpha + 1.0) * (alpha + 2.0),
              1e-11);
}

TEST(GaussLaguerre, RejectsInvalidAlpha) {
  EXPECT_THROW(gauss_laguerre(8, -1.0), std::invalid_argument);
  EXPECT_THROW(gauss_laguerre(8, -2.5), std::invalid_argument);
  EXPECT_THROW(gauss_laguerre(0, 1.0), std::invalid_argument);
}

TEST(GaussLegendre, ExactOnPolynomialsAndAccurateOnSmooth) {
  const QuadratureRule rule = gauss_legendre(12, 0.0, 2.0);
  EXPECT_NEAR(integrate(rule, [](double) { return 1.0; }), 2.0, 1e-14);
  EXPECT_NEAR(integrate(rule, [](double x) { return x * x * x; }), 4.0, 1e-12);
  EXPECT_NEAR(integrate(rule, [](double x) { return std::exp(x); }), std::exp(2.0) - 1.0, 1e-12);
}

TEST(AdaptiveSimpson, HitsTightToleranceOnArctanIntegrand) {
  const double pi = adaptive_simpson([](double x) { return 4.0 / (1.0 + x * x); }, 0.0, 1.0, 1e-12);
  EXPECT_NEAR(pi, 3.14159265358979323846, 5e-12);
}

TEST(AdaptiveSimpson, HandlesReversedAndDegenerateBounds) {
  const double fwd = adaptive_simpson([](double x) { return x * x; }, 0.0, 1.0, 1e-12);
  const double rev = adaptive_simpson([](double x) { return x * x; }, 1.0, 0.0, 1e-12);
  EXPECT_NEAR(fwd, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(rev, -1.0 / 3.0, 1e-12);
  EXPECT_EQ(adaptive_simpson([](double x) { return x; }, 0.7, 0.7, 1e-12), 0.0);
}

TEST(FiniteDifference, MatchesAnalyticDerivative) {
  EXPECT_NEAR(fd_derivative([](double x) { return std::sin(x); }, 1.0), std::cos(1.0), 1e-10);
  EXPECT_NEAR(fd_derivative([](double x) { return std::exp(2.0 * x); }, 0.25),
              2.0 * std::exp(0.5), 1e-9);
  // The scale hint keeps the stencil sane for arguments near zero.
  EXPECT_NEAR(fd_derivative([](double x) { return x * x * x; }, 0.0, 1.0), 0.0, 1e-12);
}

TEST(Expm1Ratio, StableAcrossScales) {
  // expm1_ratio(a) = (1 - exp(-a)) / a, with the a -> 0 limit equal to 1.
  EXPECT_NEAR(expm1_ratio(1.0), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(expm1_ratio(1e-12), 1.0, 1e-10);
  EXPECT_EQ(expm1_ratio(0.0), 1.0);
  // Both branches of the small-argument switch agree with the series
  // 1 - a/2 + a^2/6 to machine accuracy.
  for (double a : {9.9e-9, 1.01e-8}) {
    EXPECT_NEAR(expm1_ratio(a), 1.0 - a / 2.0 + a * a / 6.0, 1e-15);
  }
}

TEST(StreamSeed, DeterministicAndDistinct) {
  const std::uint64_t base = 20240801ULL;
  EXPECT_EQ(volrec::stream_seed(base, 7), volrec::stream_seed(base, 7));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 64; ++i) seen.insert(volrec::stream_seed(base, i));
  EXPECT_EQ(seen.size(), 64u);
  EXPECT_NE(volrec::stream_seed(base, 0), volrec::stream_seed(base + 1, 0));
}

}  // namespace
