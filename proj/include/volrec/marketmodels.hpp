#pragma once

#include <functional>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "volrec/factors.hpp"

namespace volrec {

// Normalization of the time-zero futures curve theta -> h_theta(0) for the
// exponential models. VarianceCorrected makes h_theta(x) the exact
// conditional expectation of the spot value at horizon theta (the martingale
// curve); ConstantFront pins h_theta(0) = h0 for every theta, which is a
// deliberately mis-specified curve that the drift consistency check should
// reject.
enum class CurveNormalization { VarianceCorrected, ConstantFront };

// vix(x) = h0 exp(gamma x), factor OU.
struct BergomiScalar {
  double gamma = 0.5;
  ScalarOU factor;
  double h0 = 0.2;
  CurveNormalization norm = CurveNormalization::VarianceCorrected;
};

// vix(x) = h0 exp(gamma . x), factor multi-OU.
struct BergomiMulti {
  Eigen::VectorXd gamma;
  MultiOU factor;
  double h0 = 0.2;
  CurveNormalization norm = CurveNormalization::VarianceCorrected;
};

// vix(x) = x^{-1/2}, factor CIR (3/2-type spot variance 1/x).
struct ThreeHalves {
  CIR factor;
};

// vix(x) = x1; the curve is the affine conditional expectation of X1.
struct DoubleNelsonModel {
  DoubleNelson factor;
};

using MarketModelSpec =
    std::variant<BergomiScalar, BergomiMulti, ThreeHalves, DoubleNelsonModel>;

void validate(const MarketModelSpec& model);
FactorSpec model_factor(const MarketModelSpec& model);
std::string model_name(const MarketModelSpec& model);

// Returned when a quantity has no closed form at the requested horizon
// (e.g. the 3/2 curve away from theta = 0).
struct NotAvailable {
  std::string reason;
};

// Spot value h(x) = h_0(x).
double vix(const MarketModelSpec& model, const Eigen::VectorXd& x);

// Squared spot value as a function object (the inverse problem's data).
std::function<double(const Eigen::VectorXd&)> vix_squared(
    const MarketModelSpec& model);

// Constant-maturity value h_theta(x).
std::variant<double, NotAvailable> cmf(const MarketModelSpec& model,
                                       const Eigen::VectorXd& x,
                                       double theta);

// h_theta with x-gradient and x-Hessian, for generator-based checks.
struct CurvePoint {
  double h = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};
std::variant<CurvePoint, NotAvailable> cmf_with_derivatives(
    const MarketModelSpec& model, const Eigen::VectorXd& x, double theta);

// Roll yield f_theta(x) = d/dtheta log h_theta(x).
std::variant<double, NotAvailable> roll_yield(const MarketModelSpec& model,
                                              const Eigen::VectorXd& x,
                                              double theta);

// Proportional curve volatility nu_theta(x) = sigma(x)^T grad h / h, one
// component per driving Brownian motion.
std::variant<Eigen::VectorXd, NotAvailable> cmf_vol(
    const MarketModelSpec& model, const Eigen::VectorXd& x, double theta);

// State gradient of the roll yield, closed form per model.
std::variant<Eigen::VectorXd, NotAvailable> roll_yield_gradient(
    const MarketModelSpec& model, const Eigen::VectorXd& x, double theta);

// Futures curve at state x: price, roll yield, and volatility row per
// requested horizon.
struct FuturesCurve {
  Eigen::VectorXd asof_state;
  Eigen::VectorXd thetas;
  Eigen::VectorXd prices;
  Eigen::VectorXd roll_yields;
  Eigen::MatrixXd vols;  // one row per horizon
};
std::variant<FuturesCurve, NotAvailable> futures_curve(
    const MarketModelSpec& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& thetas);

}  // namespace volrec
