#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volrec/eigenbasis.hpp"
#include "volrec/factors.hpp"
#include "volrec/marketmodels.hpp"

namespace volrec {

// 30-day averaging window in years.
inline constexpr double kDefaultTau = 30.0 / 365.0;

// Projection denominator convention: Single divides by lambda_n norm_sq(n)
// (the convention every closed-form coefficient in scope satisfies); Squared
// divides by an extra norm_sq(n) and is retained only for auditability.
enum class NormConvention { Single, Squared };

struct QuadConfig {
  int nodes = 64;       // starting 1D node count
  int max_nodes = 1024;
  double tol = 1e-10;   // doubling stops when |change| <= tol * max(1, |value|)
  // Power of z moved from the integrand into the Laguerre weight (clearing
  // poles at 0 so the remaining integrand is smooth); -1 selects a default
  // that covers the in-scope 1/x singularity.
  int laguerre_shift = -1;
};

// Truncated eigen-expansion v2(x) = sum_n a_n basis_n(z(x)) in the stated
// family, together with everything needed to apply the averaging operator
// spectrally.
struct EigenSolution {
  BasisSpec basis;
  AffineScaling scaling;  // z = A x + b
  EvalFamily family = EvalFamily::Primary;
  std::vector<BasisIndex> indices;
  Eigen::VectorXd coefficients;  // a_n
  Eigen::VectorXd rates;         // decay rate alpha_n of each index
  Eigen::VectorXd eigenvalues;   // lambda_n = phi_eigenvalue(alpha_n, tau)
  double tau = kDefaultTau;
  int truncation = 0;          // highest (total) degree kept
  double tail_estimate = 0.0;  // estimated sum of a_n^2 norm_sq(n) beyond it
};

double evaluate_v2(const EigenSolution& sol, const Eigen::VectorXd& x);
// Time-averaged image of the solution, sum_n a_n lambda_n basis_n(z(x));
// exact on the truncated span because the basis diagonalizes the averaging
// operator.
double evaluate_phi_v2(const EigenSolution& sol, const Eigen::VectorXd& x);

// Closure equal to evaluate_v2(sol, .) with the per-call setup hoisted out:
// 1D ladders reuse one recurrence buffer, the 2D family is folded into a
// single monomial table. Use inside Monte Carlo or dense-grid loops.
std::function<double(const Eigen::VectorXd&)> make_v2_evaluator(
    const EigenSolution& sol);

// v2(x) = a11 x1^2 + a12 x1 x2 + a22 x2^2 + b1 x1 + b2 x2 + c.
struct PolynomialSolution {
  double a11 = 0.0, a12 = 0.0, a22 = 0.0;
  double b1 = 0.0, b2 = 0.0, c = 0.0;
  std::string target;  // "x1_squared" or "x1"
  double tau = kDefaultTau;
};
double evaluate_v2(const PolynomialSolution& sol, const Eigen::VectorXd& x);

// Which data the double-Nelson recovery matches: the squared spot value
// x1^2, or the x1 linear demonstration problem.
enum class DNTarget { SquaredVix, LinearDemo };

struct SolvabilityReport {
  double value = 0.0;      // <(2 f + |nu|^2) h^2> under the invariant law
  double scale = 0.0;      // <(2|f| + |nu|^2) h^2> (upper bound for DN)
  double tolerance = 0.0;  // relative: pass iff |value| <= tolerance * scale
  bool pass = false;
  std::string method;
  std::string model;
  int nodes = 0;
  double node_doubling_delta = 0.0;
};
SolvabilityReport check_solvability(const MarketModelSpec& model,
                                    const QuadConfig& cfg = {});

EigenSolution recover_bergomi_scalar(const BergomiScalar& model,
                                     double tau = kDefaultTau,
                                     int max_degree = 40);
EigenSolution recover_bergomi_multi(const BergomiMulti& model,
                                    double tau = kDefaultTau,
                                    int max_total_degree = 12);
EigenSolution recover_three_halves(const ThreeHalves& model,
                                   double tau = kDefaultTau,
                                   int max_degree = 40);

// Projection recovery from an arbitrary squared spot value: coefficients
// a_n = <h^2 proj_n> / (lambda_n norm_sq(n)) by node-doubled quadrature,
// where proj_n is the bi-orthogonal partner of the expansion family.
EigenSolution recover_generic(
    const FactorSpec& factor,
    const std::function<double(const Eigen::VectorXd&)>& h_squared,
    double tau, int max_degree, const QuadConfig& cfg = {},
    NormConvention convention = NormConvention::Single);

// Closed-form dispatcher for the three spectral models; throws for the
// double-Nelson model (whose recovery is recover_double_nelson).
EigenSolution recover(const MarketModelSpec& model, double tau = kDefaultTau,
                      int max_degree = -1);

// Moment-matching polynomial recovery: solves Abar^T q = e_target where Abar
// is the time-averaged flow of the closed moment system.
PolynomialSolution recover_double_nelson(const DoubleNelsonModel& model,
                                         double tau = kDefaultTau,
                                         DNTarget target = DNTarget::SquaredVix);

// Closed forms for the linear demonstration problem.
struct DNLinearClosedForm {
  double b1 = 0.0;
  double b2 = 0.0;
  double c = 0.0;
  double coupling = 0.0;  // time-averaged weight I of x2 feeding into x1
};
DNLinearClosedForm dn_linear_closed_form(const DoubleNelson& p, double tau);

struct ForwardResidual {
  double rms = 0.0;
  double max_abs = 0.0;
  int n_points = 0;
};
// Residual of the time-averaged solution against the model's squared spot
// value over the grid rows.
ForwardResidual forward_residual(const EigenSolution& sol,
                                 const MarketModelSpec& model,
                                 const Eigen::MatrixXd& states);
ForwardResidual forward_residual(const PolynomialSolution& sol,
                                 const DoubleNelsonModel& model,
                                 const Eigen::MatrixXd& states);

struct PositivityScan {
  double min_value = 0.0;
  Eigen::VectorXd argmin;
  double fraction_negative = 0.0;
  int n_points = 0;
};
PositivityScan positivity_scan(
    const std::function<double(const Eigen::VectorXd&)>& v2,
    const Eigen::MatrixXd& states);
PositivityScan positivity_scan(const EigenSolution& sol,
                               const Eigen::MatrixXd& states);
PositivityScan positivity_scan(const PolynomialSolution& sol,
                               const Eigen::MatrixXd& states);

// Grid rows covering stationary mean +- n_sd standard deviations per
// coordinate (tensorized in 2D, clipped to positive domains).
Eigen::MatrixXd default_scan_grid(const FactorSpec& spec, int per_dim = 41,
                                  double n_sd = 3.0);

}  // namespace volrec
