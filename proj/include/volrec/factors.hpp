#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace volrec {

// dX = -kappa X dt + sigma dW.
struct ScalarOU {
  double kappa = 1.0;
  double sigma = 1.0;
};

// dX = -K X dt + S dW, X in R^d, W in R^m; every eigenvalue of K must have
// positive real part.
struct MultiOU {
  Eigen::MatrixXd K;
  Eigen::MatrixXd S;
};

// dX = kappa (xbar - X) dt + sigma sqrt(X) dW.
struct CIR {
  double kappa = 1.0;
  double xbar = 1.0;
  double sigma = 1.0;
};

// dX1 = kappa1 (X2 - X1) dt + sigma1 X1 dW1
// dX2 = kappa2 (xbar - X2) dt + sigma2 X2 dW2,  d<W1,W2> = rho dt.
struct DoubleNelson {
  double kappa1 = 1.0;
  double kappa2 = 1.0;
  double xbar = 1.0;
  double sigma1 = 0.5;
  double sigma2 = 0.5;
  double rho = 0.0;
};

using FactorSpec = std::variant<ScalarOU, MultiOU, CIR, DoubleNelson>;

// Throws std::invalid_argument when parameters are outside the admissible
// region (positivity, stability, |rho| < 1, Feller-type conditions where the
// stationary moments used downstream require them).
void validate(const FactorSpec& spec);

int state_dim(const FactorSpec& spec);
std::string scheme_name(const FactorSpec& spec);

Eigen::VectorXd stationary_mean(const FactorSpec& spec);

// Centered stationary covariance. For MultiOU this solves the Lyapunov
// equation K X + X K^T = S S^T; for DoubleNelson it is assembled from the
// stationary second moments.
Eigen::MatrixXd stationary_covariance(const FactorSpec& spec);

// Solves K X + X K^T = Q for symmetric X via Kronecker vectorization.
Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& K,
                               const Eigen::MatrixXd& Q);

// Drift mu(x) and diffusion matrix sigma(x) of dX = mu dt + sigma dW.
Eigen::VectorXd factor_drift(const FactorSpec& spec, const Eigen::VectorXd& x);
Eigen::MatrixXd factor_diffusion(const FactorSpec& spec,
                                 const Eigen::VectorXd& x);

// z = A x + b.
struct AffineScaling {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return A * x + b; }
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const {
    return A.fullPivLu().solve(z - b);
  }
};

AffineScaling identity_scaling(int dim);

struct DensityFunctions {
  AffineScaling scaling;  // coordinates in which pdf_scaled is expressed
  std::function<double(const Eigen::VectorXd&)> pdf_raw;     // density of X
  std::function<double(const Eigen::VectorXd&)> pdf_scaled;  // density of z(X)
};
struct NoClosedForm {
  std::string reason;
};

std::variant<DensityFunctions, NoClosedForm> invariant_density(
    const FactorSpec& spec);

// Exact conditional laws.
struct GaussianTransition {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
GaussianTransition ou_transition(const ScalarOU& p, double x0, double t);
GaussianTransition multiou_transition(const MultiOU& p,
                                      const Eigen::VectorXd& x0, double t);

// X_t | X_0 = x0 is c times a noncentral chi-square with df degrees of
// freedom and noncentrality ncp.
struct CIRTransition {
  double c = 0.0;
  double df = 0.0;
  double ncp = 0.0;
};
CIRTransition cir_transition(const CIR& p, double x0, double t);

// Conditional moments (E X1, E X2, E X1^2, E X1 X2, E X2^2) at horizon t.
Eigen::VectorXd dn_moments(const DoubleNelson& p, const Eigen::Vector2d& x0,
                           double t);
// Generator of the closed linear system on (u1, u2, u11, u12, u22, 1).
Eigen::Matrix<double, 6, 6> dn_moment_matrix(const DoubleNelson& p);
// (1/tau) \int_0^tau exp(M s) ds for the moment-system generator M.
Eigen::Matrix<double, 6, 6> dn_moment_time_average(const DoubleNelson& p,
                                                   double tau);
// Stationary (E X1^2, E X1 X2, E X2^2); requires 2 kappa_i > sigma_i^2 and
// kappa1 + kappa2 > rho sigma1 sigma2.
Eigen::Vector3d dn_invariant_second_moments(const DoubleNelson& p);

// One-step transition sampler; exact for ScalarOU / MultiOU / CIR, a
// positivity-preserving log-Euler step with trapezoidal source terms for
// DoubleNelson.
class PathStepper {
 public:
  virtual ~PathStepper() = default;
  virtual int dim() const = 0;
  virtual void step(Eigen::VectorXd& state, std::mt19937_64& rng) const = 0;
};

std::unique_ptr<PathStepper> make_stepper(const FactorSpec& spec, double dt);

struct PathEnsemble {
  Eigen::VectorXd times;               // n_steps + 1 entries, times[k] = k dt
  std::vector<Eigen::MatrixXd> paths;  // one (n_steps+1) x dim matrix per path
  std::uint64_t seed = 0;
  std::string scheme;
};

// Simulates n_paths independent paths from x0; path i uses its own generator
// seeded with stream_seed(seed, i), so the ensemble is independent of
// scheduling and any subset of paths is reproducible.
PathEnsemble simulate(const FactorSpec& spec, const Eigen::VectorXd& x0,
                      double dt, int n_steps, int n_paths, std::uint64_t seed);

}  // namespace volrec
