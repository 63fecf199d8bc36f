#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "volrec/eigenbasis.hpp"
#include "volrec/factors.hpp"

namespace volrec {

struct OracleEstimate {
  double value = 0.0;
  // Monte Carlo: standard error of the mean. Transition quadrature: the last
  // node-doubling change.
  double std_error = 0.0;
  int n_paths = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string method;  // "MonteCarlo" or "TransitionQuadrature"
};

struct MCConfig {
  int n_paths = 200000;
  int n_steps = 64;  // steps across [0, tau]
  std::uint64_t seed = 20240801;
};

// Monte Carlo estimate of (Phi g)(x0) = E[(1/tau) int_0^tau g(X_u) du | x0]
// with per-path trapezoidal time averaging; deterministic under fixed seed
// and independent of path scheduling.
OracleEstimate mc_phi(const FactorSpec& factor,
                      const std::function<double(const Eigen::VectorXd&)>& g,
                      const Eigen::VectorXd& x0, double tau,
                      const MCConfig& cfg = {});

// Deterministic estimate of (Phi g)(x0) for the scalar OU factor:
// Gauss-Hermite across the exact transition law inside Gauss-Legendre over
// time, node-doubled until the change falls below tol relative to
// max(1, |value|). Throws QuadratureError if the node budget is exhausted.
OracleEstimate tq_phi(const ScalarOU& factor,
                      const std::function<double(double)>& g, double x0,
                      double tau, double tol = 1e-10);

// Monte Carlo estimate of E[basis_n(z(X_t)) | X_0 = scaling^{-1}(z)] compared
// with the analytic e^{-rate_n t} basis_n(z); the transition is sampled
// exactly in a single step, so any discrepancy is purely statistical.
struct SemigroupCheck {
  OracleEstimate mc;
  double analytic = 0.0;
  double z_score = 0.0;  // (mc - analytic) / std_error
};
SemigroupCheck semigroup_check(const FactorSpec& factor,
                               const SpectralFrame& frame, BasisIndex index,
                               const Eigen::VectorXd& z, double t, int n_paths,
                               std::uint64_t seed);

}  // namespace volrec
