#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

namespace volrec {

// Thrown when an adaptive quadrature fails to converge within its node budget.
struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Nodes z_i and weights w_i such that sum_i w_i f(z_i) approximates the
// integral of f against the rule's reference measure.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Gauss-Hermite rule against the standard normal density (weights sum to 1).
QuadratureRule gauss_hermite(int n);

// Generalized Gauss-Laguerre rule against the normalized weight
// z^alpha e^{-z} / Gamma(alpha+1) on (0, inf); requires alpha > -1
// (weights sum to 1).
QuadratureRule gauss_laguerre(int n, double alpha);

// Gauss-Legendre rule against Lebesgue measure on [a, b].
QuadratureRule gauss_legendre(int n, double a, double b);

// Adaptive Simpson integration of f over [a, b] to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth = 48);

// Central difference with one Richardson extrapolation step; scale sets the
// base step h = 1e-4 * max(scale, |x|).
double fd_derivative(const std::function<double(double)>& f, double x,
                     double scale = 1.0);

// (1 - exp(-a)) / a, accurate near a = 0.
double expm1_ratio(double a);

// SplitMix64 mixing step; bijective on 64-bit integers.
std::uint64_t splitmix64(std::uint64_t x);

// Decorrelated per-stream seed for stream `index` under master `seed`.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace volrec
