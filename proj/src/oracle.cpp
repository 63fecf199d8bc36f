#include "volrec/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "volrec/numerics.hpp"

namespace volrec {

OracleEstimate mc_phi(const FactorSpec& factor,
                      const std::function<double(const Eigen::VectorXd&)>& g,
                      const Eigen::VectorXd& x0, double tau,
                      const MCConfig& cfg) {
  if (tau <= 0.0) throw std::invalid_argument("mc_phi: tau must be positive");
  if (cfg.n_paths < 2 || cfg.n_steps < 1)
    throw std::invalid_argument("mc_phi: needs n_paths >= 2, n_steps >= 1");
  const double dt = tau / cfg.n_steps;
  auto stepper = make_stepper(factor, dt);
  if (stepper->dim() != x0.size())
    throw std::invalid_argument("mc_phi: x0 has wrong dimension");

  const double g0 = g(x0);
  double mean = 0.0, m2 = 0.0;
  Eigen::VectorXd x(x0.size());
  for (int i = 0; i < cfg.n_paths; ++i) {
    std::mt19937_64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    x = x0;
    double acc = 0.5 * g0;
    for (int k = 1; k < cfg.n_steps; ++k) {
      stepper->step(x, rng);
      acc += g(x);
    }
    stepper->step(x, rng);
    acc += 0.5 * g(x);
    const double avg = acc / cfg.n_steps;  // trapezoid * dt / tau
    const double delta = avg - mean;
    mean += delta / (i + 1);
    m2 += delta * (avg - mean);
  }
  OracleEstimate est;
  est.value = mean;
  est.std_error = std::sqrt(m2 / (cfg.n_paths - 1.0) / cfg.n_paths);
  est.n_paths = cfg.n_paths;
  est.dt = dt;
  est.seed = cfg.seed;
  est.method = "MonteCarlo";
  return est;
}

OracleEstimate tq_phi(const ScalarOU& factor,
                      const std::function<double(double)>& g, double x0,
                      double tau, double tol) {
  if (tau <= 0.0) throw std::invalid_argument("tq_phi: tau must be positive");
  validate(FactorSpec{factor});
  auto level_value = [&](int n_space, int n_time) {
    const QuadratureRule tq = gauss_legendre(n_time, 0.0, tau);
    const QuadratureRule zq = gauss_hermite(n_space);
    double acc = 0.0;
    for (int it = 0; it < n_time; ++it) {
      const GaussianTransition tr = ou_transition(factor, x0, tq.nodes[it]);
      const double m = tr.mean[0], s = std::sqrt(tr.cov(0, 0));
      double inner = 0.0;
      for (int iz = 0; iz < n_space; ++iz)
        inner += zq.weights[iz] * g(m + s * zq.nodes[iz]);
      acc += tq.weights[it] * inner;
    }
    return acc / tau;
  };

  int n_space = 32, n_time = 16;
  double value = level_value(n_space, n_time);
  double delta = std::numeric_limits<double>::infinity();
  while (n_space < 1024) {
    n_space *= 2;
    n_time *= 2;
    const double next = level_value(n_space, n_time);
    delta = std::abs(next - value);
    value = next;
    if (delta <= tol * std::max(1.0, std::abs(value))) break;
  }
  if (!(delta <= tol * std::max(1.0, std::abs(value))))
    throw QuadratureError("tq_phi: node doubling did not converge");
  OracleEstimate est;
  est.value = value;
  est.std_error = delta;
  est.n_paths = 0;
  est.dt = 0.0;
  est.seed = 0;
  est.method = "TransitionQuadrature";
  return est;
}

SemigroupCheck semigroup_check(const FactorSpec& factor,
                               const SpectralFrame& frame, BasisIndex index,
                               const Eigen::VectorXd& z, double t, int n_paths,
                               std::uint64_t seed) {
  if (t <= 0.0)
    throw std::invalid_argument("semigroup_check: t must be positive");
  if (n_paths < 2)
    throw std::invalid_argument("semigroup_check: needs n_paths >= 2");
  if (basis_dim(frame.basis) != state_dim(factor))
    throw std::invalid_argument(
        "semigroup_check: basis and factor dimensions differ");
  auto eval = [&](const Eigen::VectorXd& zz) {
    return frame.solution_family == EvalFamily::Dual
               ? basis_dual_eval(frame.basis, index, zz)
               : basis_eval(frame.basis, index, zz);
  };
  const Eigen::VectorXd x0 = frame.scaling.invert(z);
  auto stepper = make_stepper(factor, t);  // exact one-step transition
  double mean = 0.0, m2 = 0.0;
  Eigen::VectorXd x(x0.size());
  for (int i = 0; i < n_paths; ++i) {
    std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
    x = x0;
    stepper->step(x, rng);
    const double v = eval(frame.scaling.apply(x));
    const double delta = v - mean;
    mean += delta / (i + 1);
    m2 += delta * (v - mean);
  }
  SemigroupCheck out;
  out.mc.value = mean;
  out.mc.std_error = std::sqrt(m2 / (n_paths - 1.0) / n_paths);
  out.mc.n_paths = n_paths;
  out.mc.dt = t;
  out.mc.seed = seed;
  out.mc.method = "MonteCarlo";
  out.analytic = std::exp(-frame.rate(index) * t) * eval(z);
  out.z_score = (out.mc.value - out.analytic) /
                (out.mc.std_error > 0.0 ? out.mc.std_error : 1.0);
  return out;
}

}  // namespace volrec
