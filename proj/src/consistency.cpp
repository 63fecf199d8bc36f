#include "volrec/consistency.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "volrec/numerics.hpp"

namespace volrec {

ConsistencyReport check_consistency(const MarketModelSpec& model,
                                    const FactorSpec& factor,
                                    const Eigen::MatrixXd& grid,
                                    const std::vector<double>& thetas,
                                    double tol) {
  validate(model);
  validate(factor);
  if (grid.rows() == 0 || thetas.empty())
    throw std::invalid_argument("check_consistency: empty grid or tenor list");
  if (grid.cols() != state_dim(factor))
    throw std::invalid_argument(
        "check_consistency: grid width must match the factor dimension");

  ConsistencyReport rep;
  rep.states = grid;
  rep.thetas = thetas;
  const int nx = static_cast<int>(grid.rows());
  const int nt = static_cast<int>(thetas.size());
  rep.drift_residual.resize(nx, nt);
  rep.diffusion_residual.resize(nx, nt);
  rep.tolerance = tol;

  double ss = 0.0;
  for (int j = 0; j < nt; ++j) {
    const double theta = thetas[j];
    for (int i = 0; i < nx; ++i) {
      const Eigen::VectorXd x = grid.row(i).transpose();
      auto cpv = cmf_with_derivatives(model, x, theta);
      if (const auto* na = std::get_if<NotAvailable>(&cpv))
        throw std::invalid_argument("check_consistency: " + na->reason);
      const CurvePoint& cp = std::get<CurvePoint>(cpv);
      const double f = std::get<double>(roll_yield(model, x, theta));
      const Eigen::VectorXd nu =
          std::get<Eigen::VectorXd>(cmf_vol(model, x, theta));

      const Eigen::VectorXd mu = factor_drift(factor, x);
      const Eigen::MatrixXd sig = factor_diffusion(factor, x);
      const double Lh = mu.dot(cp.grad) +
                        0.5 * (sig * sig.transpose() * cp.hess).trace();
      const double dr = std::abs(Lh - f * cp.h);
      const double dfr = (sig.transpose() * cp.grad - nu * cp.h).norm();
      rep.drift_residual(i, j) = dr;
      rep.diffusion_residual(i, j) = dfr;
      rep.scale = std::max(rep.scale, std::abs(cp.h));
      rep.max_residual = std::max({rep.max_residual, dr, dfr});
      ss += dr * dr + dfr * dfr;
    }
  }
  rep.rms_residual = std::sqrt(ss / (2.0 * nx * nt));
  rep.pass = rep.max_residual <= tol * rep.scale;
  return rep;
}

ScalarCurveFamily scalar_constant_nu(std::function<double(double)> mu,
                                     std::function<double(double)> sigma,
                                     std::function<double(double)> nu_theta,
                                     double x0, double h0) {
  if (!(h0 > 0.0))
    throw std::invalid_argument("scalar_constant_nu: h0 must be positive");
  auto inv_sigma = [sigma](double y) {
    const double s = sigma(y);
    if (!(s > 0.0))
      throw std::domain_error(
          "scalar_constant_nu: sigma vanishes on the integration interval");
    return 1.0 / s;
  };
  ScalarCurveFamily fam;
  fam.h = [inv_sigma, nu_theta, x0, h0](double x, double theta) {
    const double integral =
        x == x0 ? 0.0 : adaptive_simpson(inv_sigma, x0, x, 1e-12);
    return h0 * std::exp(nu_theta(theta) * integral);
  };
  fam.f = [mu, sigma, nu_theta](double x, double theta) {
    const double s = sigma(x);
    if (!(s > 0.0))
      throw std::domain_error("scalar_constant_nu: sigma vanishes at x");
    const double nu = nu_theta(theta);
    const double ds = fd_derivative(sigma, x);
    return nu * (mu(x) + 0.5 * (nu - ds) * s) / s;
  };
  return fam;
}

double nu_family_value(const NuFamily& family, double theta) {
  if (family.name == "exp_decay")
    return family.gamma * std::exp(-family.kappa * theta);
  if (family.name == "algebraic_decay") return family.gamma / (1.0 + theta);
  if (family.name == "zero") return 0.0;
  throw std::invalid_argument("nu_family_value: unknown family " +
                              family.name);
}

namespace {

// One probe cell: fixed tenor and history window. Simulates M truncated
// histories of the driving noise, forms the factor state X and the
// stationary-representation roll yield Y from the same increments, and
// measures how much of Y - f_candidate(X) survives projection onto (1, X).
ProbeEvidence probe_cell(const NuFamily& family, const ScalarOU& p,
                         double theta, double window, double dt, int M,
                         std::uint64_t base_seed) {
  const int n = std::max(2, static_cast<int>(std::lround(window / dt)));
  auto g = [&family](double t) { return nu_family_value(family, t); };

  const double sdt = std::sqrt(dt);
  Eigen::VectorXd wX(n), wY(n);
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) * dt;  // age of the increment
    wX[i] = p.sigma * std::exp(-p.kappa * u) * sdt;
    wY[i] = fd_derivative(g, theta + u) * sdt;
  }
  const double g0 = g(theta);
  const double gw = g(theta + window);
  const double y_det = 0.5 * (g0 * g0 - gw * gw);

  Eigen::VectorXd X(M), D(M), Y(M);
  for (int h = 0; h < M; ++h) {
    std::mt19937_64 rng(stream_seed(base_seed, static_cast<std::uint64_t>(h)));
    std::normal_distribution<double> nd;
    double xs = 0.0, ys = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = nd(rng);
      xs += wX[i] * z;
      ys += wY[i] * z;
    }
    X[h] = xs;
    Y[h] = y_det + ys;
    const double f_cand = g0 * (-p.kappa * xs + 0.5 * p.sigma * g0) / p.sigma;
    D[h] = Y[h] - f_cand;
  }

  const double mx = X.mean(), md = D.mean();
  const double varx = (X.array() - mx).square().sum() / M;
  const double covxd = ((X.array() - mx) * (D.array() - md)).sum() / M;
  const double b1 = varx > 0.0 ? covxd / varx : 0.0;
  const double b0 = md - b1 * mx;
  const Eigen::ArrayXd resid = D.array() - b0 - b1 * X.array();
  const double sd = std::sqrt(resid.square().sum() / (M - 2));

  ProbeEvidence e;
  e.theta = theta;
  e.window = window;
  e.dispersion = sd;
  e.scale = std::sqrt(Y.array().square().mean());
  e.threshold =
      5.0 * std::max(sd / std::sqrt(2.0 * M), 1e-8 * e.scale);
  e.inconsistent = sd > e.threshold;
  return e;
}

}  // namespace

ProbeReport markovianity_probe(const NuFamily& family, const ScalarOU& factor,
                               const std::vector<double>& thetas,
                               double window, double dt, int n_histories,
                               std::uint64_t seed) {
  validate(FactorSpec{factor});
  if (thetas.empty() || window <= 0.0 || dt <= 0.0 || n_histories < 16)
    throw std::invalid_argument("markovianity_probe: bad probe request");
  nu_family_value(family, 0.0);  // reject unknown family names up front

  ProbeReport rep;
  rep.family = family.name;
  rep.n_histories = n_histories;
  rep.seed = seed;
  std::uint64_t cell = 0;
  for (double theta : thetas) {
    for (double w : {window, 0.5 * window}) {
      const std::uint64_t base = stream_seed(seed, 1000003ULL * cell + 17ULL);
      ++cell;
      rep.evidence.push_back(probe_cell(family, factor, theta, w, dt,
                                        n_histories, base));
      if (rep.evidence.back().inconsistent) rep.consistent = false;
    }
  }
  return rep;
}

HJMQuantities hjm_quantities(const MarketModelSpec& model,
                             const FactorSpec& factor,
                             const Eigen::VectorXd& x, double t, double T) {
  validate(model);
  validate(factor);
  if (T < t)
    throw std::invalid_argument("hjm_quantities: maturity precedes t");
  const double theta = T - t;

  auto fy = roll_yield(model, x, theta);
  if (const auto* na = std::get_if<NotAvailable>(&fy))
    throw std::invalid_argument("hjm_quantities: " + na->reason);
  auto gv = roll_yield_gradient(model, x, theta);
  if (const auto* na = std::get_if<NotAvailable>(&gv))
    throw std::invalid_argument("hjm_quantities: " + na->reason);
  const Eigen::VectorXd grad_f = std::get<Eigen::VectorXd>(gv);
  const Eigen::MatrixXd sig = factor_diffusion(factor, x);

  HJMQuantities out;
  out.forward_rate = std::get<double>(fy);
  out.beta = sig.transpose() * grad_f;

  const Eigen::VectorXd nu_spot =
      std::get<Eigen::VectorXd>(cmf_vol(model, x, 0.0));
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(grad_f.size());
  if (theta > 0.0) {
    for (int k = 0; k < integral.size(); ++k) {
      integral[k] = adaptive_simpson(
          [&](double s) {
            return std::get<Eigen::VectorXd>(
                roll_yield_gradient(model, x, s))[k];
          },
          0.0, theta, 1e-11);
    }
  }
  out.nu = nu_spot + sig.transpose() * integral;
  out.alpha = -out.nu.dot(out.beta);
  return out;
}

}  // namespace volrec
