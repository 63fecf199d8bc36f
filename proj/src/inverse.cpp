#include "volrec/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "volrec/numerics.hpp"

namespace volrec {

namespace {

// Relative floor below which trailing coefficients are dropped: an index (1D)
// or whole total-degree shell (2D) whose damped squared-norm weight
// a_n^2 norm_sq(n) lambda_n^2 falls under kTruncTol of the running sum is the
// last one kept.
constexpr double kTruncTol = 1e-14;

struct Expansion {
  std::vector<BasisIndex> indices;
  std::vector<double> coefficients;
  std::vector<double> rates;
  std::vector<double> eigenvalues;
  std::vector<double> norms;
};

// Keeps entries through the first index (1D) / shell (2D) falling below the
// adaptive floor.
void truncate_adaptive(Expansion& e, bool by_shells) {
  const size_t n = e.indices.size();
  std::vector<double> weight(n);
  for (size_t i = 0; i < n; ++i) {
    const double w = e.coefficients[i] * e.coefficients[i] * e.norms[i] *
                     e.eigenvalues[i] * e.eigenvalues[i];
    weight[i] = w;
  }
  size_t keep = n;
  if (!by_shells) {
    double running = 0.0;
    for (size_t i = 0; i < n; ++i) {
      running += weight[i];
      if (i > 0 && weight[i] < kTruncTol * running) {
        keep = i + 1;  // inclusive stop
        break;
      }
    }
  } else {
    double running = 0.0;
    size_t i = 0;
    while (i < n) {
      const int deg = e.indices[i].n1 + e.indices[i].n2;
      double shell = 0.0;
      size_t j = i;
      while (j < n && e.indices[j].n1 + e.indices[j].n2 == deg)
        shell += weight[j++];
      running += shell;
      if (deg > 0 && shell < kTruncTol * running) {
        keep = j;  // inclusive stop after this shell
        break;
      }
      i = j;
    }
  }
  e.indices.resize(keep);
  e.coefficients.resize(keep);
  e.rates.resize(keep);
  e.eigenvalues.resize(keep);
  e.norms.resize(keep);
}

EigenSolution assemble(const BasisSpec& basis, const AffineScaling& scaling,
                       EvalFamily family, Expansion e, double tau,
                       double tail_estimate) {
  EigenSolution sol;
  sol.basis = basis;
  sol.scaling = scaling;
  sol.family = family;
  sol.indices = e.indices;
  const int n = static_cast<int>(e.indices.size());
  sol.coefficients.resize(n);
  sol.rates.resize(n);
  sol.eigenvalues.resize(n);
  int trunc = 0;
  for (int i = 0; i < n; ++i) {
    sol.coefficients[i] = e.coefficients[i];
    sol.rates[i] = e.rates[i];
    sol.eigenvalues[i] = e.eigenvalues[i];
    trunc = std::max(trunc, e.indices[i].n1 + e.indices[i].n2);
  }
  sol.tau = tau;
  sol.truncation = trunc;
  sol.tail_estimate = tail_estimate;
  return sol;
}

double theta0_value(const std::variant<double, NotAvailable>& v) {
  return std::get<double>(v);
}

}  // namespace

namespace {

// Running-pair recurrence dots: sum_k w[k] P_k(z) without materializing the
// ladder, so a single evaluation costs O(degree) flops and no allocation.
double hermite_ladder_dot(const std::vector<double>& w, double z) {
  double acc = w[0];
  if (w.size() == 1) return acc;
  double prev = 1.0, cur = z;
  acc += w[1] * cur;
  for (size_t k = 1; k + 1 < w.size(); ++k) {
    const double next = z * cur - static_cast<double>(k) * prev;
    prev = cur;
    cur = next;
    acc += w[k + 1] * next;
  }
  return acc;
}

// inv_next[k] must hold 1 / (k + 1); hoisting the divisions out roughly
// halves the cost of long ladders.
double laguerre_ladder_dot(const std::vector<double>& w, double alpha,
                           double z, const std::vector<double>& inv_next) {
  double acc = w[0];
  if (w.size() == 1) return acc;
  double prev = 1.0, cur = 1.0 + alpha - z;
  acc += w[1] * cur;
  for (size_t k = 1; k + 1 < w.size(); ++k) {
    const double kk = static_cast<double>(k);
    const double next =
        ((2.0 * kk + 1.0 + alpha - z) * cur - (kk + alpha) * prev) *
        inv_next[k];
    prev = cur;
    cur = next;
    acc += w[k + 1] * next;
  }
  return acc;
}

// Sum of weight_i * basis_i(z); the 1D ladders are evaluated with one
// recurrence pass instead of one per index, which matters for long ladders
// inside Monte Carlo loops.
double weighted_basis_sum(const EigenSolution& sol, const Eigen::VectorXd& z,
                          const std::function<double(int)>& weight) {
  const bool one_d = basis_dim(sol.basis) == 1;
  if (one_d && !sol.indices.empty()) {
    int top = 0;
    for (const BasisIndex& n : sol.indices) top = std::max(top, n.n1);
    std::vector<double> values;
    if (const auto* lag = std::get_if<GenLaguerreBasis>(&sol.basis))
      values = laguerre_values(top, lag->alpha, z[0]);
    else
      values = hermite_values(top, z[0]);
    double acc = 0.0;
    for (size_t i = 0; i < sol.indices.size(); ++i)
      acc += weight(static_cast<int>(i)) * values[sol.indices[i].n1];
    return acc;
  }
  double acc = 0.0;
  for (size_t i = 0; i < sol.indices.size(); ++i) {
    const double b = sol.family == EvalFamily::Dual
                         ? basis_dual_eval(sol.basis, sol.indices[i], z)
                         : basis_eval(sol.basis, sol.indices[i], z);
    acc += weight(static_cast<int>(i)) * b;
  }
  return acc;
}

}  // namespace

double evaluate_v2(const EigenSolution& sol, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = sol.scaling.apply(x);
  return weighted_basis_sum(sol, z,
                            [&](int i) { return sol.coefficients[i]; });
}

double evaluate_phi_v2(const EigenSolution& sol, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = sol.scaling.apply(x);
  return weighted_basis_sum(sol, z, [&](int i) {
    return sol.coefficients[i] * sol.eigenvalues[i];
  });
}

std::function<double(const Eigen::VectorXd&)> make_v2_evaluator(
    const EigenSolution& sol) {
  if (basis_dim(sol.basis) == 1) {
    int top = 0;
    for (const BasisIndex& n : sol.indices) top = std::max(top, n.n1);
    std::vector<double> w(top + 1, 0.0);
    for (size_t i = 0; i < sol.indices.size(); ++i)
      w[sol.indices[i].n1] += sol.coefficients[static_cast<int>(i)];
    const double a = sol.scaling.A(0, 0);
    const double b = sol.scaling.b[0];
    if (const auto* lag = std::get_if<GenLaguerreBasis>(&sol.basis)) {
      const double alpha = lag->alpha;
      std::vector<double> inv_next(w.size(), 1.0);
      for (size_t k = 0; k < inv_next.size(); ++k)
        inv_next[k] = 1.0 / static_cast<double>(k + 1);
      return [w = std::move(w), inv_next = std::move(inv_next), a, b,
              alpha](const Eigen::VectorXd& x) {
        return laguerre_ladder_dot(w, alpha, a * x[0] + b, inv_next);
      };
    }
    return [w = std::move(w), a, b](const Eigen::VectorXd& x) {
      return hermite_ladder_dot(w, a * x[0] + b);
    };
  }
  // 2D: fold every index's monomial table, weighted by its coefficient, into
  // one table, then evaluate by nested Horner.
  const auto& basis = std::get<MultiHermite2D>(sol.basis);
  const bool dual = sol.family == EvalFamily::Dual;
  int deg = 0;
  for (const BasisIndex& n : sol.indices) deg = std::max(deg, n.n1 + n.n2);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(deg + 1, deg + 1);
  for (size_t i = 0; i < sol.indices.size(); ++i) {
    const Eigen::MatrixXd& t =
        dual ? basis.dual_coeffs(sol.indices[i].n1, sol.indices[i].n2)
             : basis.primary_coeffs(sol.indices[i].n1, sol.indices[i].n2);
    table.topLeftCorner(t.rows(), t.cols()) +=
        sol.coefficients[static_cast<int>(i)] * t;
  }
  const Eigen::Matrix2d A = sol.scaling.A;
  const Eigen::Vector2d b = sol.scaling.b;
  return [table, A, b](const Eigen::VectorXd& x) {
    const double z1 = A(0, 0) * x[0] + A(0, 1) * x[1] + b[0];
    const double z2 = A(1, 0) * x[0] + A(1, 1) * x[1] + b[1];
    double acc = 0.0;
    for (int j = static_cast<int>(table.cols()) - 1; j >= 0; --j) {
      double col = 0.0;
      for (int i = static_cast<int>(table.rows()) - 1; i >= 0; --i)
        col = col * z1 + table(i, j);
      acc = acc * z2 + col;
    }
    return acc;
  };
}

double evaluate_v2(const PolynomialSolution& sol, const Eigen::VectorXd& x) {
  const double x1 = x[0], x2 = x.size() > 1 ? x[1] : 0.0;
  return sol.a11 * x1 * x1 + sol.a12 * x1 * x2 + sol.a22 * x2 * x2 +
         sol.b1 * x1 + sol.b2 * x2 + sol.c;
}

namespace {

// (2 f_0 + |nu_0|^2) h^2 and its absolute-f counterpart at one state.
void solvability_integrand(const MarketModelSpec& model,
                           const Eigen::VectorXd& x, double& val,
                           double& scl) {
  const double f = theta0_value(roll_yield(model, x, 0.0));
  const Eigen::VectorXd nu =
      std::get<Eigen::VectorXd>(cmf_vol(model, x, 0.0));
  const double h = vix(model, x);
  const double h2 = h * h;
  const double n2 = nu.squaredNorm();
  val = (2.0 * f + n2) * h2;
  scl = (2.0 * std::abs(f) + n2) * h2;
}

}  // namespace

SolvabilityReport check_solvability(const MarketModelSpec& model,
                                    const QuadConfig& cfg) {
  validate(model);
  SolvabilityReport rep;
  rep.model = model_name(model);

  if (const auto* dn = std::get_if<DoubleNelsonModel>(&model)) {
    // <(2 f + |nu|^2) h^2> = 2 k1 (<x1 x2> - <x1^2>) + s1^2 <x1^2> from the
    // stationary moments; the scale bounds <(2|f| + |nu|^2) h^2> from above
    // by the triangle inequality.
    const DoubleNelson& p = dn->factor;
    const Eigen::Vector3d u = dn_invariant_second_moments(p);
    rep.value = 2.0 * p.kappa1 * (u[1] - u[0]) + p.sigma1 * p.sigma1 * u[0];
    rep.scale = 2.0 * p.kappa1 * (u[1] + u[0]) + p.sigma1 * p.sigma1 * u[0];
    rep.tolerance = 1e-10;
    rep.method = "moment_system";
    rep.nodes = 0;
    rep.node_doubling_delta = 0.0;
    rep.pass = std::abs(rep.value) <= rep.tolerance * rep.scale;
    return rep;
  }

  // Quadrature path over the invariant law.
  std::function<double(int, bool)> value_at;  // (nodes, use_abs_f)
  if (const auto* m = std::get_if<BergomiScalar>(&model)) {
    const double s = m->factor.sigma / std::sqrt(2.0 * m->factor.kappa);
    value_at = [model, s](int n, bool use_abs) {
      const QuadratureRule q = gauss_hermite(n);
      double acc = 0.0;
      Eigen::VectorXd x(1);
      for (int i = 0; i < n; ++i) {
        x[0] = s * q.nodes[i];
        double v, a;
        solvability_integrand(model, x, v, a);
        acc += q.weights[i] * (use_abs ? a : v);
      }
      return acc;
    };
    rep.method = "gauss_hermite";
  } else if (const auto* m = std::get_if<BergomiMulti>(&model)) {
    const Eigen::MatrixXd Sigma =
        lyapunov_solve(m->factor.K, m->factor.S * m->factor.S.transpose());
    const Eigen::MatrixXd L =
        Eigen::LLT<Eigen::MatrixXd>(Sigma).matrixL();
    value_at = [model, L](int n, bool use_abs) {
      const QuadratureRule q = gauss_hermite(n);
      const int d = static_cast<int>(L.rows());
      if (d != 2)
        throw std::invalid_argument(
            "check_solvability: only 2-factor models supported");
      double acc = 0.0;
      Eigen::Vector2d u;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          u << q.nodes[i], q.nodes[j];
          const Eigen::VectorXd x = L * u;
          double v, a;
          solvability_integrand(model, x, v, a);
          acc += q.weights[i] * q.weights[j] * (use_abs ? a : v);
        }
      return acc;
    };
    rep.method = "gauss_hermite_2d";
  } else {
    const auto* th = std::get_if<ThreeHalves>(&model);
    const double alpha = 2.0 * th->factor.kappa * th->factor.xbar /
                             (th->factor.sigma * th->factor.sigma) -
                         1.0;
    const int shift = cfg.laguerre_shift >= 0 ? cfg.laguerre_shift : 2;
    if (alpha - shift <= -1.0)
      throw std::invalid_argument(
          "check_solvability: Laguerre shift exceeds the weight exponent");
    const double a = 2.0 * th->factor.kappa /
                     (th->factor.sigma * th->factor.sigma);
    double corr = 1.0;
    for (int j = 0; j < shift; ++j) corr *= alpha - j;
    value_at = [model, alpha, shift, a, corr](int n, bool use_abs) {
      const QuadratureRule q = gauss_laguerre(n, alpha - shift);
      double acc = 0.0;
      Eigen::VectorXd x(1);
      for (int i = 0; i < n; ++i) {
        const double z = q.nodes[i];
        x[0] = z / a;
        double v, s;
        solvability_integrand(model, x, v, s);
        acc += q.weights[i] * (use_abs ? s : v) * std::pow(z, shift);
      }
      return acc / corr;
    };
    rep.method = "gauss_laguerre_shifted";
  }

  int nodes = cfg.nodes;
  double value = value_at(nodes, false);
  double delta = std::numeric_limits<double>::infinity();
  while (nodes < cfg.max_nodes) {
    nodes *= 2;
    const double next = value_at(nodes, false);
    delta = std::abs(next - value);
    value = next;
    if (delta <= cfg.tol * std::max(1.0, std::abs(value))) break;
  }
  if (!(delta <= cfg.tol * std::max(1.0, std::abs(value))))
    throw QuadratureError("check_solvability: node doubling did not converge");
  rep.value = value;
  rep.scale = value_at(nodes, true);
  rep.tolerance = 1e-9;
  rep.nodes = nodes;
  rep.node_doubling_delta = delta;
  rep.pass = std::abs(rep.value) <= rep.tolerance * rep.scale;
  return rep;
}

EigenSolution recover_bergomi_scalar(const BergomiScalar& model, double tau,
                                     int max_degree) {
  validate(MarketModelSpec{model});
  if (tau <= 0.0 || max_degree < 0)
    throw std::invalid_argument("recover_bergomi_scalar: bad tau or degree");
  const double kappa = model.factor.kappa;
  const double c = model.gamma * model.factor.sigma * std::sqrt(2.0 / kappa);
  const double front = model.h0 * model.h0 * std::exp(0.5 * c * c);
  Expansion e;
  double cn = 1.0;  // c^n
  double nf = 1.0;  // n!
  for (int n = 0; n <= max_degree; ++n) {
    if (n > 0) {
      cn *= c;
      nf *= n;
    }
    const double rate = kappa * n;
    const double lam = phi_eigenvalue(rate, tau);
    e.indices.push_back({n, 0});
    e.coefficients.push_back(front * cn / (lam * nf));
    e.rates.push_back(rate);
    e.eigenvalues.push_back(lam);
    e.norms.push_back(nf);
  }
  truncate_adaptive(e, false);

  // Tail of sum a_n^2 n! beyond the cut, by term-ratio recursion.
  const int last = e.indices.back().n1;
  double term = e.coefficients.back() * e.coefficients.back() * e.norms.back();
  double lam_prev = e.eigenvalues.back();
  double tail = 0.0;
  for (int n = last + 1; n <= last + 400; ++n) {
    const double lam = phi_eigenvalue(kappa * n, tau);
    term *= c * c / n * (lam_prev / lam) * (lam_prev / lam);
    lam_prev = lam;
    tail += term;
  }

  SpectralFrame fr = make_frame(FactorSpec{model.factor}, max_degree);
  return assemble(fr.basis, fr.scaling, fr.solution_family, std::move(e), tau,
                  tail);
}

EigenSolution recover_bergomi_multi(const BergomiMulti& model, double tau,
                                    int max_total_degree) {
  validate(MarketModelSpec{model});
  if (tau <= 0.0 || max_total_degree < 0)
    throw std::invalid_argument("recover_bergomi_multi: bad tau or degree");
  SpectralFrame fr = make_frame(FactorSpec{model.factor}, max_total_degree);
  const auto& basis = std::get<MultiHermite2D>(fr.basis);
  const Eigen::Matrix2d Sigma = basis.sigma();
  const double k1 = basis.kappa1(), k2 = basis.kappa2();
  const Eigen::Vector2d g(model.gamma[0], model.gamma[1]);
  const double front =
      model.h0 * model.h0 * std::exp(2.0 * g.dot(Sigma * g));
  const double t1 = 2.0 * g[0], t2 = 2.0 * g[1];

  Expansion e;
  for (const BasisIndex& n : enumerate_indices(fr.basis)) {
    const double rate = k1 * n.n1 + k2 * n.n2;
    const double lam = phi_eigenvalue(rate, tau);
    const double norm = basis.norm_sq(n.n1, n.n2);
    const double coef =
        front * std::pow(t1, n.n1) * std::pow(t2, n.n2) / (lam * norm);
    e.indices.push_back(n);
    e.coefficients.push_back(coef);
    e.rates.push_back(rate);
    e.eigenvalues.push_back(lam);
    e.norms.push_back(norm);
  }
  truncate_adaptive(e, true);

  // Tail over total-degree shells beyond the cut.
  const int last_deg = e.indices.back().n1 + e.indices.back().n2;
  double tail = 0.0;
  for (int d = last_deg + 1; d <= std::min(last_deg + 80, 160); ++d) {
    double shell = 0.0;
    double f1 = 1.0;  // n1!
    for (int n1 = 1; n1 <= d; ++n1) f1 *= n1;
    // iterate n1 = d..0, maintaining n1! and n2!
    double f2 = 1.0;
    for (int n1 = d, n2 = 0; n1 >= 0; --n1, ++n2) {
      const double lam = phi_eigenvalue(k1 * n1 + k2 * n2, tau);
      const double a =
          front * std::pow(t1, n1) * std::pow(t2, n2) / (lam * f1 * f2);
      shell += a * a * f1 * f2;
      if (n1 > 0) {
        f1 /= n1;
        f2 *= n2 + 1;
      }
    }
    tail += shell;
    if (shell < 1e-300) break;
  }

  return assemble(fr.basis, fr.scaling, fr.solution_family, std::move(e), tau,
                  tail);
}

EigenSolution recover_three_halves(const ThreeHalves& model, double tau,
                                   int max_degree) {
  validate(MarketModelSpec{model});
  if (tau <= 0.0 || max_degree < 0)
    throw std::invalid_argument("recover_three_halves: bad tau or degree");
  const double kappa = model.factor.kappa;
  const double alpha = 2.0 * kappa * model.factor.xbar /
                           (model.factor.sigma * model.factor.sigma) -
                       1.0;
  if (!(alpha > 2.0))
    throw std::domain_error(
        "recover_three_halves: needs alpha > 2 for a square-summable "
        "expansion (coefficient decay n^{1-alpha})");
  const double base = 2.0 * kappa /
                      (model.factor.sigma * model.factor.sigma * alpha);
  Expansion e;
  double raw = base;  // (2k/s^2) Gamma(alpha) n! / Gamma(n+alpha+1)
  for (int n = 0; n <= max_degree; ++n) {
    if (n > 0) raw *= n / (n + alpha);
    const double rate = kappa * n;
    const double lam = phi_eigenvalue(rate, tau);
    e.indices.push_back({n, 0});
    e.coefficients.push_back(raw / lam);
    e.rates.push_back(rate);
    e.eigenvalues.push_back(lam);
    e.norms.push_back(laguerre_norm_sq(n, alpha));
  }
  truncate_adaptive(e, false);

  const int last = e.indices.back().n1;
  double term = e.coefficients.back() * e.coefficients.back() * e.norms.back();
  double lam_prev = e.eigenvalues.back();
  double tail = 0.0;
  for (int n = last + 1; n <= last + 1200; ++n) {
    const double lam = phi_eigenvalue(kappa * n, tau);
    // a_{n}^2 c_n ratio: (n/(n+alpha)) * (lam_{n-1}/lam_n)^2 * (c_n/c_{n-1})
    term *= (static_cast<double>(n) / (n + alpha)) * (lam_prev / lam) *
            (lam_prev / lam) * ((n + alpha) / n);
    lam_prev = lam;
    tail += term;
  }

  SpectralFrame fr = make_frame(FactorSpec{model.factor}, max_degree);
  return assemble(fr.basis, fr.scaling, fr.solution_family, std::move(e), tau,
                  tail);
}

EigenSolution recover_generic(
    const FactorSpec& factor,
    const std::function<double(const Eigen::VectorXd&)>& h_squared,
    double tau, int max_degree, const QuadConfig& cfg,
    NormConvention convention) {
  if (tau <= 0.0 || max_degree < 0)
    throw std::invalid_argument("recover_generic: bad tau or degree");
  SpectralFrame fr = make_frame(factor, max_degree);
  const std::vector<BasisIndex> indices = enumerate_indices(fr.basis);
  const int n_idx = static_cast<int>(indices.size());

  // Raw projections <h^2 proj_n> at a given 1D node count, where proj is the
  // bi-orthogonal partner of the solution family.
  std::function<Eigen::VectorXd(int)> project_at;
  std::function<double(int)> h4_at;  // <h^4> finiteness probe

  if (std::holds_alternative<HermiteBasis>(fr.basis)) {
    const double inv_a = 1.0 / fr.scaling.A(0, 0);
    project_at = [&, inv_a](int m) {
      const QuadratureRule q = gauss_hermite(m);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_idx);
      Eigen::VectorXd x(1);
      for (int i = 0; i < m; ++i) {
        x[0] = inv_a * q.nodes[i];
        const double wh2 = q.weights[i] * h_squared(x);
        const std::vector<double> he = hermite_values(max_degree, q.nodes[i]);
        for (int n = 0; n < n_idx; ++n) acc[n] += wh2 * he[indices[n].n1];
      }
      return acc;
    };
    h4_at = [&, inv_a](int m) {
      const QuadratureRule q = gauss_hermite(m);
      double acc = 0.0;
      Eigen::VectorXd x(1);
      for (int i = 0; i < m; ++i) {
        x[0] = inv_a * q.nodes[i];
        const double h2 = h_squared(x);
        acc += q.weights[i] * h2 * h2;
      }
      return acc;
    };
  } else if (const auto* lag = std::get_if<GenLaguerreBasis>(&fr.basis)) {
    const double alpha = lag->alpha;
    const int shift = cfg.laguerre_shift >= 0 ? cfg.laguerre_shift : 1;
    if (alpha - shift <= -1.0)
      throw std::invalid_argument(
          "recover_generic: Laguerre shift exceeds the weight exponent");
    double corr = 1.0;
    for (int j = 0; j < shift; ++j) corr *= alpha - j;
    const double inv_a = 1.0 / fr.scaling.A(0, 0);
    project_at = [&, alpha, shift, corr, inv_a](int m) {
      const QuadratureRule q = gauss_laguerre(m, alpha - shift);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_idx);
      Eigen::VectorXd x(1);
      for (int i = 0; i < m; ++i) {
        const double z = q.nodes[i];
        x[0] = inv_a * z;
        const double w =
            q.weights[i] * h_squared(x) * std::pow(z, shift) / corr;
        const std::vector<double> lg = laguerre_values(max_degree, alpha, z);
        for (int n = 0; n < n_idx; ++n) acc[n] += w * lg[indices[n].n1];
      }
      return acc;
    };
    h4_at = [&, alpha, shift, corr, inv_a](int m) {
      const QuadratureRule q = gauss_laguerre(m, alpha - shift);
      double acc = 0.0;
      Eigen::VectorXd x(1);
      for (int i = 0; i < m; ++i) {
        const double z = q.nodes[i];
        x[0] = inv_a * z;
        const double h2 = h_squared(x);
        acc += q.weights[i] * h2 * h2 * std::pow(z, shift) / corr;
      }
      return acc;
    };
  } else {
    const auto& basis = std::get<MultiHermite2D>(fr.basis);
    const Eigen::Matrix2d L =
        Eigen::LLT<Eigen::Matrix2d>(basis.sigma()).matrixL();
    project_at = [&, L](int m) {
      const QuadratureRule q = gauss_hermite(m);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_idx);
      Eigen::Vector2d u;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          u << q.nodes[i], q.nodes[j];
          const Eigen::Vector2d x = L * u;
          const double wh2 = q.weights[i] * q.weights[j] * h_squared(x);
          for (int n = 0; n < n_idx; ++n)
            acc[n] += wh2 * basis.eval(indices[n].n1, indices[n].n2, x);
        }
      return acc;
    };
    h4_at = [&, L](int m) {
      const QuadratureRule q = gauss_hermite(m);
      double acc = 0.0;
      Eigen::Vector2d u;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          u << q.nodes[i], q.nodes[j];
          const double h2 = h_squared(L * u);
          acc += q.weights[i] * q.weights[j] * h2 * h2;
        }
      return acc;
    };
  }

  int nodes = cfg.nodes;
  Eigen::VectorXd proj = project_at(nodes);
  double delta = std::numeric_limits<double>::infinity();
  bool converged = false;
  while (nodes < cfg.max_nodes) {
    nodes *= 2;
    const Eigen::VectorXd next = project_at(nodes);
    const double d = (next - proj).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, proj.cwiseAbs().maxCoeff());
    // Doubling stopped improving while already within three orders of the
    // target: the rule is at its rounding floor, so keep the coarser result
    // rather than accumulate roundoff from ever larger rules.
    if (d >= delta && delta <= 1e3 * cfg.tol * scale) {
      converged = true;
      break;
    }
    delta = d;
    proj = next;
    if (delta <= cfg.tol * scale) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw QuadratureError("recover_generic: node doubling did not converge");
  if (!std::isfinite(h4_at(nodes)))
    throw std::domain_error("recover_generic: <h^4> is not finite");

  Expansion e;
  for (int n = 0; n < n_idx; ++n) {
    const double rate = fr.rate(indices[n]);
    const double lam = phi_eigenvalue(rate, tau);
    const double norm = basis_norm_sq(fr.basis, indices[n]);
    double denom = lam * norm;
    if (convention == NormConvention::Squared) denom *= norm;
    e.indices.push_back(indices[n]);
    e.coefficients.push_back(proj[n] / denom);
    e.rates.push_back(rate);
    e.eigenvalues.push_back(lam);
    e.norms.push_back(norm);
  }
  truncate_adaptive(e, basis_dim(fr.basis) == 2);

  // Heuristic geometric tail from the last two degree shells.
  double s_prev = 0.0, s_last = 0.0;
  const int last_deg =
      e.indices.back().n1 + e.indices.back().n2;
  for (size_t i = 0; i < e.indices.size(); ++i) {
    const int d = e.indices[i].n1 + e.indices[i].n2;
    const double w =
        e.coefficients[i] * e.coefficients[i] * e.norms[i];
    if (d == last_deg) s_last += w;
    if (d == last_deg - 1) s_prev += w;
  }
  double tail = 0.0;
  if (s_prev > 0.0 && s_last > 0.0) {
    const double r = std::min(s_last / s_prev, 0.95);
    tail = s_last * r / (1.0 - r);
  }

  return assemble(fr.basis, fr.scaling, fr.solution_family, std::move(e), tau,
                  tail);
}

EigenSolution recover(const MarketModelSpec& model, double tau,
                      int max_degree) {
  if (const auto* m = std::get_if<BergomiScalar>(&model))
    return recover_bergomi_scalar(*m, tau, max_degree < 0 ? 20 : max_degree);
  if (const auto* m = std::get_if<BergomiMulti>(&model))
    return recover_bergomi_multi(*m, tau, max_degree < 0 ? 8 : max_degree);
  if (const auto* m = std::get_if<ThreeHalves>(&model))
    return recover_three_halves(*m, tau, max_degree < 0 ? 30 : max_degree);
  throw std::invalid_argument(
      "recover: the double-Nelson model uses recover_double_nelson");
}

DNLinearClosedForm dn_linear_closed_form(const DoubleNelson& p, double tau) {
  validate(FactorSpec{p});
  if (tau <= 0.0)
    throw std::invalid_argument("dn_linear_closed_form: tau must be > 0");
  const double l1 = expm1_ratio(p.kappa1 * tau);
  const double l2 = expm1_ratio(p.kappa2 * tau);
  DNLinearClosedForm out;
  out.b1 = 1.0 / l1;
  if (std::abs(p.kappa1 - p.kappa2) <
      1e-9 * std::max(p.kappa1, p.kappa2)) {
    const double a = p.kappa1 * tau;
    // kappa1 -> kappa2 limit of kappa1 (lambda(k2) - lambda(k1)) / (k1 - k2).
    out.coupling = (1.0 - (1.0 + a) * std::exp(-a)) / a;
  } else {
    out.coupling = p.kappa1 * (l2 - l1) / (p.kappa1 - p.kappa2);
  }
  out.b2 = -out.b1 * out.coupling / l2;
  out.c = -p.xbar * (out.b1 * (1.0 - l1 - out.coupling) +
                     out.b2 * (1.0 - l2));
  return out;
}

PolynomialSolution recover_double_nelson(const DoubleNelsonModel& model,
                                         double tau, DNTarget target) {
  validate(MarketModelSpec{model});
  if (tau <= 0.0)
    throw std::invalid_argument("recover_double_nelson: tau must be > 0");
  const Eigen::Matrix<double, 6, 6> Abar =
      dn_moment_time_average(model.factor, tau);
  PolynomialSolution sol;
  sol.tau = tau;
  if (target == DNTarget::SquaredVix) {
    Eigen::Matrix<double, 6, 1> e = Eigen::Matrix<double, 6, 1>::Zero();
    e[2] = 1.0;  // x1^2 slot of (u1, u2, u11, u12, u22, 1)
    Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(Abar.transpose());
    if (!lu.isInvertible())
      throw std::runtime_error(
          "recover_double_nelson: singular moment-matching system");
    const Eigen::Matrix<double, 6, 1> q = lu.solve(e);
    sol.b1 = q[0];
    sol.b2 = q[1];
    sol.a11 = q[2];
    sol.a12 = q[3];
    sol.a22 = q[4];
    sol.c = q[5];
    sol.target = "x1_squared";
  } else {
    // The (u1, u2, 1) subsystem is closed, so its time average is the
    // corresponding submatrix of Abar.
    Eigen::Matrix3d A3;
    const int pick[3] = {0, 1, 5};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) A3(i, j) = Abar(pick[i], pick[j]);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(A3.transpose());
    if (!lu.isInvertible())
      throw std::runtime_error(
          "recover_double_nelson: singular moment-matching system");
    const Eigen::Vector3d q = lu.solve(Eigen::Vector3d(1.0, 0.0, 0.0));
    sol.b1 = q[0];
    sol.b2 = q[1];
    sol.c = q[2];
    sol.target = "x1";
  }
  return sol;
}

ForwardResidual forward_residual(const EigenSolution& sol,
                                 const MarketModelSpec& model,
                                 const Eigen::MatrixXd& states) {
  auto h2 = vix_squared(model);
  ForwardResidual out;
  out.n_points = static_cast<int>(states.rows());
  double ss = 0.0;
  for (int i = 0; i < states.rows(); ++i) {
    const Eigen::VectorXd x = states.row(i).transpose();
    const double r = evaluate_phi_v2(sol, x) - h2(x);
    ss += r * r;
    out.max_abs = std::max(out.max_abs, std::abs(r));
  }
  out.rms = states.rows() > 0 ? std::sqrt(ss / states.rows()) : 0.0;
  return out;
}

ForwardResidual forward_residual(const PolynomialSolution& sol,
                                 const DoubleNelsonModel& model,
                                 const Eigen::MatrixXd& states) {
  const Eigen::Matrix<double, 6, 6> Abar =
      dn_moment_time_average(model.factor, sol.tau);
  Eigen::Matrix<double, 6, 1> q;
  q << sol.b1, sol.b2, sol.a11, sol.a12, sol.a22, sol.c;
  const Eigen::Matrix<double, 6, 1> w = Abar.transpose() * q;
  const bool squared = sol.target == "x1_squared";
  ForwardResidual out;
  out.n_points = static_cast<int>(states.rows());
  double ss = 0.0;
  for (int i = 0; i < states.rows(); ++i) {
    const double x1 = states(i, 0), x2 = states(i, 1);
    Eigen::Matrix<double, 6, 1> y;
    y << x1, x2, x1 * x1, x1 * x2, x2 * x2, 1.0;
    const double target = squared ? x1 * x1 : x1;
    const double r = w.dot(y) - target;
    ss += r * r;
    out.max_abs = std::max(out.max_abs, std::abs(r));
  }
  out.rms = states.rows() > 0 ? std::sqrt(ss / states.rows()) : 0.0;
  return out;
}

PositivityScan positivity_scan(
    const std::function<double(const Eigen::VectorXd&)>& v2,
    const Eigen::MatrixXd& states) {
  if (states.rows() == 0)
    throw std::invalid_argument("positivity_scan: empty grid");
  PositivityScan out;
  out.n_points = static_cast<int>(states.rows());
  out.min_value = std::numeric_limits<double>::infinity();
  int negatives = 0;
  for (int i = 0; i < states.rows(); ++i) {
    const Eigen::VectorXd x = states.row(i).transpose();
    const double v = v2(x);
    if (v < 0.0) ++negatives;
    if (v < out.min_value) {
      out.min_value = v;
      out.argmin = x;
    }
  }
  out.fraction_negative = static_cast<double>(negatives) / states.rows();
  return out;
}

PositivityScan positivity_scan(const EigenSolution& sol,
                               const Eigen::MatrixXd& states) {
  return positivity_scan(
      [&sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); },
      states);
}

PositivityScan positivity_scan(const PolynomialSolution& sol,
                               const Eigen::MatrixXd& states) {
  return positivity_scan(
      [&sol](const Eigen::VectorXd& x) { return evaluate_v2(sol, x); },
      states);
}

Eigen::MatrixXd default_scan_grid(const FactorSpec& spec, int per_dim,
                                  double n_sd) {
  validate(spec);
  if (per_dim < 2 || n_sd <= 0.0)
    throw std::invalid_argument("default_scan_grid: bad grid request");
  const Eigen::VectorXd mean = stationary_mean(spec);
  const Eigen::MatrixXd cov = stationary_covariance(spec);
  const int d = static_cast<int>(mean.size());
  const bool positive_domain =
      std::holds_alternative<CIR>(spec) ||
      std::holds_alternative<DoubleNelson>(spec);
  std::vector<Eigen::VectorXd> axes(d);
  for (int k = 0; k < d; ++k) {
    const double s = std::sqrt(cov(k, k));
    double lo = mean[k] - n_sd * s, hi = mean[k] + n_sd * s;
    if (positive_domain) lo = std::max(lo, 1e-3 * mean[k]);
    axes[k] = Eigen::VectorXd::LinSpaced(per_dim, lo, hi);
  }
  if (d == 1) return axes[0];
  Eigen::MatrixXd grid(per_dim * per_dim, 2);
  int r = 0;
  for (int i = 0; i < per_dim; ++i)
    for (int j = 0; j < per_dim; ++j) {
      grid(r, 0) = axes[0][i];
      grid(r, 1) = axes[1][j];
      ++r;
    }
  return grid;
}

}  // namespace volrec
