#include "volrec/marketmodels.hpp"

#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace volrec {

namespace {

// Relative gap below which the kappa1 = kappa2 limit formulas are used.
constexpr double kDNKappaGap = 1e-9;

struct DNCurve {
  double A = 0.0;   // dF/dx1
  double B = 0.0;   // dF/dx2
  double Ap = 0.0;  // dA/dtheta
  double Bp = 0.0;  // dB/dtheta
};

DNCurve dn_curve(const DoubleNelson& p, double theta) {
  DNCurve c;
  const double e1 = std::exp(-p.kappa1 * theta);
  c.A = e1;
  c.Ap = -p.kappa1 * e1;
  if (std::abs(p.kappa1 - p.kappa2) <
      kDNKappaGap * std::max(p.kappa1, p.kappa2)) {
    c.B = p.kappa1 * theta * e1;
    c.Bp = p.kappa1 * e1 * (1.0 - p.kappa1 * theta);
  } else {
    const double e2 = std::exp(-p.kappa2 * theta);
    const double d = p.kappa1 - p.kappa2;
    c.B = p.kappa1 * (e2 - e1) / d;
    c.Bp = p.kappa1 * (p.kappa1 * e1 - p.kappa2 * e2) / d;
  }
  return c;
}

double dn_value(const DoubleNelson& p, const DNCurve& c,
                const Eigen::VectorXd& x) {
  return c.A * x[0] + p.xbar * (1.0 - c.A) + (x[1] - p.xbar) * c.B;
}

struct ExpCurve {
  Eigen::VectorXd w;   // loading: h = N exp(w . x)
  double logN = 0.0;
  double dlogN = 0.0;  // d/dtheta log N
};

ExpCurve exp_curve_scalar(const BergomiScalar& m, double theta) {
  const double kappa = m.factor.kappa, sigma = m.factor.sigma;
  const double e = std::exp(-kappa * theta);
  ExpCurve c;
  c.w = Eigen::VectorXd::Constant(1, m.gamma * e);
  c.logN = std::log(m.h0);
  if (m.norm == CurveNormalization::VarianceCorrected) {
    const double Sigma = sigma * sigma / (2.0 * kappa);
    c.logN += 0.5 * m.gamma * m.gamma * Sigma * (1.0 - e * e);
    c.dlogN = 0.5 * m.gamma * m.gamma * sigma * sigma * e * e;
  }
  return c;
}

ExpCurve exp_curve_multi(const BergomiMulti& m, double theta) {
  const Eigen::MatrixXd E = (-m.factor.K.transpose() * theta).exp();
  ExpCurve c;
  c.w = E * m.gamma;
  c.logN = std::log(m.h0);
  if (m.norm == CurveNormalization::VarianceCorrected) {
    const Eigen::MatrixXd Sigma =
        lyapunov_solve(m.factor.K, m.factor.S * m.factor.S.transpose());
    c.logN += 0.5 * (m.gamma.dot(Sigma * m.gamma) - c.w.dot(Sigma * c.w));
    const Eigen::MatrixXd Q = m.factor.S * m.factor.S.transpose();
    c.dlogN = 0.5 * c.w.dot(Q * c.w);
  }
  return c;
}

}  // namespace

void validate(const MarketModelSpec& model) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BergomiScalar>) {
          if (!(m.h0 > 0.0))
            throw std::invalid_argument("BergomiScalar: h0 must be positive");
          validate(FactorSpec{m.factor});
        } else if constexpr (std::is_same_v<T, BergomiMulti>) {
          if (!(m.h0 > 0.0))
            throw std::invalid_argument("BergomiMulti: h0 must be positive");
          validate(FactorSpec{m.factor});
          if (m.gamma.size() != m.factor.K.rows())
            throw std::invalid_argument(
                "BergomiMulti: gamma size must match the factor dimension");
        } else if constexpr (std::is_same_v<T, ThreeHalves>) {
          validate(FactorSpec{m.factor});
          const double alpha = 2.0 * m.factor.kappa * m.factor.xbar /
                                   (m.factor.sigma * m.factor.sigma) -
                               1.0;
          if (!(alpha > 1.0))
            throw std::invalid_argument(
                "ThreeHalves: needs 2 kappa xbar / sigma^2 > 2 so that the "
                "squared spot value and its generator image are integrable");
        } else {
          validate(FactorSpec{m.factor});
        }
      },
      model);
}

FactorSpec model_factor(const MarketModelSpec& model) {
  return std::visit([](const auto& m) { return FactorSpec{m.factor}; },
                    model);
}

std::string model_name(const MarketModelSpec& model) {
  if (std::holds_alternative<BergomiScalar>(model)) return "bergomi_scalar";
  if (std::holds_alternative<BergomiMulti>(model)) return "bergomi_multi";
  if (std::holds_alternative<ThreeHalves>(model)) return "three_halves";
  return "double_nelson";
}

double vix(const MarketModelSpec& model, const Eigen::VectorXd& x) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BergomiScalar>) {
          return m.h0 * std::exp(m.gamma * x[0]);
        } else if constexpr (std::is_same_v<T, BergomiMulti>) {
          return m.h0 * std::exp(m.gamma.dot(x));
        } else if constexpr (std::is_same_v<T, ThreeHalves>) {
          if (!(x[0] > 0.0))
            throw std::domain_error("three_halves: state must be positive");
          return 1.0 / std::sqrt(x[0]);
        } else {
          return x[0];
        }
      },
      model);
}

std::function<double(const Eigen::VectorXd&)> vix_squared(
    const MarketModelSpec& model) {
  return [model](const Eigen::VectorXd& x) {
    const double h = vix(model, x);
    return h * h;
  };
}

std::variant<CurvePoint, NotAvailable> cmf_with_derivatives(
    const MarketModelSpec& model, const Eigen::VectorXd& x, double theta) {
  if (theta < 0.0)
    throw std::invalid_argument("cmf: horizon must be nonnegative");
  return std::visit(
      [&](const auto& m) -> std::variant<CurvePoint, NotAvailable> {
        using T = std::decay_t<decltype(m)>;
        CurvePoint out;
        if constexpr (std::is_same_v<T, BergomiScalar>) {
          const ExpCurve c = exp_curve_scalar(m, theta);
          out.h = std::exp(c.logN + c.w[0] * x[0]);
          out.grad = c.w * out.h;
          out.hess = Eigen::MatrixXd::Constant(1, 1, c.w[0] * c.w[0] * out.h);
          return out;
        } else if constexpr (std::is_same_v<T, BergomiMulti>) {
          const ExpCurve c = exp_curve_multi(m, theta);
          out.h = std::exp(c.logN + c.w.dot(x));
          out.grad = c.w * out.h;
          out.hess = c.w * c.w.transpose() * out.h;
          return out;
        } else if constexpr (std::is_same_v<T, ThreeHalves>) {
          if (theta != 0.0)
            return NotAvailable{
                "three_halves: constant-maturity value has no closed form "
                "away from theta = 0"};
          if (!(x[0] > 0.0))
            throw std::domain_error("three_halves: state must be positive");
          const double r = std::sqrt(x[0]);
          out.h = 1.0 / r;
          out.grad = Eigen::VectorXd::Constant(1, -0.5 / (r * x[0]));
          out.hess =
              Eigen::MatrixXd::Constant(1, 1, 0.75 / (r * x[0] * x[0]));
          return out;
        } else {
          const DNCurve c = dn_curve(m.factor, theta);
          out.h = dn_value(m.factor, c, x);
          out.grad = Eigen::Vector2d(c.A, c.B);
          out.hess = Eigen::MatrixXd::Zero(2, 2);
          return out;
        }
      },
      model);
}

std::variant<double, NotAvailable> cmf(const MarketModelSpec& model,
                                       const Eigen::VectorXd& x,
                                       double theta) {
  auto r = cmf_with_derivatives(model, x, theta);
  if (auto* na = std::get_if<NotAvailable>(&r)) return *na;
  return std::get<CurvePoint>(r).h;
}

std::variant<double, NotAvailable> roll_yield(const MarketModelSpec& model,
                                              const Eigen::VectorXd& x,
                                              double theta) {
  if (theta < 0.0)
    throw std::invalid_argument("roll_yield: horizon must be nonnegative");
  return std::visit(
      [&](const auto& m) -> std::variant<double, NotAvailable> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BergomiScalar>) {
          const ExpCurve c = exp_curve_scalar(m, theta);
          return c.dlogN - m.factor.kappa * c.w[0] * x[0];
        } else if constexpr (std::is_same_v<T, BergomiMulti>) {
          const ExpCurve c = exp_curve_multi(m, theta);
          return c.dlogN - c.w.dot(m.factor.K * x);
        } else if constexpr (std::is_same_v<T, ThreeHalves>) {
          if (theta != 0.0)
            return NotAvailable{
                "three_halves: roll yield has no closed form away from "
                "theta = 0"};
          if (!(x[0] > 0.0))
            throw std::domain_error("three_halves: state must be positive");
          const auto& p = m.factor;
          return 0.5 * p.kappa +
                 (0.375 * p.sigma * p.sigma - 0.5 * p.kappa * p.xbar) / x[0];
        } else {
          const DNCurve c = dn_curve(m.factor, theta);
          const double F = dn_value(m.factor, c, x);
          const double Fp =
              c.Ap * (x[0] - m.factor.xbar) + c.Bp * (x[1] - m.factor.xbar);
          return Fp / F;
        }
      },
      model);
}

std::variant<Eigen::VectorXd, NotAvailable> cmf_vol(
    const MarketModelSpec& model, const Eigen::VectorXd& x, double theta) {
  auto r = cmf_with_derivatives(model, x, theta);
  if (auto* na = std::get_if<NotAvailable>(&r)) return *na;
  const CurvePoint& cp = std::get<CurvePoint>(r);
  const Eigen::MatrixXd sigma = factor_diffusion(model_factor(model), x);
  return Eigen::VectorXd(sigma.transpose() * cp.grad / cp.h);
}

std::variant<Eigen::VectorXd, NotAvailable> roll_yield_gradient(
    const MarketModelSpec& model, const Eigen::VectorXd& x, double theta) {
  if (theta < 0.0)
    throw std::invalid_argument(
        "roll_yield_gradient: horizon must be nonnegative");
  return std::visit(
      [&](const auto& m) -> std::variant<Eigen::VectorXd, NotAvailable> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BergomiScalar>) {
          const ExpCurve c = exp_curve_scalar(m, theta);
          return Eigen::VectorXd::Constant(1, -m.factor.kappa * c.w[0])
              .eval();
        } else if constexpr (std::is_same_v<T, BergomiMulti>) {
          const ExpCurve c = exp_curve_multi(m, theta);
          return Eigen::VectorXd(-m.factor.K.transpose() * c.w);
        } else if constexpr (std::is_same_v<T, ThreeHalves>) {
          if (theta != 0.0)
            return NotAvailable{
                "three_halves: roll yield has no closed form away from "
                "theta = 0"};
          if (!(x[0] > 0.0))
            throw std::domain_error("three_halves: state must be positive");
          const auto& p = m.factor;
          return Eigen::VectorXd::Constant(
                     1, -(0.375 * p.sigma * p.sigma -
                          0.5 * p.kappa * p.xbar) /
                            (x[0] * x[0]))
              .eval();
        } else {
          const DNCurve c = dn_curve(m.factor, theta);
          const double F = dn_value(m.factor, c, x);
          const double Fp =
              c.Ap * (x[0] - m.factor.xbar) + c.Bp * (x[1] - m.factor.xbar);
          Eigen::VectorXd g(2);
          g[0] = (c.Ap * F - Fp * c.A) / (F * F);
          g[1] = (c.Bp * F - Fp * c.B) / (F * F);
          return g;
        }
      },
      model);
}

std::variant<FuturesCurve, NotAvailable> futures_curve(
    const MarketModelSpec& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& thetas) {
  FuturesCurve out;
  out.asof_state = x;
  out.thetas = thetas;
  const int n = static_cast<int>(thetas.size());
  out.prices.resize(n);
  out.roll_yields.resize(n);
  for (int i = 0; i < n; ++i) {
    auto price = cmf(model, x, thetas[i]);
    if (auto* na = std::get_if<NotAvailable>(&price)) return *na;
    auto fy = roll_yield(model, x, thetas[i]);
    if (auto* na = std::get_if<NotAvailable>(&fy)) return *na;
    auto nu = cmf_vol(model, x, thetas[i]);
    if (auto* na = std::get_if<NotAvailable>(&nu)) return *na;
    const Eigen::VectorXd& nu_row = std::get<Eigen::VectorXd>(nu);
    if (i == 0) out.vols.resize(n, nu_row.size());
    out.prices[i] = std::get<double>(price);
    out.roll_yields[i] = std::get<double>(fy);
    out.vols.row(i) = nu_row.transpose();
  }
  return out;
}

}  // namespace volrec
