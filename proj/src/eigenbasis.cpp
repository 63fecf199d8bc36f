#include "volrec/eigenbasis.hpp"

#include <cmath>
#include <stdexcept>

#include "volrec/numerics.hpp"

namespace volrec {

namespace {

// Monomial-coefficient table ops; entry (i, j) multiplies x1^i x2^j.
Eigen::MatrixXd shift_x1(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  r.bottomRows(m.rows() - 1) = m.topRows(m.rows() - 1);
  return r;
}

Eigen::MatrixXd shift_x2(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  r.rightCols(m.cols() - 1) = m.leftCols(m.cols() - 1);
  return r;
}

Eigen::MatrixXd ddx1(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (int i = 0; i + 1 < m.rows(); ++i)
    r.row(i) = (i + 1.0) * m.row(i + 1);
  return r;
}

Eigen::MatrixXd ddx2(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (int j = 0; j + 1 < m.cols(); ++j)
    r.col(j) = (j + 1.0) * m.col(j + 1);
  return r;
}

double eval_table(const Eigen::MatrixXd& m, double x1, double x2) {
  double acc = 0.0;
  for (int i = static_cast<int>(m.rows()) - 1; i >= 0; --i) {
    double row = 0.0;
    for (int j = static_cast<int>(m.cols()) - 1; j >= 0; --j)
      row = row * x2 + m(i, j);
    acc = acc * x1 + row;
  }
  return acc;
}

int tri_index(int n1, int n2) {
  const int d = n1 + n2;
  return d * (d + 1) / 2 + n2;
}

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

}  // namespace

MultiHermite2D::MultiHermite2D(const Eigen::Matrix2d& Sigma, double kappa1,
                               double kappa2, int max_total_degree)
    : Sigma_(Sigma),
      kappa1_(kappa1),
      kappa2_(kappa2),
      maxdeg_(max_total_degree) {
  if (max_total_degree < 0)
    throw std::invalid_argument("MultiHermite2D: negative degree cap");
  if (!(Sigma(0, 0) > 0.0) ||
      Sigma.determinant() <= 0.0 ||
      std::abs(Sigma(0, 1) - Sigma(1, 0)) >
          1e-12 * (std::abs(Sigma(0, 1)) + 1.0))
    throw std::invalid_argument(
        "MultiHermite2D: Sigma must be symmetric positive definite");
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0))
    throw std::invalid_argument("MultiHermite2D: rates must be positive");
  Sigma_inv_ = Sigma_.inverse();

  const int n_tables = (maxdeg_ + 1) * (maxdeg_ + 2) / 2;
  const int sz = maxdeg_ + 1;
  primary_.assign(n_tables, Eigen::MatrixXd::Zero(sz, sz));
  dual_.assign(n_tables, Eigen::MatrixXd::Zero(sz, sz));
  primary_[0](0, 0) = 1.0;
  dual_[0](0, 0) = 1.0;

  // Raise one multi-index step at a time:
  //   primary_{n+e_i} = (Sigma^{-1} x)_i primary_n - d_i primary_n
  //   dual_{n+e_i}    = x_i dual_n - sum_j Sigma_ij d_j dual_n
  for (int d = 1; d <= maxdeg_; ++d) {
    for (int n2 = 0; n2 <= d; ++n2) {
      const int n1 = d - n2;
      const int at = tri_index(n1, n2);
      if (n1 > 0) {
        const Eigen::MatrixXd& p = primary_[tri_index(n1 - 1, n2)];
        primary_[at] = Sigma_inv_(0, 0) * shift_x1(p) +
                       Sigma_inv_(0, 1) * shift_x2(p) - ddx1(p);
        const Eigen::MatrixXd& q = dual_[tri_index(n1 - 1, n2)];
        dual_[at] =
            shift_x1(q) - Sigma_(0, 0) * ddx1(q) - Sigma_(0, 1) * ddx2(q);
      } else {
        const Eigen::MatrixXd& p = primary_[tri_index(n1, n2 - 1)];
        primary_[at] = Sigma_inv_(1, 0) * shift_x1(p) +
                       Sigma_inv_(1, 1) * shift_x2(p) - ddx2(p);
        const Eigen::MatrixXd& q = dual_[tri_index(n1, n2 - 1)];
        dual_[at] =
            shift_x2(q) - Sigma_(1, 0) * ddx1(q) - Sigma_(1, 1) * ddx2(q);
      }
    }
  }
}

const Eigen::MatrixXd& MultiHermite2D::primary_coeffs(int n1, int n2) const {
  if (n1 < 0 || n2 < 0 || n1 + n2 > maxdeg_)
    throw std::out_of_range("MultiHermite2D: index beyond degree cap");
  return primary_[tri_index(n1, n2)];
}

const Eigen::MatrixXd& MultiHermite2D::dual_coeffs(int n1, int n2) const {
  if (n1 < 0 || n2 < 0 || n1 + n2 > maxdeg_)
    throw std::out_of_range("MultiHermite2D: index beyond degree cap");
  return dual_[tri_index(n1, n2)];
}

double MultiHermite2D::eval(int n1, int n2, const Eigen::Vector2d& x) const {
  return eval_table(primary_coeffs(n1, n2), x[0], x[1]);
}

double MultiHermite2D::dual_eval(int n1, int n2,
                                 const Eigen::Vector2d& x) const {
  return eval_table(dual_coeffs(n1, n2), x[0], x[1]);
}

double MultiHermite2D::norm_sq(int n1, int n2) const {
  return factorial(n1) * factorial(n2);
}

std::vector<double> hermite_values(int n, double z) {
  std::vector<double> v(n + 1);
  v[0] = 1.0;
  if (n >= 1) v[1] = z;
  for (int k = 1; k < n; ++k) v[k + 1] = z * v[k] - k * v[k - 1];
  return v;
}

std::vector<double> laguerre_values(int n, double alpha, double z) {
  std::vector<double> v(n + 1);
  v[0] = 1.0;
  if (n >= 1) v[1] = 1.0 + alpha - z;
  for (int k = 1; k < n; ++k)
    v[k + 1] =
        ((2.0 * k + 1.0 + alpha - z) * v[k] - (k + alpha) * v[k - 1]) /
        (k + 1.0);
  return v;
}

double hermite_norm_sq(int n) { return factorial(n); }

double laguerre_norm_sq(int n, double alpha) {
  double c = 1.0;
  for (int k = 1; k <= n; ++k) c *= (k + alpha) / k;
  return c;
}

int basis_dim(const BasisSpec& basis) {
  return std::holds_alternative<MultiHermite2D>(basis) ? 2 : 1;
}

int basis_max_degree(const BasisSpec& basis) {
  return std::visit(
      [](const auto& b) -> int {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, MultiHermite2D>)
          return b.max_total_degree();
        else
          return b.max_degree;
      },
      basis);
}

double basis_eval(const BasisSpec& basis, BasisIndex n,
                  const Eigen::VectorXd& z) {
  return std::visit(
      [&](const auto& b) -> double {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, HermiteBasis>) {
          return hermite_values(n.n1, z[0]).back();
        } else if constexpr (std::is_same_v<T, GenLaguerreBasis>) {
          return laguerre_values(n.n1, b.alpha, z[0]).back();
        } else {
          return b.eval(n.n1, n.n2, Eigen::Vector2d(z[0], z[1]));
        }
      },
      basis);
}

double basis_dual_eval(const BasisSpec& basis, BasisIndex n,
                       const Eigen::VectorXd& z) {
  if (const auto* b = std::get_if<MultiHermite2D>(&basis))
    return b->dual_eval(n.n1, n.n2, Eigen::Vector2d(z[0], z[1]));
  return basis_eval(basis, n, z);
}

double basis_norm_sq(const BasisSpec& basis, BasisIndex n) {
  return std::visit(
      [&](const auto& b) -> double {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, HermiteBasis>)
          return hermite_norm_sq(n.n1);
        else if constexpr (std::is_same_v<T, GenLaguerreBasis>)
          return laguerre_norm_sq(n.n1, b.alpha);
        else
          return b.norm_sq(n.n1, n.n2);
      },
      basis);
}

std::vector<BasisIndex> enumerate_indices(const BasisSpec& basis) {
  std::vector<BasisIndex> idx;
  if (const auto* b = std::get_if<MultiHermite2D>(&basis)) {
    for (int d = 0; d <= b->max_total_degree(); ++d)
      for (int n2 = 0; n2 <= d; ++n2) idx.push_back({d - n2, n2});
  } else {
    for (int k = 0; k <= basis_max_degree(basis); ++k) idx.push_back({k, 0});
  }
  return idx;
}

double phi_eigenvalue(double rate, double tau) {
  if (rate < 0.0 || tau <= 0.0)
    throw std::invalid_argument("phi_eigenvalue: needs rate >= 0, tau > 0");
  return expm1_ratio(rate * tau);
}

SpectralFrame make_frame(const FactorSpec& spec, int max_degree) {
  validate(spec);
  if (max_degree < 0)
    throw std::invalid_argument("make_frame: max_degree must be >= 0");
  SpectralFrame fr;
  if (const auto* p = std::get_if<ScalarOU>(&spec)) {
    const double kappa = p->kappa;
    fr.basis = HermiteBasis{max_degree};
    fr.scaling = AffineScaling{
        Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0 * kappa) / p->sigma),
        Eigen::VectorXd::Zero(1)};
    fr.solution_family = EvalFamily::Primary;
    fr.rate = [kappa](BasisIndex n) { return kappa * n.n1; };
    return fr;
  }
  if (const auto* p = std::get_if<CIR>(&spec)) {
    const double kappa = p->kappa;
    const double alpha = 2.0 * kappa * p->xbar / (p->sigma * p->sigma) - 1.0;
    fr.basis = GenLaguerreBasis{alpha, max_degree};
    fr.scaling = AffineScaling{
        Eigen::MatrixXd::Constant(1, 1, 2.0 * kappa / (p->sigma * p->sigma)),
        Eigen::VectorXd::Zero(1)};
    fr.solution_family = EvalFamily::Primary;
    fr.rate = [kappa](BasisIndex n) { return kappa * n.n1; };
    return fr;
  }
  if (const auto* p = std::get_if<MultiOU>(&spec)) {
    if (p->K.rows() != 2)
      throw std::invalid_argument("make_frame: MultiOU frame needs dim 2");
    const double scale = p->K.cwiseAbs().maxCoeff();
    if (std::abs(p->K(0, 1)) > 1e-12 * scale ||
        std::abs(p->K(1, 0)) > 1e-12 * scale)
      throw std::invalid_argument(
          "make_frame: MultiOU frame needs diagonal mean reversion");
    const double k1 = p->K(0, 0), k2 = p->K(1, 1);
    Eigen::Matrix2d Sigma = stationary_covariance(spec);
    fr.basis = MultiHermite2D(Sigma, k1, k2, max_degree);
    fr.scaling = identity_scaling(2);
    fr.solution_family = EvalFamily::Dual;
    fr.rate = [k1, k2](BasisIndex n) { return k1 * n.n1 + k2 * n.n2; };
    return fr;
  }
  throw std::invalid_argument(
      "make_frame: factor has no L2 spectral frame; use the moment-system "
      "recovery instead");
}

}  // namespace volrec
