#pragma once

#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "volrec/factors.hpp"

namespace volrec {

// Multi-index of a basis element; n2 is unused by 1D bases.
struct BasisIndex {
  int n1 = 0;
  int n2 = 0;
};

// Bi-orthogonal pair: Primary denotes the density-ratio family
// (-d)^n omega / omega, Dual its partner with generating function
// exp(c.x - c.Sigma c / 2). They coincide in one dimension.
enum class EvalFamily { Primary, Dual };

// Probabilists' Hermite polynomials He_n, orthogonal under N(0,1);
// <He_n, He_m> = n! delta_nm.
struct HermiteBasis {
  int max_degree = 40;
};

// Generalized Laguerre polynomials L_n^alpha, orthogonal under the
// normalized Gamma(alpha+1) weight; <L_n, L_m> = c_n delta_nm with
// c_n = Gamma(n+alpha+1) / (n! Gamma(alpha+1)).
struct GenLaguerreBasis {
  double alpha = 1.0;
  int max_degree = 40;
};

// Bi-orthogonal polynomial pair on R^2 under omega = N(0, Sigma), built
// symbolically as monomial-coefficient tables up to a total-degree cap.
// Pairing: <primary_n, dual_m>_omega = n1! n2! delta_nm. Under the generator
// of dX = -diag(kappa1, kappa2) X dt + S dW with stationary covariance Sigma,
// the dual family decays at rate n1 kappa1 + n2 kappa2 while the primary
// family plays the projection role.
class MultiHermite2D {
 public:
  MultiHermite2D() = default;
  MultiHermite2D(const Eigen::Matrix2d& Sigma, double kappa1, double kappa2,
                 int max_total_degree = 12);

  double eval(int n1, int n2, const Eigen::Vector2d& x) const;
  double dual_eval(int n1, int n2, const Eigen::Vector2d& x) const;
  double norm_sq(int n1, int n2) const;  // n1! n2!
  double rate(int n1, int n2) const { return kappa1_ * n1 + kappa2_ * n2; }

  const Eigen::Matrix2d& sigma() const { return Sigma_; }
  double kappa1() const { return kappa1_; }
  double kappa2() const { return kappa2_; }
  int max_total_degree() const { return maxdeg_; }

  // coefficient tables: entry (i, j) multiplies x1^i x2^j.
  const Eigen::MatrixXd& primary_coeffs(int n1, int n2) const;
  const Eigen::MatrixXd& dual_coeffs(int n1, int n2) const;

 private:
  Eigen::Matrix2d Sigma_ = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d Sigma_inv_ = Eigen::Matrix2d::Identity();
  double kappa1_ = 1.0, kappa2_ = 1.0;
  int maxdeg_ = 0;
  std::vector<Eigen::MatrixXd> primary_, dual_;
};

using BasisSpec = std::variant<HermiteBasis, GenLaguerreBasis, MultiHermite2D>;

int basis_dim(const BasisSpec& basis);
int basis_max_degree(const BasisSpec& basis);

// Value of basis element n at the scaled coordinate z (size basis_dim).
double basis_eval(const BasisSpec& basis, BasisIndex n,
                  const Eigen::VectorXd& z);
// Partner-family value; equals basis_eval for the 1D (self-dual) bases.
double basis_dual_eval(const BasisSpec& basis, BasisIndex n,
                       const Eigen::VectorXd& z);
// Bi-orthogonal pairing normalization <primary_n, dual_n>.
double basis_norm_sq(const BasisSpec& basis, BasisIndex n);

// Indices in canonical order: 1D ascending degree; 2D ascending total degree,
// n1 descending within each total degree.
std::vector<BasisIndex> enumerate_indices(const BasisSpec& basis);

// (1 - e^{-rate tau}) / (rate tau); equals 1 at rate = 0 and decreases in
// rate, so time-averaging damps but never kills a mode.
double phi_eigenvalue(double rate, double tau);

// He_0(z), ..., He_n(z).
std::vector<double> hermite_values(int n, double z);
// L_0^alpha(z), ..., L_n^alpha(z).
std::vector<double> laguerre_values(int n, double alpha, double z);
double hermite_norm_sq(int n);
double laguerre_norm_sq(int n, double alpha);

// Couples a factor to the basis diagonalizing its generator: the basis, the
// affine change of coordinates z = A x + b it lives in, the decay rate of
// each index, and which family inverse solutions are expanded in.
struct SpectralFrame {
  BasisSpec basis;
  AffineScaling scaling;
  EvalFamily solution_family = EvalFamily::Primary;
  std::function<double(BasisIndex)> rate;
};

// ScalarOU -> Hermite in z = sqrt(2 kappa) x / sigma, rate kappa n.
// CIR -> GenLaguerre(2 kappa xbar / sigma^2 - 1) in z = 2 kappa x / sigma^2,
//        rate kappa n.
// MultiOU (2x2, diagonal K) -> MultiHermite2D in z = x, rate
//        n1 K00 + n2 K11, solutions expanded in the dual family.
// DoubleNelson has no such frame (recovery uses the moment system) and
// throws std::invalid_argument.
SpectralFrame make_frame(const FactorSpec& spec, int max_degree);

}  // namespace volrec
