#include "volrec/numerics.hpp"

#include <cmath>

namespace volrec {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the monic
// orthogonal-polynomial recurrence p_{k+1} = (z - a_k) p_k - b_k p_{k-1};
// weight_i = mu0 * (first eigenvector component)^2.
QuadratureRule golub_welsch(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            double mu0) {
  const int n = static_cast<int>(a.size());
  Eigen::VectorXd sub(n - 1 > 0 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(b[k]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(a, sub);
  QuadratureRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd b(n);
  b[0] = 0.0;
  for (int k = 1; k < n; ++k) b[k] = static_cast<double>(k);
  return golub_welsch(a, b, 1.0);
}

QuadratureRule gauss_laguerre(int n, double alpha) {
  if (n < 1) throw std::invalid_argument("gauss_laguerre: n must be >= 1");
  if (alpha <= -1.0)
    throw std::invalid_argument("gauss_laguerre: alpha must exceed -1");
  Eigen::VectorXd a(n), b(n);
  b[0] = 0.0;
  for (int k = 0; k < n; ++k) {
    a[k] = 2.0 * k + alpha + 1.0;
    if (k >= 1) b[k] = k * (k + alpha);
  }
  return golub_welsch(a, b, 1.0);
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(n);
  off[0] = 0.0;
  for (int k = 1; k < n; ++k)
    off[k] = static_cast<double>(k) * k / (4.0 * k * k - 1.0);
  QuadratureRule rule = golub_welsch(diag, off, 2.0);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  rule.nodes = (rule.nodes.array() * half + mid).matrix();
  rule.weights *= half;
  return rule;
}

namespace {

double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a,
                     double fa, double b, double fb, double fm, double whole,
                     double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0) throw QuadratureError("adaptive_simpson: depth exhausted");
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_step(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = simpson(a, fa, b, fb, fm);
  return adaptive_step(f, a, fa, b, fb, fm, whole, tol, max_depth);
}

double fd_derivative(const std::function<double(double)>& f, double x,
                     double scale) {
  const double h = 1e-4 * std::max(scale, std::abs(x));
  const double d1 = (f(x + h) - f(x - h)) / (2.0 * h);
  const double d2 = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h;
  return (4.0 * d2 - d1) / 3.0;
}

double expm1_ratio(double a) {
  if (std::abs(a) < 1e-8) return 1.0 - 0.5 * a + a * a / 6.0;
  return -std::expm1(-a) / a;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x51afd7ed558ccd25ULL));
}

}  // namespace volrec
