#pragma once

// Reference solutions written independently of the library code paths.

#include <cmath>
#include <complex>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

/// A V + V A^H = -s2 C via the row-major vectorization and a full-pivot LU.
inline CMatrix lyapunov_kron(const CMatrix& a, const CMatrix& c, double s2) {
  const Eigen::Index n = a.rows();
  CMatrix k = CMatrix::Zero(n * n, n * n);
  // row-major: index(i, j) = i n + j; (A V)(i, j) = sum_l a(i, l) V(l, j); (V A^H)(i, j) = sum_l V(i, l) conj(a(j, l))
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index l = 0; l < n; ++l) {
        k(i * n + j, l * n + j) += a(i, l);
        k(i * n + j, i * n + l) += std::conj(a(j, l));
      }
    }
  }
  Eigen::VectorXcd rhs(n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) rhs(i * n + j) = -s2 * c(i, j);
  }
  const Eigen::VectorXcd x = k.fullPivLu().solve(rhs);
  CMatrix v(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) v(i, j) = x(i * n + j);
  }
  return v;
}

/// Entry (r, c) of the integral over [0, inf) of e^{tA} s2 C e^{tA^H}.
inline Complex lyapunov_integral_entry(const CMatrix& a, const CMatrix& c, double s2, Eigen::Index r,
                                       Eigen::Index col) {
  auto integrand = [&](double t, bool imag) {
    const CMatrix e = (t * a).exp();
    const Complex v = (e * c * e.adjoint())(r, col) * s2;
    return imag ? v.imag() : v.real();
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  const double re = integrator.integrate([&](double t) { return integrand(t, false); });
  const double im = integrator.integrate([&](double t) { return integrand(t, true); });
  return {re, im};
}

/// Van Loan: exp([[-A, N], [0, A^H]] dt) = [[., F12], [0, F22]] and the integral over
/// [0, dt] of e^{sA} N e^{sA^H} equals F22^H F12.
inline CMatrix van_loan_step_covariance(const CMatrix& a, const CMatrix& noise, double dt) {
  const Eigen::Index n = a.rows();
  CMatrix m = CMatrix::Zero(2 * n, 2 * n);
  m.topLeftCorner(n, n) = -a;
  m.topRightCorner(n, n) = noise;
  m.bottomRightCorner(n, n) = a.adjoint();
  const CMatrix f = (dt * m).exp();
  return f.bottomRightCorner(n, n).adjoint() * f.topRightCorner(n, n);
}

/// Upper Jordan block with eigenvalue lambda.
inline CMatrix jordan(Complex lambda, Eigen::Index m) {
  CMatrix j = CMatrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    j(i, i) = lambda;
    if (i + 1 < m) j(i, i + 1) = 1.0;
  }
  return j;
}

inline CMatrix random_psd(Eigen::Index n, std::mt19937_64& rng, bool complex_entries) {
  std::normal_distribution<double> normal;
  CMatrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = Complex{normal(rng), complex_entries ? normal(rng) : 0.0};
  }
  return g * g.adjoint();
}

/// Adaptive Gauss-Kronrod integral of g over [lo, hi], split at the given breakpoints.
template <class F>
double integrate(F g, std::initializer_list<double> breaks) {
  double total = 0.0;
  const double* prev = nullptr;
  for (const double& b : breaks) {
    if (prev) total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, *prev, b, 20, 1e-13);
    prev = &b;
  }
  return total;
}

}  // namespace oracle
