#pragma once

// Stationary covariance V = lim_{t->inf} Cov(U(t)) of dU = A U dt + sigma B dW.
//
// V solves the Lyapunov equation A V + V A^H = -sigma^2 C with C = BQB^*. For A in
// (block) Jordan form the solution follows entrywise:
//
//   (lambda_a + conj(lambda_b)) V(r, c) + V(r + 1, c) + V(r, c + 1) = -sigma^2 C(r, c)
//
// where the shifted terms are present only inside the Jordan chains of blocks a and b.
// For 1x1 blocks this is V(k, j) = -sigma^2 b(k, j) / (lambda_k + conj(lambda_j)).

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "warnlab/common.hpp"
#include "warnlab/spectrum.hpp"

namespace warnlab {

struct CovarianceReport {
  double p = 0.0;
  Provenance provenance = Provenance::analytic;
  /// V(k, j) over (generalized) eigenbasis coordinates.
  CMatrix matrix;
  /// Monte Carlo standard error per entry; present for empirical reports.
  std::optional<RMatrix> standard_error;
  /// Dense covariance of each Jordan block with m > 1, keyed by mode index.
  std::map<std::size_t, CMatrix> block_matrices;
  /// Operator-norm value for multiplication models.
  std::optional<double> norm_surrogate;
  /// Set when the simulation horizon is too short to mix.
  bool mixing_warning = false;

  Complex entry(std::size_t k, std::size_t j) const {
    return matrix(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  }
};

struct XiEstimate {
  Complex value{0.0, 0.0};
  std::vector<std::pair<double, Complex>> samples;
  bool converged = false;
  double tolerance = 1e-8;
};

inline Complex stationary_covariance_entry(Complex lambda_k, Complex lambda_j, Complex b_kj, double sigma) {
  if (lambda_k.real() >= 0.0 || lambda_j.real() >= 0.0) {
    throw NumericalError("stationary covariance requires Re(lambda) < 0");
  }
  const Complex denom = lambda_k + std::conj(lambda_j);
  if (denom == Complex{0.0, 0.0}) throw NumericalError("lambda_k + conj(lambda_j) = 0");
  return -sigma * sigma * b_kj / denom;
}

namespace detail {

/// Solves J_a X + X J_b^H = rhs for upper Jordan blocks J_a (lambda_a, rows) and J_b
/// (lambda_b, cols) by back-substitution from the bottom-right corner.
inline CMatrix jordan_pair_solve(Complex lambda_a, Complex lambda_b, const CMatrix& rhs) {
  const Complex denom = lambda_a + std::conj(lambda_b);
  if (denom == Complex{0.0, 0.0}) throw NumericalError("lambda_a + conj(lambda_b) = 0");
  const Eigen::Index rows = rhs.rows();
  const Eigen::Index cols = rhs.cols();
  CMatrix x(rows, cols);
  for (Eigen::Index r = rows - 1; r >= 0; --r) {
    for (Eigen::Index c = cols - 1; c >= 0; --c) {
      Complex acc = rhs(r, c);
      if (r + 1 < rows) acc -= x(r + 1, c);
      if (c + 1 < cols) acc -= x(r, c + 1);
      x(r, c) = acc / denom;
    }
  }
  return x;
}

}  // namespace detail

/// Solution of J V + V J^H = -sigma^2 N for the m x m upper Jordan block J with eigenvalue lambda.
inline CMatrix jordan_stationary_covariance(Complex lambda, std::size_t m, const CMatrix& noise_block,
                                            double sigma) {
  if (lambda.real() >= 0.0) throw NumericalError("Jordan block requires Re(lambda) < 0");
  if (m < 1) throw DomainError("Jordan block size must be >= 1");
  const auto n = static_cast<Eigen::Index>(m);
  if (noise_block.rows() != n || noise_block.cols() != n) throw DomainError("noise block must be m x m");
  CMatrix v = detail::jordan_pair_solve(lambda, lambda, -sigma * sigma * noise_block);
  return 0.5 * (v + v.adjoint());
}

/// Dense vectorized solve of A V + V A^H = -sigma^2 C:
/// (I (x) A + conj(A) (x) I) vec(V) = -sigma^2 vec(C).
inline CMatrix finite_lyapunov_solve(const CMatrix& a, const CMatrix& c, double sigma) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || c.rows() != n || c.cols() != n) throw DomainError("A and C must be square, same size");
  const Eigen::Index nn = n * n;
  CMatrix k = CMatrix::Zero(nn, nn);
  const CMatrix a_conj = a.conjugate();
  for (Eigen::Index col = 0; col < n; ++col) {
    // Block (col, col) of I (x) A.
    k.block(col * n, col * n, n, n) += a;
    // conj(A) (x) I: block (i, j) is conj(a(i, j)) * I.
    for (Eigen::Index row = 0; row < n; ++row) {
      if (a_conj(row, col) != Complex{0.0, 0.0}) {
        k.block(row * n, col * n, n, n).diagonal().array() += a_conj(row, col);
      }
    }
  }
  const Eigen::Map<const CVector> rhs_view(c.data(), nn);
  const CVector rhs = -sigma * sigma * rhs_view;
  const Eigen::PartialPivLU<CMatrix> lu(k);
  if (!(lu.rcond() > 1e-14)) throw NumericalError("Lyapunov system is singular (spectrum touches the axis)");
  const CVector vec_v = lu.solve(rhs);
  const CMatrix v = Eigen::Map<const CMatrix>(vec_v.data(), n, n);
  return 0.5 * (v + v.adjoint());
}

inline double lyapunov_residual(const CMatrix& a, const CMatrix& v, const CMatrix& c, double sigma) {
  return max_abs(a * v + v * a.adjoint() + sigma * sigma * c);
}

/// Closed-form stationary covariance of a SpectralModel at p, assembled block pair by block pair.
inline CovarianceReport analytic_covariance(const SpectralModel& model, double p) {
  const double sigma2 = model.sigma.variance(p);
  const std::size_t modes = model.mode_count();
  std::vector<Complex> lambdas(modes);
  for (std::size_t k = 0; k < modes; ++k) {
    lambdas[k] = model.curves[k](p);
    if (lambdas[k].real() >= 0.0) {
      throw NumericalError("mode " + std::to_string(k) + " is not stable at p = " + std::to_string(p));
    }
  }
  const auto n = static_cast<Eigen::Index>(model.dimension());
  CovarianceReport report;
  report.p = p;
  report.provenance = Provenance::analytic;
  report.matrix = CMatrix::Zero(n, n);
  for (std::size_t a = 0; a < modes; ++a) {
    const auto oa = static_cast<Eigen::Index>(model.block_offset(a));
    const auto ma = static_cast<Eigen::Index>(model.block_size(a));
    for (std::size_t b = 0; b < modes; ++b) {
      const auto ob = static_cast<Eigen::Index>(model.block_offset(b));
      const auto mb = static_cast<Eigen::Index>(model.block_size(b));
      const CMatrix rhs = -sigma2 * model.noise_matrix.block(oa, ob, ma, mb);
      if (rhs.isZero(0.0)) continue;
      report.matrix.block(oa, ob, ma, mb) = detail::jordan_pair_solve(lambdas[a], lambdas[b], rhs);
    }
  }
  report.matrix = 0.5 * (report.matrix + report.matrix.adjoint()).eval();
  for (std::size_t a = 0; a < modes; ++a) {
    if (model.block_size(a) > 1) {
      const auto o = static_cast<Eigen::Index>(model.block_offset(a));
      const auto m = static_cast<Eigen::Index>(model.block_size(a));
      report.block_matrices.emplace(a, report.matrix.block(o, o, m, m));
    }
  }
  return report;
}

/// sigma^2(p) / (2 lambda_{k*}(p)) along a sequence increasing toward p*.
inline XiEstimate noise_limit_xi(const SpectralModel& model, std::span<const double> p_sequence,
                                 double tolerance = 1e-8) {
  if (p_sequence.empty()) throw DomainError("p sequence is empty");
  XiEstimate xi;
  xi.tolerance = tolerance;
  for (std::size_t i = 0; i < p_sequence.size(); ++i) {
    const double p = p_sequence[i];
    if (i > 0 && !(p > p_sequence[i - 1])) throw DomainError("p sequence must be strictly increasing");
    const Complex lambda = model.curves.at(model.critical_index)(p);
    if (lambda == Complex{0.0, 0.0}) {
      throw NumericalError("lambda_k*(p) = 0 at p = " + std::to_string(p));
    }
    xi.samples.emplace_back(p, model.sigma.variance(p) / (2.0 * lambda));
  }
  xi.value = xi.samples.back().second;
  const std::size_t s = xi.samples.size();
  xi.converged = s >= 2 && std::abs(xi.samples[s - 1].second - xi.samples[s - 2].second) < tolerance;
  return xi;
}

/// ||V_inf|| for d U = (p + T_f) U dt + dW: max over the grid of 1 / (2 |p + f|).
inline double multiplication_covariance_norm(const MultiplicationSymbolModel& model, double p) {
  double best = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (model.weights()[i] <= 0.0) continue;
    const double shifted = p + model.symbol()[i];
    if (shifted >= 0.0) {
      throw NumericalError("p + f(x) >= 0 at x = " + std::to_string(model.grid()[i]) +
                           " for p = " + std::to_string(p));
    }
    best = std::max(best, 1.0 / (2.0 * -shifted));
  }
  return best;
}

/// sum_i mu_i |h_i|^2 / (4 (p + f_i)^2) = ||h / (2 (p + f))||^2.
inline double quadratic_form_pairing(const MultiplicationSymbolModel& model, double p,
                                     std::span<const double> h) {
  if (h.size() != model.size()) throw DomainError("grid function does not match the model grid");
  double s = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double shifted = p + model.symbol()[i];
    if (shifted == 0.0) {
      throw NumericalError("p + f(x) vanishes at x = " + std::to_string(model.grid()[i]));
    }
    if (shifted > 0.0) {
      throw NumericalError("p + f(x) > 0 at x = " + std::to_string(model.grid()[i]));
    }
    s += model.weights()[i] * h[i] * h[i] / (4.0 * shifted * shifted);
  }
  return s;
}

/// <V_inf u, u> = sum_i mu_i |u_i|^2 / (2 |p + f_i|) for unit noise.
inline double multiplication_pairing(const MultiplicationSymbolModel& model, double p,
                                     std::span<const double> u) {
  if (u.size() != model.size()) throw DomainError("grid function does not match the model grid");
  double s = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (u[i] == 0.0) continue;
    const double shifted = p + model.symbol()[i];
    if (shifted >= 0.0) {
      throw NumericalError("p + f(x) >= 0 at x = " + std::to_string(model.grid()[i]));
    }
    s += model.weights()[i] * u[i] * u[i] / (2.0 * -shifted);
  }
  return s;
}

/// exp(-(x - center)^2 / 2) normalized in the weighted l2 norm of the grid.
inline std::vector<double> normalized_gaussian(const MultiplicationSymbolModel& model, double center = 0.0) {
  std::vector<double> h(model.size());
  double norm2 = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double d = model.grid()[i] - center;
    h[i] = std::exp(-0.5 * d * d);
    norm2 += model.weights()[i] * h[i] * h[i];
  }
  const double scale = 1.0 / std::sqrt(norm2);
  for (double& v : h) v *= scale;
  return h;
}

}  // namespace warnlab
