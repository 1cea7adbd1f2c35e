#pragma once

// Operator models for linear stochastic evolution equations dU = A(p) U dt + sigma B dW.
//
// Two representations are supported:
//   SpectralModel              discrete spectrum: eigenvalue curves lambda_k(p), optional
//                              Jordan structure, noise matrix b = <BQB* u_k, u_j> in the
//                              (generalized) eigenbasis
//   MultiplicationSymbolModel  continuous spectrum after diagonalization: (T_f u)(x) = f(x) u(x)
//                              sampled on a grid with quadrature weights
//
// The covariance convention used by every module is the matrix one: V(k, j) is row k,
// column j of the solution of A V + V A^H = -sigma^2 b, with b(k, j) indexed the same way.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "warnlab/common.hpp"

namespace warnlab {

// ---------------------------------------------------------------------------
// Discrete spectrum
// ---------------------------------------------------------------------------

struct EigenvalueCurve {
  std::size_t id = 0;
  std::function<Complex(double)> value_at;
  std::string description;

  Complex operator()(double p) const {
    if (!value_at) throw DomainError("eigenvalue curve " + std::to_string(id) + " has no definition");
    const Complex v = value_at(p);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw DomainError("eigenvalue curve " + std::to_string(id) + " is undefined at p = " +
                        std::to_string(p));
    }
    return v;
  }
};

/// lambda(p) = sum_n c_n p^n with complex coefficients.
inline EigenvalueCurve polynomial_curve(std::size_t id, std::vector<Complex> coefficients,
                                        std::string description = {}) {
  return {id,
          [c = std::move(coefficients)](double p) {
            Complex acc{0.0, 0.0};
            for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * p + *it;
            return acc;
          },
          std::move(description)};
}

/// Noise intensity law. Stored as the variance sigma^2(p) so that laws such as
/// sigma^2 = |p| are represented without a sqrt/square round trip.
class NoiseLaw {
 public:
  NoiseLaw() : NoiseLaw([](double) { return 1.0; }, false) {}

  static NoiseLaw constant(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be finite and >= 0");
    return {[s2 = sigma * sigma](double) { return s2; }, false};
  }

  /// sigma^2(p) = coefficient * |p - p_ref|^exponent
  static NoiseLaw power(double coefficient, double exponent, double p_ref = 0.0) {
    if (!(coefficient >= 0.0)) throw DomainError("noise coefficient must be >= 0");
    return {[=](double p) {
              const double d = std::abs(p - p_ref);
              if (exponent == 1.0) return coefficient * d;
              if (exponent == 2.0) return coefficient * d * d;
              return coefficient * std::pow(d, exponent);
            },
            exponent != 0.0};
  }

  static NoiseLaw custom(std::function<double(double)> variance) { return {std::move(variance), true}; }

  double variance(double p) const {
    const double v = variance_(p);
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("noise variance must be finite and >= 0 at p = " + std::to_string(p));
    }
    return v;
  }
  double amplitude(double p) const { return std::sqrt(variance(p)); }
  bool depends_on_p() const { return depends_on_p_; }

 private:
  NoiseLaw(std::function<double(double)> variance, bool depends_on_p)
      : variance_(std::move(variance)), depends_on_p_(depends_on_p) {}

  std::function<double(double)> variance_;
  bool depends_on_p_ = false;
};

struct SpectralModel {
  std::vector<EigenvalueCurve> curves;
  /// Block size m_k per curve; empty means all ones.
  std::vector<std::size_t> jordan_sizes;
  /// Hermitian PSD, dimension = sum of block sizes.
  CMatrix noise_matrix;
  NoiseLaw sigma;
  std::size_t critical_index = 0;

  std::size_t mode_count() const { return curves.size(); }

  std::size_t block_size(std::size_t mode) const {
    return jordan_sizes.empty() ? 1 : jordan_sizes.at(mode);
  }

  std::size_t block_offset(std::size_t mode) const {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < mode; ++k) offset += block_size(k);
    return offset;
  }

  std::size_t dimension() const { return block_offset(curves.size()); }

  bool has_jordan_blocks() const {
    return std::any_of(jordan_sizes.begin(), jordan_sizes.end(), [](std::size_t m) { return m > 1; });
  }

  /// Block-diagonal matrix of upper Jordan blocks, A u^l = u^{l-1} + lambda u^l.
  CMatrix drift_matrix(double p) const {
    const std::size_t n = dimension();
    CMatrix a = CMatrix::Zero(n, n);
    for (std::size_t k = 0; k < curves.size(); ++k) {
      const std::size_t off = block_offset(k);
      const std::size_t m = block_size(k);
      const Complex lambda = curves[k](p);
      for (std::size_t r = 0; r < m; ++r) {
        a(off + r, off + r) = lambda;
        if (r + 1 < m) a(off + r, off + r + 1) = 1.0;
      }
    }
    return a;
  }
};

/// Structural checks: dimensions, Hermitian PSD noise, Jordan sizes, critical index.
inline void validate_structure(const SpectralModel& model, double tolerance = 1e-10) {
  if (model.curves.empty()) throw DomainError("model has no eigenvalue curves");
  if (!model.jordan_sizes.empty() && model.jordan_sizes.size() != model.curves.size()) {
    throw DomainError("jordan_sizes must have one entry per eigenvalue curve");
  }
  for (std::size_t m : model.jordan_sizes) {
    if (m < 1) throw DomainError("jordan block sizes must be >= 1");
  }
  if (model.critical_index >= model.curves.size()) throw DomainError("critical_index out of range");
  const auto n = static_cast<Eigen::Index>(model.dimension());
  if (model.noise_matrix.rows() != n || model.noise_matrix.cols() != n) {
    throw DomainError("noise_matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (max_abs(model.noise_matrix - model.noise_matrix.adjoint()) > tolerance) {
    throw DomainError("noise_matrix is not Hermitian");
  }
  const Eigen::SelfAdjointEigenSolver<CMatrix> eig(model.noise_matrix, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -tolerance * std::max(1.0, max_abs(model.noise_matrix))) {
    throw DomainError("noise_matrix is not positive semidefinite");
  }
}

/// max_k Re(lambda_k(p)).
inline double spectral_abscissa(const SpectralModel& model, double p) {
  if (model.curves.empty()) throw DomainError("model has no eigenvalue curves");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& curve : model.curves) best = std::max(best, curve(p).real());
  return best;
}

/// Root of Re(lambda_{k*}(p)) = 0 in [p_lo, p_hi] by bisection.
inline double bifurcation_parameter(const SpectralModel& model, double p_lo, double p_hi,
                                    double tolerance = 1e-12) {
  if (!(p_lo < p_hi)) throw DomainError("bisection bracket must satisfy p_lo < p_hi");
  const auto& curve = model.curves.at(model.critical_index);
  auto g = [&](double p) { return curve(p).real(); };
  double g_lo = g(p_lo);
  const double g_hi = g(p_hi);
  if (g_lo == 0.0) return p_lo;
  if (g_hi == 0.0) return p_hi;
  if ((g_lo < 0.0) == (g_hi < 0.0)) {
    throw DomainError("no sign change of Re(lambda_k*) in [" + std::to_string(p_lo) + ", " +
                      std::to_string(p_hi) + "]");
  }
  while (p_hi - p_lo > tolerance) {
    const double mid = 0.5 * (p_lo + p_hi);
    if (mid <= p_lo || mid >= p_hi) break;
    const double g_mid = g(mid);
    if (g_mid == 0.0) return mid;
    if ((g_mid < 0.0) == (g_lo < 0.0)) {
      p_lo = mid;
      g_lo = g_mid;
    } else {
      p_hi = mid;
    }
  }
  return 0.5 * (p_lo + p_hi);
}

/// Every non-critical curve must satisfy Re(lambda_k(p*)) <= -gap.
inline void check_spectral_gap(const SpectralModel& model, double p_star, double gap) {
  for (std::size_t k = 0; k < model.curves.size(); ++k) {
    if (k == model.critical_index) continue;
    const double re = model.curves[k](p_star).real();
    if (re > -gap) {
      throw DomainError("mode " + std::to_string(k) + " violates the spectral gap at p*: Re(lambda) = " +
                        std::to_string(re));
    }
  }
}

/// Sampled continuity: |lambda(p_{i+1}) - lambda(p_i)| <= budget * (p_{i+1} - p_i).
inline void check_continuity(const SpectralModel& model, std::span<const double> p_grid,
                             double lipschitz_budget) {
  for (const auto& curve : model.curves) {
    for (std::size_t i = 0; i + 1 < p_grid.size(); ++i) {
      const double jump = std::abs(curve(p_grid[i + 1]) - curve(p_grid[i]));
      if (jump > lipschitz_budget * std::abs(p_grid[i + 1] - p_grid[i])) {
        throw DomainError("eigenvalue curve " + std::to_string(curve.id) + " jumps by " +
                          std::to_string(jump) + " between p = " + std::to_string(p_grid[i]) +
                          " and p = " + std::to_string(p_grid[i + 1]));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Continuous spectrum: multiplication operators
// ---------------------------------------------------------------------------

struct Grid {
  std::vector<double> points;
  std::vector<double> weights;
};

/// Trapezoid weights for an arbitrary strictly increasing grid.
inline std::vector<double> trapezoid_weights(std::span<const double> x) {
  std::vector<double> w(x.size(), 0.0);
  if (x.size() < 2) return w;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double half = 0.5 * (x[i + 1] - x[i]);
    w[i] += half;
    w[i + 1] += half;
  }
  return w;
}

/// Uniform grid on [lo, hi] with spacing close to `spacing`; points are lo + (hi - lo) i / n
/// so that symmetric domains contain 0 exactly.
inline Grid uniform_grid(double lo, double hi, double spacing) {
  if (!(lo < hi)) throw DomainError("grid requires lo < hi");
  if (!(spacing > 0.0)) throw DomainError("grid spacing must be > 0");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / spacing));
  if (n < 2) throw DomainError("grid spacing too coarse for the domain");
  Grid g;
  g.points.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    g.points[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
  }
  g.points.back() = hi;
  g.weights = trapezoid_weights(g.points);
  return g;
}

class MultiplicationSymbolModel {
 public:
  MultiplicationSymbolModel(std::vector<double> grid, std::vector<double> weights,
                            std::vector<double> symbol)
      : grid_(std::move(grid)), weights_(std::move(weights)), symbol_(std::move(symbol)) {
    if (grid_.size() < 3) throw DomainError("symbol grid needs at least 3 points");
    if (weights_.size() != grid_.size() || symbol_.size() != grid_.size()) {
      throw DomainError("grid, weights and symbol must have equal length");
    }
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!std::isfinite(grid_[i])) throw DomainError("grid point is not finite");
      if (i > 0 && !(grid_[i] > grid_[i - 1])) throw DomainError("grid must be strictly increasing");
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
        throw DomainError("weights must be finite and >= 0");
      }
      if (!std::isfinite(symbol_[i])) {
        throw DomainError("symbol is not finite at x = " + std::to_string(grid_[i]));
      }
    }
    esssup_ = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (weights_[i] > 0.0) esssup_ = std::max(esssup_, symbol_[i]);
    }
    if (!std::isfinite(esssup_)) throw DomainError("symbol grid has no positive weight");
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (weights_[i] > 0.0 && symbol_[i] == esssup_) argmax_.push_back(i);
    }
  }

  static MultiplicationSymbolModel tabulate(const Grid& grid, const std::function<double(double)>& f) {
    std::vector<double> values(grid.points.size());
    std::transform(grid.points.begin(), grid.points.end(), values.begin(), f);
    return {grid.points, grid.weights, std::move(values)};
  }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& symbol() const { return symbol_; }
  std::size_t size() const { return grid_.size(); }

  double esssup() const { return esssup_; }
  const std::vector<std::size_t>& argmax_indices() const { return argmax_; }
  std::vector<double> argmax_points() const {
    std::vector<double> pts;
    for (std::size_t i : argmax_) pts.push_back(grid_[i]);
    return pts;
  }
  double total_measure() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

  std::size_t nearest_index(double x) const {
    auto it = std::lower_bound(grid_.begin(), grid_.end(), x);
    if (it == grid_.begin()) return 0;
    if (it == grid_.end()) return grid_.size() - 1;
    const auto hi = static_cast<std::size_t>(it - grid_.begin());
    return (x - grid_[hi - 1] <= grid_[hi] - x) ? hi - 1 : hi;
  }

 private:
  std::vector<double> grid_;
  std::vector<double> weights_;
  std::vector<double> symbol_;
  double esssup_ = 0.0;
  std::vector<std::size_t> argmax_;
};

/// f(x) = -x^2 on [-half_width, half_width]: the Fourier symbol of the 1D Laplacian.
inline MultiplicationSymbolModel make_neg_square_symbol(double half_width = 10.0, double spacing = 1e-3) {
  return MultiplicationSymbolModel::tabulate(uniform_grid(-half_width, half_width, spacing),
                                             [](double x) { return -x * x; });
}

inline MultiplicationSymbolModel make_constant_symbol(double value, double lo = -10.0, double hi = 10.0,
                                                      double spacing = 1e-3) {
  return MultiplicationSymbolModel::tabulate(uniform_grid(lo, hi, spacing), [=](double) { return value; });
}

/// One polynomial piece on [lo, hi); the last piece also owns its right endpoint.
struct SymbolPiece {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> coefficients;  // c0 + c1 x + c2 x^2 + ...
};

inline MultiplicationSymbolModel make_piecewise_symbol(std::vector<SymbolPiece> pieces, double lo,
                                                       double hi, double spacing) {
  if (pieces.empty()) throw DomainError("piecewise symbol needs at least one piece");
  std::sort(pieces.begin(), pieces.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
  auto eval = [pieces](double x) {
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const auto& pc = pieces[i];
      const bool last = i + 1 == pieces.size();
      if (x >= pc.lo && (x < pc.hi || (last && x <= pc.hi))) {
        double acc = 0.0;
        for (auto it = pc.coefficients.rbegin(); it != pc.coefficients.rend(); ++it) acc = acc * x + *it;
        return acc;
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  return MultiplicationSymbolModel::tabulate(uniform_grid(lo, hi, spacing), eval);
}

/// Tabulated (x, f(x)) pairs with trapezoid weights.
inline MultiplicationSymbolModel make_tabulated_symbol(std::vector<double> x, std::vector<double> f) {
  auto w = trapezoid_weights(x);
  return {std::move(x), std::move(w), std::move(f)};
}

inline double bifurcation_parameter(const MultiplicationSymbolModel& model) { return -model.esssup(); }

/// Largest single quadrature weight; the default atom threshold is a multiple of it.
inline double max_cell_weight(const MultiplicationSymbolModel& model) {
  return *std::max_element(model.weights().begin(), model.weights().end());
}

/// Values whose level set carries weight above `atom_threshold` (default: ten grid cells).
inline std::vector<double> point_spectrum(const MultiplicationSymbolModel& model,
                                          std::optional<double> atom_threshold = std::nullopt,
                                          double value_tolerance = 1e-12) {
  const double threshold = atom_threshold.value_or(10.0 * max_cell_weight(model));
  const auto& f = model.symbol();
  const auto& w = model.weights();
  std::vector<std::size_t> order(f.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });

  std::vector<double> atoms;
  std::size_t i = 0;
  while (i < order.size()) {
    const double level = f[order[i]];
    double mass = 0.0;
    std::size_t j = i;
    while (j < order.size() && f[order[j]] - level <= value_tolerance) mass += w[order[j++]];
    if (mass > threshold) atoms.push_back(level);
    i = j;
  }
  return atoms;
}

// ---------------------------------------------------------------------------
// Weyl sequences
// ---------------------------------------------------------------------------

struct WeylVector {
  std::vector<double> coefficients;  // one value per grid point of the owning model
  std::size_t width_index = 1;
  double center = 0.0;

  double norm_squared(const MultiplicationSymbolModel& model) const {
    double s = 0.0;
    for (std::size_t i = 0; i < coefficients.size(); ++i) {
      s += model.weights()[i] * coefficients[i] * coefficients[i];
    }
    return s;
  }
};

/// Normalized triangular bump max(0, 1 - k|x - center|), supported on [center - 1/k, center + 1/k].
inline WeylVector build_weyl_sequence(const MultiplicationSymbolModel& model, std::size_t k, double center,
                                      double argmax_tolerance = 1e-12) {
  if (k == 0) throw DomainError("Weyl width index k must be positive");
  const std::size_t nearest = model.nearest_index(center);
  if (std::abs(model.symbol()[nearest] - model.esssup()) > argmax_tolerance) {
    throw DomainError("Weyl center " + std::to_string(center) + " is not an argmax point of the symbol");
  }
  const double kk = static_cast<double>(k);
  WeylVector u{std::vector<double>(model.size(), 0.0), k, center};
  std::size_t support_points = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double v = 1.0 - kk * std::abs(model.grid()[i] - center);
    if (v > 0.0) {
      u.coefficients[i] = v;
      if (model.weights()[i] > 0.0) ++support_points;
    }
  }
  if (support_points < 3) {
    throw NumericalError("Weyl bump for k = " + std::to_string(k) + " covers " +
                         std::to_string(support_points) + " grid points; at least 3 are required");
  }
  const double scale = 1.0 / std::sqrt(u.norm_squared(model));
  for (double& c : u.coefficients) c *= scale;
  return u;
}

/// ||(f - lambda_star) u|| in the weighted l2 norm.
inline double weyl_defect(const MultiplicationSymbolModel& model, const WeylVector& u, double lambda_star) {
  if (u.coefficients.size() != model.size()) throw DomainError("Weyl vector does not match the model grid");
  double s = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double r = (model.symbol()[i] - lambda_star) * u.coefficients[i];
    s += model.weights()[i] * r * r;
  }
  return std::sqrt(s);
}

/// sup of |f - lambda_star| over the support of u.
inline double weyl_defect_bound(const MultiplicationSymbolModel& model, const WeylVector& u,
                                double lambda_star) {
  double bound = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (u.coefficients[i] != 0.0) bound = std::max(bound, std::abs(model.symbol()[i] - lambda_star));
  }
  return bound;
}

// ---------------------------------------------------------------------------
// Resolvent bound on finite matrices
// ---------------------------------------------------------------------------

/// True iff ||(M - z)^{-1}||_2 >= 1 / dist(z, spec M) - 1e-9.
inline bool resolvent_bound_check(const CMatrix& matrix, Complex z) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) throw DomainError("matrix must be square");
  const CMatrix shifted = matrix - z * CMatrix::Identity(matrix.rows(), matrix.cols());
  const Eigen::JacobiSVD<CMatrix> svd(shifted);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (smin <= 1e-13 * std::max(1.0, smax)) {
    throw NumericalError("matrix - z Id is numerically singular");
  }
  const double resolvent_norm = 1.0 / smin;

  const Eigen::ComplexEigenSolver<CMatrix> eig(matrix, false);
  double dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    dist = std::min(dist, std::abs(z - eig.eigenvalues()(i)));
  }
  return resolvent_norm >= 1.0 / dist - 1e-9;
}

}  // namespace warnlab
