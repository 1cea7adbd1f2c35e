#pragma once

// Monte Carlo simulation of the mode-space mild solution
//
//   U(t) = e^{tA} U_0 + sigma int_0^t e^{(t-s)A} B dW_s,   U_0 = 0,
//
// with exact (bias-free) Gaussian transitions over each time step:
//
//   U(t + dt) = e^{A dt} U(t) + xi,   xi ~ N(0, int_0^dt e^{sA} sigma^2 C e^{sA^H} ds).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>

#include "warnlab/common.hpp"
#include "warnlab/lyapunov.hpp"
#include "warnlab/spectrum.hpp"

namespace warnlab {

using RngStream = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Substream seed for item `index` under `master`. Version tag: "splitmix64-v1".
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline constexpr const char* kSeedScheme = "splitmix64-v1";

struct EnsembleConfig {
  double dt = 0.01;
  double horizon = 50.0;
  std::size_t n_trajectories = 1000;
  std::uint64_t master_seed = 0;
  double burn_in = 0.5;

  void validate() const {
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    if (!(horizon > 0.0)) throw DomainError("horizon must be > 0");
    if (!(dt < horizon)) throw DomainError("dt must be smaller than the horizon");
    if (!(burn_in >= 0.0 && burn_in < 1.0)) throw DomainError("burn_in must lie in [0, 1)");
    if (n_trajectories < 2) throw DomainError("n_trajectories must be >= 2");
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9)); }
  std::size_t burn_in_steps() const {
    return static_cast<std::size_t>(std::floor(burn_in * static_cast<double>(steps())));
  }
};

struct ModeState {
  CVector coefficients;
  double time = 0.0;
};

struct EmpiricalCovariance {
  CMatrix matrix;
  RMatrix standard_error;
  std::size_t n_samples = 0;
  bool mixing_warning = false;
};

inline CovarianceReport to_report(const EmpiricalCovariance& emp, double p) {
  CovarianceReport r;
  r.p = p;
  r.provenance = Provenance::empirical;
  r.matrix = emp.matrix;
  r.standard_error = emp.standard_error;
  r.mixing_warning = emp.mixing_warning;
  return r;
}

enum class NoiseKind { real, complex };

/// Q-Wiener increment truncated to the given modes: coefficient j ~ N(0, rho_j dt),
/// circularly symmetric for complex modes.
inline CVector sample_q_wiener_increment(std::span<const double> rho, double dt, RngStream& rng,
                                         NoiseKind kind = NoiseKind::real) {
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  std::normal_distribution<double> normal;
  CVector dw(static_cast<Eigen::Index>(rho.size()));
  for (std::size_t j = 0; j < rho.size(); ++j) {
    if (!(rho[j] >= 0.0) || !std::isfinite(rho[j])) throw DomainError("rho must be finite and >= 0");
    const double sd = std::sqrt(rho[j] * dt);
    const auto i = static_cast<Eigen::Index>(j);
    if (kind == NoiseKind::real) {
      dw(i) = sd * normal(rng);
    } else {
      const double re = normal(rng);
      const double im = normal(rng);
      dw(i) = Complex{re, im} * (sd * M_SQRT1_2);
    }
  }
  return dw;
}

/// Exact one-step OU transition for a single mode.
inline Complex ou_exact_step(Complex x, Complex lambda, double noise_var, double dt, RngStream& rng) {
  const double a = lambda.real();
  if (a >= 0.0) throw NumericalError("ou_exact_step requires Re(lambda) < 0");
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  const Complex mean = std::exp(lambda * dt) * x;
  const double var = noise_var * std::expm1(2.0 * a * dt) / (2.0 * a);
  std::normal_distribution<double> normal;
  if (lambda.imag() == 0.0 && x.imag() == 0.0) return mean + std::sqrt(var) * normal(rng);
  const double re = normal(rng);
  const double im = normal(rng);
  return mean + std::sqrt(0.5 * var) * Complex{re, im};
}

/// e^{tJ} for the m x m upper Jordan block: e^{lambda t} t^n / n! on the n-th superdiagonal.
inline CMatrix jordan_exponential(Complex lambda, std::size_t m, double t) {
  const auto n = static_cast<Eigen::Index>(m);
  CMatrix e = CMatrix::Zero(n, n);
  const Complex base = std::exp(lambda * t);
  Complex term = base;
  for (Eigen::Index d = 0; d < n; ++d) {
    for (Eigen::Index r = 0; r + d < n; ++r) e(r, r + d) = term;
    term *= t / static_cast<double>(d + 1);
  }
  return e;
}

struct JordanBlockSpec {
  Complex lambda;
  std::size_t size = 1;
};

/// Exact Gaussian transition of a block-diagonal Jordan system over a fixed step.
class ExactTransition {
 public:
  /// `noise` is the full instantaneous covariance sigma^2 C in block coordinates.
  ExactTransition(std::vector<JordanBlockSpec> blocks, const CMatrix& noise, double dt)
      : blocks_(std::move(blocks)), dt_(dt) {
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    std::size_t n = 0;
    double rate = 0.0;
    bool all_real = true;
    for (const auto& b : blocks_) {
      if (b.lambda.real() >= 0.0) throw NumericalError("transition requires Re(lambda) < 0");
      n += b.size;
      rate = std::max(rate, std::abs(b.lambda));
      all_real = all_real && b.lambda.imag() == 0.0;
    }
    const auto dim = static_cast<Eigen::Index>(n);
    if (noise.rows() != dim || noise.cols() != dim) throw DomainError("noise matrix has wrong dimension");
    real_noise_ = all_real && noise.imag().isZero(0.0);

    propagator_ = exponential(dt);

    // Composite 16-node Gauss-Legendre on panels short enough that |lambda| h <= 1.
    const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil(rate * dt)));
    const double h = dt / static_cast<double>(panels);
    using GL = boost::math::quadrature::gauss<double, 16>;
    CMatrix cov = CMatrix::Zero(dim, dim);
    for (std::size_t panel = 0; panel < panels; ++panel) {
      const double mid = (static_cast<double>(panel) + 0.5) * h;
      for (std::size_t q = 0; q < GL::abscissa().size(); ++q) {
        for (const double sign : {-1.0, 1.0}) {
          const double s = mid + sign * 0.5 * h * GL::abscissa()[q];
          const CMatrix e = exponential(s);
          cov += (0.5 * h * GL::weights()[q]) * (e * noise * e.adjoint());
        }
      }
    }
    cov = 0.5 * (cov + cov.adjoint()).eval();
    step_covariance_ = cov;

    if (real_noise_) {
      const Eigen::SelfAdjointEigenSolver<RMatrix> eig(cov.real());
      factor_ = (eig.eigenvectors() * clipped_sqrt(eig.eigenvalues()).asDiagonal()).cast<Complex>();
    } else {
      const Eigen::SelfAdjointEigenSolver<CMatrix> eig(cov);
      factor_ = eig.eigenvectors() * clipped_sqrt(eig.eigenvalues()).asDiagonal();
    }
    // Scratch buffers keep step() allocation-free.
    z_.resize(dim);
    next_.resize(dim);
  }

  std::size_t dimension() const { return static_cast<std::size_t>(propagator_.rows()); }
  const CMatrix& propagator() const { return propagator_; }
  const CMatrix& step_covariance() const { return step_covariance_; }
  bool real_noise() const { return real_noise_; }

  void step(CVector& state, RngStream& rng) {
    std::normal_distribution<double> normal;
    const Eigen::Index n = state.size();
    if (real_noise_) {
      for (Eigen::Index i = 0; i < n; ++i) z_(i) = normal(rng);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double re = normal(rng);
        const double im = normal(rng);
        z_(i) = Complex{re, im} * M_SQRT1_2;
      }
    }
    next_.noalias() = propagator_ * state;
    next_.noalias() += factor_ * z_;
    state.swap(next_);
  }

 private:
  // Eigenvalues down to -1e-12 are quadrature round-off and clip to zero.
  static Eigen::VectorXd clipped_sqrt(Eigen::VectorXd ev) {
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i) < -1e-12) throw NumericalError("step covariance is not positive semidefinite");
      ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return ev;
  }

  CMatrix exponential(double t) const {
    const auto n = static_cast<Eigen::Index>(std::accumulate(
        blocks_.begin(), blocks_.end(), std::size_t{0}, [](std::size_t s, const auto& b) { return s + b.size; }));
    CMatrix e = CMatrix::Zero(n, n);
    Eigen::Index off = 0;
    for (const auto& b : blocks_) {
      const auto m = static_cast<Eigen::Index>(b.size);
      e.block(off, off, m, m) = jordan_exponential(b.lambda, b.size, t);
      off += m;
    }
    return e;
  }

  std::vector<JordanBlockSpec> blocks_;
  double dt_;
  bool real_noise_ = true;
  CMatrix propagator_;
  CMatrix step_covariance_;
  CMatrix factor_;
  CVector z_;
  CVector next_;
};

/// One exact step of a single m x m Jordan block driven by sigma^2-scaled noise `noise_block`.
inline CVector jordan_block_step(const CVector& state, Complex lambda, std::size_t m, const CMatrix& noise_block,
                                 double dt, RngStream& rng) {
  if (state.size() != static_cast<Eigen::Index>(m)) throw DomainError("state dimension must equal m");
  ExactTransition transition({{lambda, m}}, noise_block, dt);
  CVector next = state;
  transition.step(next, rng);
  return next;
}

inline ExactTransition make_transition(const SpectralModel& model, double p, double dt) {
  std::vector<JordanBlockSpec> blocks;
  for (std::size_t k = 0; k < model.mode_count(); ++k) blocks.push_back({model.curves[k](p), model.block_size(k)});
  return {std::move(blocks), model.sigma.variance(p) * model.noise_matrix, dt};
}

/// Full path of one trajectory, including the zero initial state.
inline std::vector<ModeState> simulate_path(const SpectralModel& model, double p, const EnsembleConfig& config,
                                            std::uint64_t trajectory_index) {
  config.validate();
  ExactTransition transition = make_transition(model, p, config.dt);
  RngStream rng(derive_seed(config.master_seed, trajectory_index));
  std::vector<ModeState> path;
  CVector state = CVector::Zero(static_cast<Eigen::Index>(model.dimension()));
  path.push_back({state, 0.0});
  for (std::size_t s = 1; s <= config.steps(); ++s) {
    transition.step(state, rng);
    path.push_back({state, static_cast<double>(s) * config.dt});
  }
  return path;
}

/// Ensemble of independent trajectories from U_0 = 0. Each trajectory contributes the time
/// average of x x^H after burn-in; the estimate is their mean and the standard error is the
/// spread across trajectories. Reduction is in trajectory order, so any thread count gives
/// bit-identical results.
inline EmpiricalCovariance simulate_ensemble(const SpectralModel& model, double p, const EnsembleConfig& config,
                                             unsigned threads = 0) {
  config.validate();
  const double abscissa = spectral_abscissa(model, p);
  if (!(abscissa < 0.0)) {
    throw NumericalError("spectral abscissa is " + std::to_string(abscissa) + " >= 0 at p = " + std::to_string(p));
  }
  const ExactTransition prototype = make_transition(model, p, config.dt);
  const auto dim = static_cast<Eigen::Index>(model.dimension());
  const std::size_t steps = config.steps();
  const std::size_t burn = config.burn_in_steps();
  const std::size_t kept = steps - burn;
  const std::size_t n_traj = config.n_trajectories;

  std::vector<CMatrix> per_trajectory(n_traj);
  auto run_range = [&](std::size_t begin, std::size_t end) {
    ExactTransition transition = prototype;
    CVector state(dim);
    CMatrix acc(dim, dim);
    for (std::size_t t = begin; t < end; ++t) {
      RngStream rng(derive_seed(config.master_seed, t));
      state.setZero();
      acc.setZero();
      for (std::size_t s = 1; s <= steps; ++s) {
        transition.step(state, rng);
        if (s > burn) acc.noalias() += state * state.adjoint();
      }
      per_trajectory[t] = acc / static_cast<double>(kept);
    }
  };

  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_traj));
  if (workers <= 1) {
    run_range(0, n_traj);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n_traj + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n_traj, begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
  }

  EmpiricalCovariance out;
  CMatrix mean = CMatrix::Zero(dim, dim);
  for (const auto& y : per_trajectory) mean += y;
  mean /= static_cast<double>(n_traj);
  RMatrix var = RMatrix::Zero(dim, dim);
  for (const auto& y : per_trajectory) var += (y - mean).cwiseAbs2();
  var /= static_cast<double>(n_traj - 1);
  out.matrix = 0.5 * (mean + mean.adjoint());
  out.standard_error = (var / static_cast<double>(n_traj)).cwiseSqrt();
  out.n_samples = n_traj * kept;
  out.mixing_warning = config.horizon * std::abs(abscissa) < 5.0;
  return out;
}

/// Sample covariance about the sample mean (divisor n - 1) with jackknife standard errors.
inline EmpiricalCovariance empirical_covariance(std::span<const CVector> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw DomainError("empirical covariance needs at least 2 samples");
  const Eigen::Index d = samples[0].size();
  CVector sum = CVector::Zero(d);
  CMatrix outer = CMatrix::Zero(d, d);
  for (const auto& x : samples) {
    if (x.size() != d) throw DomainError("samples have mismatched dimensions");
    sum += x;
    outer.noalias() += x * x.adjoint();
  }
  const double nd = static_cast<double>(n);
  auto covariance = [](const CMatrix& s_outer, const CVector& s_sum, double count) {
    const CVector mean = s_sum / count;
    CMatrix c = (s_outer - count * mean * mean.adjoint()) / (count - 1.0);
    return CMatrix(0.5 * (c + c.adjoint()));
  };

  EmpiricalCovariance out;
  out.matrix = covariance(outer, sum, nd);
  out.n_samples = n;
  if (n < 3) {
    out.standard_error = RMatrix::Constant(d, d, std::numeric_limits<double>::infinity());
    return out;
  }
  // Delete-one jackknife: var = (n - 1) / n * sum_i |theta_(i) - theta_bar|^2.
  std::vector<CMatrix> leave_one_out;
  leave_one_out.reserve(n);
  CMatrix bar = CMatrix::Zero(d, d);
  for (const auto& x : samples) {
    leave_one_out.push_back(covariance(outer - x * x.adjoint(), sum - x, nd - 1.0));
    bar += leave_one_out.back();
  }
  bar /= nd;
  RMatrix var = RMatrix::Zero(d, d);
  for (const auto& c : leave_one_out) var += (c - bar).cwiseAbs2();
  out.standard_error = ((nd - 1.0) / nd * var).cwiseSqrt();
  return out;
}

}  // namespace warnlab
