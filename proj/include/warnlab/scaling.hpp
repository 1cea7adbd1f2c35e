#pragma once

// Parameter sweeps toward the bifurcation, log-log power-law fits and warning-sign verdicts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "warnlab/common.hpp"
#include "warnlab/lyapunov.hpp"
#include "warnlab/sde.hpp"
#include "warnlab/spectrum.hpp"

namespace warnlab {

struct QuantitySpec {
  enum class Kind { critical_diagonal, entry, jordan_block, multiplication_norm, gaussian_pairing, weyl_pairing };

  Kind kind = Kind::critical_diagonal;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t k = 0;
  std::optional<double> center{};

  static QuantitySpec critical_diagonal() { return {.kind = Kind::critical_diagonal}; }
  static QuantitySpec entry(std::size_t row, std::size_t col) {
    return {.kind = Kind::entry, .row = row, .col = col};
  }
  static QuantitySpec jordan_block() { return {.kind = Kind::jordan_block}; }
  static QuantitySpec multiplication_norm() { return {.kind = Kind::multiplication_norm}; }
  static QuantitySpec gaussian_pairing() { return {.kind = Kind::gaussian_pairing}; }
  static QuantitySpec weyl_pairing(std::size_t k, std::optional<double> center = std::nullopt) {
    return {.kind = Kind::weyl_pairing, .k = k, .center = center};
  }

  bool for_spectral_models() const {
    return kind == Kind::critical_diagonal || kind == Kind::entry || kind == Kind::jordan_block;
  }
};

struct QuantitySeries {
  std::string name;
  std::vector<double> values;
  std::vector<double> standard_errors;  // empty for analytic series
  Provenance provenance = Provenance::analytic;
};

struct SweepResult {
  std::vector<double> p_values;
  double p_star = 0.0;
  std::vector<QuantitySeries> quantities;
  /// Full covariance per p for spectral sweeps.
  std::vector<CovarianceReport> reports;
  std::vector<std::string> warnings;

  const QuantitySeries& quantity(const std::string& name) const {
    for (const auto& q : quantities) {
      if (q.name == name) return q;
    }
    throw DomainError("quantity '" + name + "' is not part of the sweep");
  }

  std::vector<double> distances() const {
    std::vector<double> d(p_values.size());
    std::transform(p_values.begin(), p_values.end(), d.begin(), [&](double p) { return std::abs(p - p_star); });
    return d;
  }
};

struct ScalingFit {
  double exponent = 0.0;
  double log_prefactor = 0.0;
  double r_squared = 0.0;
  double residual_sd = 0.0;
  std::vector<std::size_t> window;
};

enum class Classification { diverging, finite_limit, vanishing, inconclusive };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::diverging: return "diverging";
    case Classification::finite_limit: return "finite_limit";
    case Classification::vanishing: return "vanishing";
    case Classification::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct WarningSignVerdict {
  Classification classification = Classification::inconclusive;
  double fitted_exponent = 0.0;
  ScalingFit fit;
  std::optional<XiEstimate> xi;
  std::string rationale;
};

/// A sweep point failed; `p` names it.
class SweepError : public NumericalError {
 public:
  SweepError(double p, const std::string& what)
      : NumericalError("sweep failed at p = " + std::to_string(p) + ": " + what), p_(p) {}
  double p() const { return p_; }

 private:
  double p_;
};

struct SweepEngine {
  enum class Kind { analytic, empirical };
  Kind kind = Kind::analytic;
  EnsembleConfig ensemble;
  unsigned threads = 0;

  static SweepEngine analytic() { return {}; }
  static SweepEngine empirical(EnsembleConfig config, unsigned threads = 0) {
    return {.kind = Kind::empirical, .ensemble = config, .threads = threads};
  }
};

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Ordinary least squares of log(value) on log(distance).
inline ScalingFit fit_power_law(std::span<const double> distances, std::span<const double> values) {
  if (distances.size() != values.size()) throw DomainError("distances and values differ in length");
  if (distances.size() < 3) throw DomainError("power-law fit needs at least 3 points");
  const std::size_t n = distances.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(distances[i] > 0.0) || !(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw DomainError("power-law fit needs strictly positive, finite inputs");
    }
    x[i] = std::log(distances[i]);
    y[i] = std::log(values[i]);
  }
  const double nd = static_cast<double>(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= nd;
  my /= nd;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("power-law fit needs at least two distinct distances");
  ScalingFit fit;
  fit.exponent = sxy / sxx;
  fit.log_prefactor = my - fit.exponent * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.log_prefactor + fit.exponent * x[i]);
    ss_res += r * r;
  }
  // A constant series is reproduced exactly by slope 0.
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : (ss_res == 0.0 ? 1.0 : 0.0);
  fit.residual_sd = std::sqrt(ss_res / (nd - 2.0));
  fit.window.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.window[i] = i;
  return fit;
}

struct FitWindow {
  enum class Kind { all, last_decade };
  Kind kind = Kind::last_decade;
  /// Optional band on |p - p*| applied before the decade rule.
  std::optional<double> max_distance{};
  std::optional<double> min_distance{};

  static FitWindow all() { return {.kind = Kind::all}; }
  static FitWindow last_decade() { return {.kind = Kind::last_decade}; }
};

/// Indices used for a fit. The last-decade rule keeps points with distance <= 10 * smallest
/// distance, widened to the three closest points when the decade holds fewer than three.
inline std::vector<std::size_t> select_window(std::span<const double> distances, const FitWindow& window) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (window.max_distance && distances[i] > *window.max_distance) continue;
    if (window.min_distance && distances[i] < *window.min_distance) continue;
    idx.push_back(i);
  }
  if (window.kind == FitWindow::Kind::all || idx.size() <= 3) return idx;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  const double cutoff = 10.0 * distances[idx.front()] * (1.0 + 1e-12);
  std::size_t keep = 0;
  while (keep < idx.size() && distances[idx[keep]] <= cutoff) ++keep;
  idx.resize(std::max<std::size_t>(keep, 3));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline ScalingFit fit_power_law(std::span<const double> distances, std::span<const double> values,
                                const FitWindow& window) {
  const auto idx = select_window(distances, window);
  std::vector<double> d, v;
  for (std::size_t i : idx) {
    d.push_back(distances[i]);
    v.push_back(values[i]);
  }
  ScalingFit fit = fit_power_law(d, v);
  fit.window = idx;
  return fit;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace detail {

inline void check_grid(std::span<const double> p_grid, double p_star) {
  if (p_grid.empty()) throw DomainError("p grid is empty");
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    if (!(p_grid[i] < p_star)) {
      throw DomainError("p grid value " + std::to_string(p_grid[i]) + " is not below p* = " + std::to_string(p_star));
    }
    if (i > 0 && !(p_grid[i] > p_grid[i - 1])) throw DomainError("p grid must be strictly increasing");
  }
}

inline std::string entry_name(const char* prefix, std::size_t r, std::size_t c) {
  return std::string(prefix) + "_" + std::to_string(r) + "_" + std::to_string(c);
}

}  // namespace detail

inline std::string quantity_name(const QuantitySpec& spec) {
  switch (spec.kind) {
    case QuantitySpec::Kind::critical_diagonal: return "critical_diagonal";
    case QuantitySpec::Kind::entry: return detail::entry_name("entry", spec.row, spec.col);
    case QuantitySpec::Kind::jordan_block: return "jordan";
    case QuantitySpec::Kind::multiplication_norm: return "multiplication_norm";
    case QuantitySpec::Kind::gaussian_pairing: return "gaussian_pairing";
    case QuantitySpec::Kind::weyl_pairing: return "weyl_k" + std::to_string(spec.k);
  }
  return "unknown";
}

/// Sweep over a discrete-spectrum model. Jordan-block specs expand to one series per
/// upper-triangular entry of the critical block, named jordan_R_C.
inline SweepResult run_parameter_sweep(const SpectralModel& model, double p_star, std::span<const double> p_grid,
                                       std::span<const QuantitySpec> specs,
                                       const SweepEngine& engine = SweepEngine::analytic()) {
  detail::check_grid(p_grid, p_star);
  if (engine.kind == SweepEngine::Kind::empirical) engine.ensemble.validate();
  const std::size_t dim = model.dimension();
  const std::size_t crit = model.block_offset(model.critical_index);
  const std::size_t crit_m = model.block_size(model.critical_index);

  struct Slot {
    std::string name;
    std::size_t row, col;
  };
  std::vector<Slot> slots;
  for (const auto& spec : specs) {
    switch (spec.kind) {
      case QuantitySpec::Kind::critical_diagonal:
        slots.push_back({quantity_name(spec), crit, crit});
        break;
      case QuantitySpec::Kind::entry:
        if (spec.row >= dim || spec.col >= dim) {
          throw DomainError("entry (" + std::to_string(spec.row) + ", " + std::to_string(spec.col) +
                            ") is outside the " + std::to_string(dim) + "-dimensional model");
        }
        slots.push_back({quantity_name(spec), spec.row, spec.col});
        break;
      case QuantitySpec::Kind::jordan_block:
        for (std::size_t r = 0; r < crit_m; ++r) {
          for (std::size_t c = r; c < crit_m; ++c) slots.push_back({detail::entry_name("jordan", r, c), crit + r, crit + c});
        }
        break;
      default:
        throw DomainError("quantity '" + quantity_name(spec) + "' needs a multiplication model");
    }
  }

  const Provenance prov =
      engine.kind == SweepEngine::Kind::analytic ? Provenance::analytic : Provenance::empirical;
  SweepResult result;
  result.p_values.assign(p_grid.begin(), p_grid.end());
  result.p_star = p_star;
  for (const auto& s : slots) result.quantities.push_back({s.name, {}, {}, prov});

  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    const double p = p_grid[i];
    CovarianceReport report;
    try {
      if (engine.kind == SweepEngine::Kind::analytic) {
        report = analytic_covariance(model, p);
      } else {
        EnsembleConfig cfg = engine.ensemble;
        cfg.master_seed = derive_seed(engine.ensemble.master_seed, i);
        report = to_report(simulate_ensemble(model, p, cfg, engine.threads), p);
        if (report.mixing_warning) {
          result.warnings.push_back("insufficient mixing at p = " + std::to_string(p) +
                                    ": horizon * |spectral abscissa| < 5");
        }
      }
    } catch (const Error& e) {
      throw SweepError(p, e.what());
    }
    for (std::size_t q = 0; q < slots.size(); ++q) {
      const auto r = static_cast<Eigen::Index>(slots[q].row);
      const auto c = static_cast<Eigen::Index>(slots[q].col);
      result.quantities[q].values.push_back(std::abs(report.matrix(r, c)));
      if (report.standard_error) result.quantities[q].standard_errors.push_back((*report.standard_error)(r, c));
    }
    result.reports.push_back(std::move(report));
  }
  return result;
}

/// Sweep over a multiplication model (analytic only).
inline SweepResult run_parameter_sweep(const MultiplicationSymbolModel& model, std::span<const double> p_grid,
                                       std::span<const QuantitySpec> specs) {
  const double p_star = bifurcation_parameter(model);
  detail::check_grid(p_grid, p_star);
  SweepResult result;
  result.p_values.assign(p_grid.begin(), p_grid.end());
  result.p_star = p_star;

  std::vector<double> gaussian;
  std::vector<WeylVector> bumps(specs.size());
  for (std::size_t q = 0; q < specs.size(); ++q) {
    const auto& spec = specs[q];
    if (spec.for_spectral_models()) {
      throw DomainError("quantity '" + quantity_name(spec) + "' needs a spectral model");
    }
    if (spec.kind == QuantitySpec::Kind::gaussian_pairing && gaussian.empty()) {
      gaussian = normalized_gaussian(model, model.argmax_points().front());
    }
    if (spec.kind == QuantitySpec::Kind::weyl_pairing) {
      bumps[q] = build_weyl_sequence(model, spec.k, spec.center.value_or(model.argmax_points().front()));
    }
    result.quantities.push_back({quantity_name(spec), {}, {}, Provenance::analytic});
  }

  for (double p : p_grid) {
    try {
      for (std::size_t q = 0; q < specs.size(); ++q) {
        double value = 0.0;
        switch (specs[q].kind) {
          case QuantitySpec::Kind::multiplication_norm: value = multiplication_covariance_norm(model, p); break;
          case QuantitySpec::Kind::gaussian_pairing: value = quadratic_form_pairing(model, p, gaussian); break;
          case QuantitySpec::Kind::weyl_pairing: value = multiplication_pairing(model, p, bumps[q].coefficients); break;
          default: break;
        }
        result.quantities[q].values.push_back(value);
      }
    } catch (const Error& e) {
      throw SweepError(p, e.what());
    }
  }
  return result;
}

/// <V_inf u_k, u_k> along p_grid for each Weyl width index k, with unit noise.
inline SweepResult weyl_divergence_probe(const MultiplicationSymbolModel& model, std::span<const std::size_t> k_values,
                                         std::span<const double> p_grid, std::optional<double> center = std::nullopt) {
  std::vector<QuantitySpec> specs;
  for (std::size_t k : k_values) specs.push_back(QuantitySpec::weyl_pairing(k, center));
  return run_parameter_sweep(model, p_grid, specs);
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

inline WarningSignVerdict classify_warning_sign(const SweepResult& sweep, const std::string& quantity,
                                                std::optional<XiEstimate> xi = std::nullopt,
                                                const FitWindow& window = FitWindow::last_decade()) {
  const auto& series = sweep.quantity(quantity);
  const auto d = sweep.distances();
  WarningSignVerdict v;
  v.fit = fit_power_law(d, series.values, window);
  v.fitted_exponent = v.fit.exponent;
  v.xi = std::move(xi);
  const double e = v.fit.exponent;
  const double r2 = v.fit.r_squared;
  char buf[160];
  if (e < -0.5 && r2 > 0.99) {
    v.classification = Classification::diverging;
    std::snprintf(buf, sizeof buf, "exponent %.6g < -0.5 with R^2 = %.6g > 0.99", e, r2);
  } else if (e > 0.5) {
    v.classification = Classification::vanishing;
    std::snprintf(buf, sizeof buf, "exponent %.6g > 0.5: quantity tends to zero", e);
  } else if (std::abs(e) <= 0.1 && (!v.xi || v.xi->converged)) {
    v.classification = Classification::finite_limit;
    std::snprintf(buf, sizeof buf, "|exponent| = %.6g <= 0.1%s", std::abs(e),
                  v.xi ? " and the noise ratio limit converged" : "");
  } else {
    v.classification = Classification::inconclusive;
    std::snprintf(buf, sizeof buf, "exponent %.6g with R^2 = %.6g meets no classification threshold", e, r2);
  }
  v.rationale = buf;
  return v;
}

}  // namespace warnlab
