#pragma once

// CSV and JSON serialization of covariance reports, sweeps, fits and verdicts.
//
//   covariance CSV: p,k,j,re,im,provenance[,standard_error]
//   quantity CSV:   p,quantity,value,stderr,provenance

#include <charconv>
#include <ostream>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "warnlab/lyapunov.hpp"
#include "warnlab/scaling.hpp"

namespace warnlab {

/// Shortest representation that round-trips.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline void write_covariance_csv(std::ostream& os, std::span<const CovarianceReport> reports) {
  bool with_se = false;
  for (const auto& r : reports) with_se = with_se || r.standard_error.has_value();
  os << "p,k,j,re,im,provenance" << (with_se ? ",standard_error" : "") << '\n';
  for (const auto& r : reports) {
    for (Eigen::Index k = 0; k < r.matrix.rows(); ++k) {
      for (Eigen::Index j = 0; j < r.matrix.cols(); ++j) {
        os << format_double(r.p) << ',' << k << ',' << j << ',' << format_double(r.matrix(k, j).real()) << ','
           << format_double(r.matrix(k, j).imag()) << ',' << to_string(r.provenance);
        if (with_se) {
          os << ',';
          if (r.standard_error) os << format_double((*r.standard_error)(k, j));
        }
        os << '\n';
      }
    }
  }
}

inline void write_quantity_csv(std::ostream& os, const SweepResult& sweep, const QuantitySeries& series) {
  os << "p,quantity,value,stderr,provenance\n";
  for (std::size_t i = 0; i < sweep.p_values.size(); ++i) {
    os << format_double(sweep.p_values[i]) << ',' << series.name << ',' << format_double(series.values[i]) << ',';
    if (i < series.standard_errors.size()) os << format_double(series.standard_errors[i]);
    os << ',' << to_string(series.provenance) << '\n';
  }
}

inline nlohmann::json complex_to_json(Complex z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline nlohmann::json matrix_to_json(const CMatrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const CovarianceReport& r) {
  nlohmann::json j{{"p", r.p}, {"provenance", to_string(r.provenance)}, {"matrix", matrix_to_json(r.matrix)}};
  if (r.standard_error) {
    auto se = nlohmann::json::array();
    for (Eigen::Index a = 0; a < r.standard_error->rows(); ++a) {
      auto row = nlohmann::json::array();
      for (Eigen::Index b = 0; b < r.standard_error->cols(); ++b) row.push_back((*r.standard_error)(a, b));
      se.push_back(std::move(row));
    }
    j["standard_error"] = std::move(se);
  }
  if (!r.block_matrices.empty()) {
    auto blocks = nlohmann::json::object();
    for (const auto& [mode, m] : r.block_matrices) blocks[std::to_string(mode)] = matrix_to_json(m);
    j["block_matrices"] = std::move(blocks);
  }
  if (r.norm_surrogate) j["norm_surrogate"] = *r.norm_surrogate;
  if (r.provenance == Provenance::empirical) j["mixing_warning"] = r.mixing_warning;
  return j;
}

inline nlohmann::json to_json(const ScalingFit& f) {
  return {{"exponent", f.exponent},
          {"log_prefactor", f.log_prefactor},
          {"r_squared", f.r_squared},
          {"residual_sd", f.residual_sd},
          {"window", f.window}};
}

inline nlohmann::json to_json(const XiEstimate& xi) {
  auto samples = nlohmann::json::array();
  for (const auto& [p, v] : xi.samples) samples.push_back({{"p", p}, {"ratio", complex_to_json(v)}});
  return {{"value", complex_to_json(xi.value)},
          {"converged", xi.converged},
          {"tolerance", xi.tolerance},
          {"samples", std::move(samples)}};
}

inline nlohmann::json to_json(const WarningSignVerdict& v) {
  nlohmann::json j{{"classification", to_string(v.classification)},
                   {"fitted_exponent", v.fitted_exponent},
                   {"fit", to_json(v.fit)},
                   {"rationale", v.rationale}};
  if (v.xi) j["xi"] = to_json(*v.xi);
  return j;
}

inline nlohmann::json to_json(const QuantitySeries& q) {
  nlohmann::json j{{"name", q.name}, {"values", q.values}, {"provenance", to_string(q.provenance)}};
  if (!q.standard_errors.empty()) j["standard_errors"] = q.standard_errors;
  return j;
}

inline nlohmann::json to_json(const SweepResult& s) {
  auto quantities = nlohmann::json::array();
  for (const auto& q : s.quantities) quantities.push_back(to_json(q));
  return {{"p_values", s.p_values}, {"p_star", s.p_star}, {"quantities", std::move(quantities)},
          {"warnings", s.warnings}};
}

}  // namespace warnlab
