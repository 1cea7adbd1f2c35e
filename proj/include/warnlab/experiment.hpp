#pragma once

// Experiment configuration (JSON) and the analytic / simulate / weyl / validate commands.
//
// Exit-code contract used by the command-line front end:
//   0 success, 2 configuration error (ConfigError), 3 numerical failure (NumericalError).

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "warnlab/io.hpp"
#include "warnlab/lyapunov.hpp"
#include "warnlab/scaling.hpp"
#include "warnlab/sde.hpp"
#include "warnlab/spectrum.hpp"

namespace warnlab {

inline constexpr int kReportSchemaVersion = 1;

/// Invalid configuration; `field()` is the dotted path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class OutputFormat { csv, json, both };

inline OutputFormat parse_output_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  if (s == "both") return OutputFormat::both;
  throw ConfigError("output.format", "expected csv, json or both, got '" + s + "'");
}

inline const char* to_string(OutputFormat f) {
  switch (f) {
    case OutputFormat::csv: return "csv";
    case OutputFormat::json: return "json";
    case OutputFormat::both: return "both";
  }
  return "both";
}

/// Command-line overrides.
struct RunOptions {
  std::optional<std::filesystem::path> out{};
  unsigned threads = 0;
  std::optional<std::uint64_t> seed{};
  std::optional<OutputFormat> format{};
};

using OperatorModel = std::variant<SpectralModel, MultiplicationSymbolModel>;

struct ResolvedExperiment {
  nlohmann::json config_echo;
  OperatorModel model;
  double p_star = 0.0;
  std::vector<double> p_grid;
  std::vector<QuantitySpec> quantities;
  SweepEngine engine;
  FitWindow fit_window;
  std::vector<std::size_t> weyl_k_values;
  std::optional<double> weyl_center;
  std::filesystem::path output_dir;
  OutputFormat format = OutputFormat::both;

  bool is_spectral() const { return std::holds_alternative<SpectralModel>(model); }
};

struct RunReport {
  nlohmann::json json;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw ConfigError(path + "." + key, "missing required field");
  return *it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline double number_or(const json& obj, const std::string& key, double fallback, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return as_number(*it, path + "." + key);
}

inline std::uint64_t as_u64(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

/// A real number or a [re, im] pair.
inline Complex as_complex(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  throw ConfigError(path, "expected a number or a [re, im] pair");
}

inline CMatrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  CMatrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      throw ConfigError(rp, "expected a row of length " + std::to_string(n));
    }
    for (Eigen::Index c = 0; c < n; ++c) {
      m(r, c) = as_complex(row[static_cast<std::size_t>(c)], rp + "[" + std::to_string(c) + "]");
    }
  }
  return m;
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline std::vector<double> read_symbol_table(const std::filesystem::path& file, std::vector<double>& f_out) {
  std::ifstream in(file);
  if (!in) throw ConfigError("model.symbol.csv", "cannot open '" + file.string() + "'");
  std::vector<double> x;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a = 0.0, b = 0.0;
    if (!(ss >> a >> b)) {
      if (x.empty() && lineno == 1) continue;  // header
      throw ConfigError("model.symbol.csv", "line " + std::to_string(lineno) + " is not an 'x,f' pair");
    }
    x.push_back(a);
    f_out.push_back(b);
  }
  return x;
}

inline SpectralModel build_spectral_model(const json& m, double& p_star, json& echo) {
  SpectralModel model;
  const auto& modes = require(m, "modes", "model");
  if (!modes.is_array() || modes.empty()) throw ConfigError("model.modes", "expected a non-empty array");
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const std::string path = "model.modes[" + std::to_string(k) + "]";
    const auto& mode = modes[k];
    const auto& ev = require(mode, "eigenvalue", path);
    std::vector<Complex> coefficients;
    if (ev.is_array()) {
      for (std::size_t c = 0; c < ev.size(); ++c) {
        coefficients.push_back(as_complex(ev[c], path + ".eigenvalue[" + std::to_string(c) + "]"));
      }
    } else {
      coefficients.push_back(as_complex(ev, path + ".eigenvalue"));
    }
    if (coefficients.empty()) throw ConfigError(path + ".eigenvalue", "needs at least one coefficient");
    const std::string label = mode.contains("label") ? as_string(mode["label"], path + ".label") : "";
    model.curves.push_back(polynomial_curve(k, std::move(coefficients), label));
    const auto size = mode.contains("jordan_size") ? as_u64(mode["jordan_size"], path + ".jordan_size") : 1;
    if (size < 1) throw ConfigError(path + ".jordan_size", "must be >= 1");
    model.jordan_sizes.push_back(static_cast<std::size_t>(size));
  }
  model.critical_index =
      m.contains("critical_index") ? static_cast<std::size_t>(as_u64(m["critical_index"], "model.critical_index")) : 0;
  if (model.critical_index >= model.curves.size()) throw ConfigError("model.critical_index", "out of range");

  model.noise_matrix = as_matrix(require(m, "noise_matrix", "model"), "model.noise_matrix");
  try {
    validate_structure(model);
  } catch (const DomainError& e) {
    throw ConfigError("model.noise_matrix", e.what());
  }

  double lo = -10.0, hi = 10.0;
  if (m.contains("bracket")) {
    const auto& b = m["bracket"];
    if (!b.is_array() || b.size() != 2) throw ConfigError("model.bracket", "expected [p_lo, p_hi]");
    lo = as_number(b[0], "model.bracket[0]");
    hi = as_number(b[1], "model.bracket[1]");
  }
  try {
    p_star = bifurcation_parameter(model, lo, hi);
  } catch (const DomainError& e) {
    throw ConfigError("model.bracket", e.what());
  }
  try {
    check_spectral_gap(model, p_star, number_or(m, "spectral_gap", 1e-6, "model"));
  } catch (const DomainError& e) {
    throw ConfigError("model.spectral_gap", e.what());
  }

  const json sigma = m.contains("sigma") ? m["sigma"] : json{{"law", "constant"}, {"value", 1.0}};
  const std::string law = as_string(require(sigma, "law", "model.sigma"), "model.sigma.law");
  if (law == "constant") {
    const double value = as_number(require(sigma, "value", "model.sigma"), "model.sigma.value");
    if (!(value >= 0.0)) throw ConfigError("model.sigma.value", "must be >= 0");
    model.sigma = NoiseLaw::constant(value);
  } else if (law == "power") {
    const double c = number_or(sigma, "coefficient", 1.0, "model.sigma");
    const double a = as_number(require(sigma, "exponent", "model.sigma"), "model.sigma.exponent");
    if (!(c >= 0.0)) throw ConfigError("model.sigma.coefficient", "must be >= 0");
    model.sigma = NoiseLaw::power(c, a, p_star);
  } else {
    throw ConfigError("model.sigma.law", "expected 'constant' or 'power', got '" + law + "'");
  }
  echo["model"]["sigma"] = sigma;
  return model;
}

inline MultiplicationSymbolModel build_multiplication_model(const json& m, const std::filesystem::path& base_dir,
                                                            json& echo) {
  const auto& symbol = require(m, "symbol", "model");
  double lo = -10.0, hi = 10.0;
  if (m.contains("domain")) {
    const auto& d = m["domain"];
    if (!d.is_array() || d.size() != 2) throw ConfigError("model.domain", "expected [lo, hi]");
    lo = as_number(d[0], "model.domain[0]");
    hi = as_number(d[1], "model.domain[1]");
  }
  const double spacing = number_or(m, "spacing", 1e-3, "model");
  try {
    if (symbol.contains("csv")) {
      std::filesystem::path file = as_string(symbol["csv"], "model.symbol.csv");
      if (file.is_relative()) file = base_dir / file;
      echo["model"]["symbol"]["csv"] = std::filesystem::absolute(file).lexically_normal().string();
      std::vector<double> f;
      auto x = read_symbol_table(file, f);
      return make_tabulated_symbol(std::move(x), std::move(f));
    }
    const std::string builtin = as_string(require(symbol, "builtin", "model.symbol"), "model.symbol.builtin");
    if (builtin == "neg_square") {
      return MultiplicationSymbolModel::tabulate(uniform_grid(lo, hi, spacing), [](double x) { return -x * x; });
    }
    if (builtin == "constant") {
      return make_constant_symbol(as_number(require(symbol, "value", "model.symbol"), "model.symbol.value"), lo, hi,
                                  spacing);
    }
    if (builtin == "piecewise") {
      const auto& pieces = require(symbol, "pieces", "model.symbol");
      if (!pieces.is_array() || pieces.empty()) throw ConfigError("model.symbol.pieces", "expected a non-empty array");
      std::vector<SymbolPiece> parsed;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        const std::string path = "model.symbol.pieces[" + std::to_string(i) + "]";
        SymbolPiece piece;
        piece.lo = as_number(require(pieces[i], "lo", path), path + ".lo");
        piece.hi = as_number(require(pieces[i], "hi", path), path + ".hi");
        const auto& c = require(pieces[i], "coefficients", path);
        if (!c.is_array() || c.empty()) throw ConfigError(path + ".coefficients", "expected a non-empty array");
        for (std::size_t k = 0; k < c.size(); ++k) {
          piece.coefficients.push_back(as_number(c[k], path + ".coefficients[" + std::to_string(k) + "]"));
        }
        parsed.push_back(std::move(piece));
      }
      return make_piecewise_symbol(std::move(parsed), lo, hi, spacing);
    }
    throw ConfigError("model.symbol.builtin", "unknown built-in '" + builtin + "'");
  } catch (const DomainError& e) {
    throw ConfigError("model.symbol", e.what());
  }
}

inline std::vector<double> build_grid(const json& sweep, double p_star) {
  std::vector<double> grid;
  if (sweep.contains("values")) {
    const auto& v = sweep["values"];
    if (!v.is_array() || v.empty()) throw ConfigError("sweep.values", "expected a non-empty array");
    for (std::size_t i = 0; i < v.size(); ++i) grid.push_back(as_number(v[i], "sweep.values[" + std::to_string(i) + "]"));
  } else {
    const double start = as_number(require(sweep, "start", "sweep"), "sweep.start");
    const auto count = static_cast<std::size_t>(as_u64(require(sweep, "count", "sweep"), "sweep.count"));
    if (count < 1) throw ConfigError("sweep.count", "must be >= 1");
    const std::string spacing = sweep.contains("spacing") ? as_string(sweep["spacing"], "sweep.spacing") : "geometric";
    if (spacing == "linear") {
      const double stop = as_number(require(sweep, "stop", "sweep"), "sweep.stop");
      for (std::size_t i = 0; i < count; ++i) {
        grid.push_back(count == 1 ? start
                                  : start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1));
      }
    } else if (spacing == "geometric") {
      const double d0 = p_star - start;
      if (!(d0 > 0.0)) throw ConfigError("sweep.start", "must lie below p* = " + format_double(p_star));
      if (sweep.contains("stop") && count > 1) {
        const double d1 = p_star - as_number(sweep["stop"], "sweep.stop");
        if (!(d1 > 0.0)) throw ConfigError("sweep.stop", "must lie below p* = " + format_double(p_star));
        for (std::size_t i = 0; i < count; ++i) {
          const double t = static_cast<double>(i) / static_cast<double>(count - 1);
          grid.push_back(p_star - d0 * std::pow(d1 / d0, t));
        }
      } else {
        const double factor = number_or(sweep, "factor", 0.5, "sweep");
        if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("sweep.factor", "must lie in (0, 1)");
        for (std::size_t i = 0; i < count; ++i) grid.push_back(p_star - d0 * std::pow(factor, static_cast<double>(i)));
      }
    } else {
      throw ConfigError("sweep.spacing", "expected 'linear' or 'geometric', got '" + spacing + "'");
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] < p_star)) {
      throw ConfigError("sweep", "p = " + format_double(grid[i]) + " is not below p* = " + format_double(p_star));
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("sweep", "p grid must be strictly increasing");
  }
  return grid;
}

inline QuantitySpec parse_quantity(const json& q, const std::string& path) {
  const std::string kind = q.is_string() ? q.get<std::string>() : as_string(require(q, "kind", path), path + ".kind");
  if (kind == "critical_diagonal") return QuantitySpec::critical_diagonal();
  if (kind == "jordan_block") return QuantitySpec::jordan_block();
  if (kind == "multiplication_norm") return QuantitySpec::multiplication_norm();
  if (kind == "gaussian_pairing") return QuantitySpec::gaussian_pairing();
  if (kind == "entry") {
    if (!q.is_object()) throw ConfigError(path, "entry needs row and col");
    return QuantitySpec::entry(static_cast<std::size_t>(as_u64(require(q, "row", path), path + ".row")),
                               static_cast<std::size_t>(as_u64(require(q, "col", path), path + ".col")));
  }
  if (kind == "weyl_pairing") {
    if (!q.is_object()) throw ConfigError(path, "weyl_pairing needs k");
    std::optional<double> center;
    if (q.contains("center")) center = as_number(q["center"], path + ".center");
    return QuantitySpec::weyl_pairing(static_cast<std::size_t>(as_u64(require(q, "k", path), path + ".k")), center);
  }
  throw ConfigError(path, "unknown quantity '" + kind + "'");
}

}  // namespace detail

/// Parses and checks a configuration; every failure is a ConfigError naming the field.
inline ResolvedExperiment resolve_experiment(const nlohmann::json& config, const std::filesystem::path& base_dir,
                                             const RunOptions& options = {}) {
  using detail::as_number;
  using detail::as_string;
  using detail::require;
  if (!config.is_object()) throw ConfigError("<root>", "expected a JSON object");
  if (config.contains("schema_version") && config["schema_version"] != 1) {
    throw ConfigError("schema_version", "unsupported schema version");
  }
  ResolvedExperiment rx;
  rx.config_echo = config;
  rx.config_echo["schema_version"] = 1;

  const auto& m = require(config, "model", "<root>");
  const std::string kind = as_string(require(m, "kind", "model"), "model.kind");
  if (kind == "spectral") {
    rx.model = detail::build_spectral_model(m, rx.p_star, rx.config_echo);
  } else if (kind == "multiplication") {
    rx.model = detail::build_multiplication_model(m, base_dir, rx.config_echo);
    rx.p_star = bifurcation_parameter(std::get<MultiplicationSymbolModel>(rx.model));
  } else {
    throw ConfigError("model.kind", "expected 'spectral' or 'multiplication', got '" + kind + "'");
  }

  rx.p_grid = detail::build_grid(require(config, "sweep", "<root>"), rx.p_star);
  rx.config_echo["sweep"] = {{"values", rx.p_grid}};

  if (rx.is_spectral()) {
    const auto& model = std::get<SpectralModel>(rx.model);
    const double budget = detail::number_or(m, "lipschitz_budget", 1e6, "model");
    try {
      check_continuity(model, rx.p_grid, budget);
    } catch (const DomainError& e) {
      throw ConfigError("model.lipschitz_budget", e.what());
    }
  }

  // Engine.
  const nlohmann::json engine = config.contains("engine") ? config["engine"] : nlohmann::json{{"kind", "analytic"}};
  const std::string engine_kind = as_string(require(engine, "kind", "engine"), "engine.kind");
  if (engine_kind == "analytic") {
    rx.engine = SweepEngine::analytic();
  } else if (engine_kind == "empirical") {
    EnsembleConfig ec;
    ec.dt = detail::number_or(engine, "dt", ec.dt, "engine");
    ec.horizon = detail::number_or(engine, "horizon", ec.horizon, "engine");
    ec.burn_in = detail::number_or(engine, "burn_in", ec.burn_in, "engine");
    if (engine.contains("n_trajectories")) {
      ec.n_trajectories = static_cast<std::size_t>(detail::as_u64(engine["n_trajectories"], "engine.n_trajectories"));
    }
    if (engine.contains("master_seed")) ec.master_seed = detail::as_u64(engine["master_seed"], "engine.master_seed");
    if (options.seed) ec.master_seed = *options.seed;
    try {
      ec.validate();
    } catch (const DomainError& e) {
      throw ConfigError("engine", e.what());
    }
    if (!rx.is_spectral()) throw ConfigError("engine.kind", "the empirical engine needs a spectral model");
    rx.engine = SweepEngine::empirical(ec, options.threads);
    rx.config_echo["engine"] = {{"kind", "empirical"},         {"dt", ec.dt},
                                {"horizon", ec.horizon},       {"burn_in", ec.burn_in},
                                {"n_trajectories", ec.n_trajectories}, {"master_seed", ec.master_seed}};
  } else {
    throw ConfigError("engine.kind", "expected 'analytic' or 'empirical', got '" + engine_kind + "'");
  }
  rx.engine.threads = options.threads;

  // Quantities.
  if (config.contains("quantities")) {
    const auto& qs = config["quantities"];
    if (!qs.is_array() || qs.empty()) throw ConfigError("quantities", "expected a non-empty array");
    for (std::size_t i = 0; i < qs.size(); ++i) {
      rx.quantities.push_back(detail::parse_quantity(qs[i], "quantities[" + std::to_string(i) + "]"));
    }
  } else if (rx.is_spectral()) {
    const auto& model = std::get<SpectralModel>(rx.model);
    rx.quantities.push_back(model.block_size(model.critical_index) > 1 ? QuantitySpec::jordan_block()
                                                                       : QuantitySpec::critical_diagonal());
  } else {
    rx.quantities.push_back(QuantitySpec::multiplication_norm());
  }
  for (std::size_t i = 0; i < rx.quantities.size(); ++i) {
    const auto& q = rx.quantities[i];
    const std::string path = "quantities[" + std::to_string(i) + "]";
    if (q.for_spectral_models() != rx.is_spectral()) {
      throw ConfigError(path, "'" + quantity_name(q) + "' is not valid for a " + kind + " model");
    }
    if (q.kind == QuantitySpec::Kind::entry) {
      const auto dim = std::get<SpectralModel>(rx.model).dimension();
      if (q.row >= dim || q.col >= dim) throw ConfigError(path, "entry index outside the model dimension");
    }
    if (q.kind == QuantitySpec::Kind::weyl_pairing && q.k == 0) throw ConfigError(path + ".k", "must be positive");
  }

  if (config.contains("weyl")) {
    const auto& w = config["weyl"];
    if (rx.is_spectral()) throw ConfigError("weyl", "Weyl probes need a multiplication model");
    const auto& ks = require(w, "k_values", "weyl");
    if (!ks.is_array() || ks.empty()) throw ConfigError("weyl.k_values", "expected a non-empty array");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto k = detail::as_u64(ks[i], "weyl.k_values[" + std::to_string(i) + "]");
      if (k == 0) throw ConfigError("weyl.k_values[" + std::to_string(i) + "]", "must be positive");
      rx.weyl_k_values.push_back(static_cast<std::size_t>(k));
    }
    if (w.contains("center")) {
      rx.weyl_center = as_number(w["center"], "weyl.center");
      const auto& mm = std::get<MultiplicationSymbolModel>(rx.model);
      if (mm.symbol()[mm.nearest_index(*rx.weyl_center)] != mm.esssup()) {
        throw ConfigError("weyl.center", "not an argmax point of the symbol");
      }
    }
  }

  if (config.contains("fit")) {
    const auto& f = config["fit"];
    const std::string window = f.contains("window") ? as_string(f["window"], "fit.window") : "last_decade";
    if (window == "all") {
      rx.fit_window = FitWindow::all();
    } else if (window == "last_decade") {
      rx.fit_window = FitWindow::last_decade();
    } else {
      throw ConfigError("fit.window", "expected 'all' or 'last_decade'");
    }
    if (f.contains("max_distance")) rx.fit_window.max_distance = as_number(f["max_distance"], "fit.max_distance");
    if (f.contains("min_distance")) rx.fit_window.min_distance = as_number(f["min_distance"], "fit.min_distance");
  }

  const nlohmann::json output = config.contains("output") ? config["output"] : nlohmann::json::object();
  rx.output_dir = options.out ? *options.out
                              : std::filesystem::path(output.contains("dir") ? as_string(output["dir"], "output.dir")
                                                                             : "warnlab-out");
  rx.format = options.format ? *options.format
                             : (output.contains("format") ? parse_output_format(as_string(output["format"], "output.format"))
                                                          : OutputFormat::both);
  return rx;
}

inline ResolvedExperiment load_experiment(const std::filesystem::path& file, const RunOptions& options = {}) {
  std::ifstream in(file);
  if (!in) throw ConfigError("--config", "cannot open '" + file.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    throw ConfigError(file.string(), "JSON parse error at line " + std::to_string(line) + ", column " +
                                         std::to_string(col));
  }
  return resolve_experiment(config, file.parent_path(), options);
}

/// Human-readable diagnostics for a configuration that resolved successfully.
inline std::string describe(const ResolvedExperiment& rx) {
  std::ostringstream os;
  os << "p* = " << format_double(rx.p_star) << '\n';
  os << "sweep: " << rx.p_grid.size() << " points in [" << format_double(rx.p_grid.front()) << ", "
     << format_double(rx.p_grid.back()) << "]\n";
  if (rx.is_spectral()) {
    const auto& model = std::get<SpectralModel>(rx.model);
    os << "spectral abscissa at p = " << format_double(rx.p_grid.front()) << ": "
       << format_double(spectral_abscissa(model, rx.p_grid.front())) << '\n';
    os << "spectral abscissa at p = " << format_double(rx.p_grid.back()) << ": "
       << format_double(spectral_abscissa(model, rx.p_grid.back())) << '\n';
    os << "modes: " << model.mode_count() << " (dimension " << model.dimension() << ")\n";
  } else {
    const auto& model = std::get<MultiplicationSymbolModel>(rx.model);
    os << "esssup(f) = " << format_double(model.esssup()) << '\n';
    os << "grid points: " << model.size() << ", total measure " << format_double(model.total_measure()) << '\n';
    os << "argmax points: " << model.argmax_indices().size() << '\n';
  }
  os << "quantities:";
  for (const auto& q : rx.quantities) os << ' ' << quantity_name(q);
  os << '\n';
  return os.str();
}

namespace detail {

inline std::string file_safe(std::string name) {
  for (char& c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  }
  return name;
}

inline void write_text(const std::filesystem::path& file, const std::string& text, RunReport& report) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  out << text;
  report.files.push_back(file);
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Fits, verdicts and files for a finished sweep.
inline RunReport finish_run(const ResolvedExperiment& rx, const std::string& command, const SweepResult& sweep,
                            std::optional<XiEstimate> xi, nlohmann::json extra, double resolve_seconds,
                            double compute_seconds) {
  const auto t_write = Clock::now();
  RunReport report;
  report.warnings = sweep.warnings;
  nlohmann::json results = nlohmann::json::array();
  for (const auto& q : sweep.quantities) {
    nlohmann::json entry{{"quantity", q.name}, {"series", to_json(q)}};
    if (sweep.p_values.size() >= 3) {
      const bool critical = q.name == "critical_diagonal";
      try {
        const auto verdict = classify_warning_sign(sweep, q.name, critical ? xi : std::nullopt, rx.fit_window);
        entry["fit"] = to_json(verdict.fit);
        entry["verdict"] = to_json(verdict);
      } catch (const DomainError& e) {
        entry["fit_error"] = e.what();
      }
    }
    results.push_back(std::move(entry));
  }

  report.json = {{"schema_version", kReportSchemaVersion},
                 {"command", command},
                 {"config_echo", rx.config_echo},
                 {"p_star", rx.p_star},
                 {"sweep", to_json(sweep)},
                 {"results", std::move(results)},
                 {"warnings", sweep.warnings},
                 {"seed_record",
                  {{"master_seed", rx.engine.ensemble.master_seed},
                   {"scheme", kSeedScheme},
                   {"per_point", "derive_seed(master_seed, point_index)"},
                   {"per_trajectory", "derive_seed(point_seed, trajectory_index)"}}}};
  for (auto& [key, value] : extra.items()) report.json[key] = value;

  std::filesystem::create_directories(rx.output_dir);
  if (rx.format != OutputFormat::json) {
    for (const auto& q : sweep.quantities) {
      std::ostringstream os;
      write_quantity_csv(os, sweep, q);
      write_text(rx.output_dir / (file_safe(q.name) + ".csv"), os.str(), report);
    }
    if (!sweep.reports.empty()) {
      std::ostringstream os;
      write_covariance_csv(os, sweep.reports);
      write_text(rx.output_dir / "covariance.csv", os.str(), report);
    }
  }
  report.json["timing"] = {{"resolve_seconds", resolve_seconds},
                           {"compute_seconds", compute_seconds},
                           {"write_seconds", seconds_since(t_write)}};
  if (rx.format != OutputFormat::csv) {
    write_text(rx.output_dir / "report.json", report.json.dump(2) + "\n", report);
  }
  return report;
}

inline std::optional<XiEstimate> xi_for(const ResolvedExperiment& rx) {
  const auto& model = std::get<SpectralModel>(rx.model);
  if (!model.sigma.depends_on_p()) return std::nullopt;
  return noise_limit_xi(model, rx.p_grid);
}

}  // namespace detail

inline RunReport cmd_analytic(const ResolvedExperiment& rx, double resolve_seconds = 0.0) {
  if (rx.engine.kind != SweepEngine::Kind::analytic) {
    throw ConfigError("engine.kind", "the analytic command needs engine 'analytic'");
  }
  const auto t0 = detail::Clock::now();
  SweepResult sweep;
  std::optional<XiEstimate> xi;
  if (rx.is_spectral()) {
    const auto& model = std::get<SpectralModel>(rx.model);
    sweep = run_parameter_sweep(model, rx.p_star, rx.p_grid, rx.quantities, rx.engine);
    xi = detail::xi_for(rx);
  } else {
    sweep = run_parameter_sweep(std::get<MultiplicationSymbolModel>(rx.model), rx.p_grid, rx.quantities);
  }
  const double compute = detail::seconds_since(t0);
  return detail::finish_run(rx, "analytic", sweep, xi, nlohmann::json::object(), resolve_seconds, compute);
}

inline RunReport cmd_simulate(const ResolvedExperiment& rx, double resolve_seconds = 0.0) {
  if (rx.engine.kind != SweepEngine::Kind::empirical) {
    throw ConfigError("engine.kind", "the simulate command needs engine 'empirical'");
  }
  const auto t0 = detail::Clock::now();
  const auto& model = std::get<SpectralModel>(rx.model);
  const SweepResult sweep = run_parameter_sweep(model, rx.p_star, rx.p_grid, rx.quantities, rx.engine);
  const double compute = detail::seconds_since(t0);
  return detail::finish_run(rx, "simulate", sweep, detail::xi_for(rx), nlohmann::json::object(), resolve_seconds,
                            compute);
}

inline RunReport cmd_weyl(const ResolvedExperiment& rx, double resolve_seconds = 0.0) {
  if (rx.is_spectral()) throw ConfigError("model.kind", "the weyl command needs a multiplication model");
  if (rx.weyl_k_values.empty()) throw ConfigError("weyl.k_values", "missing required field");
  const auto t0 = detail::Clock::now();
  const auto& model = std::get<MultiplicationSymbolModel>(rx.model);
  const double center = rx.weyl_center.value_or(model.argmax_points().front());
  const SweepResult sweep = weyl_divergence_probe(model, rx.weyl_k_values, rx.p_grid, center);

  nlohmann::json defects = nlohmann::json::array();
  std::ostringstream csv;
  csv << "k,defect,bound\n";
  for (std::size_t k : rx.weyl_k_values) {
    const auto u = build_weyl_sequence(model, k, center);
    const double defect = weyl_defect(model, u, model.esssup());
    const double bound = weyl_defect_bound(model, u, model.esssup());
    defects.push_back({{"k", k}, {"defect", defect}, {"bound", bound}});
    csv << k << ',' << format_double(defect) << ',' << format_double(bound) << '\n';
  }
  const double compute = detail::seconds_since(t0);
  RunReport report = detail::finish_run(rx, "weyl", sweep, std::nullopt, {{"defects", defects}, {"center", center}},
                                        resolve_seconds, compute);
  if (rx.format != OutputFormat::json) detail::write_text(rx.output_dir / "defects.csv", csv.str(), report);
  return report;
}

}  // namespace warnlab
