// warnlab: analytic / simulate / weyl / validate front end.

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "warnlab/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("warnlab");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("WARNLAB_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    if (level != "info") spdlog::warn("WARNLAB_LOG='{}' not recognised, using info", level);
    spdlog::set_level(spdlog::level::info);
  }
}

struct Flags {
  std::string config;
  std::string out;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::string format;
};

warnlab::RunOptions to_options(const Flags& f, const CLI::App& sub) {
  warnlab::RunOptions o;
  if (!f.out.empty()) o.out = f.out;
  o.threads = f.threads;
  if (sub.count("--seed") > 0) o.seed = f.seed;
  if (!f.format.empty()) o.format = warnlab::parse_output_format(f.format);
  return o;
}

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "experiment configuration (JSON)")->required();
  sub->add_option("--out", f.out, "output directory (overrides output.dir)");
  sub->add_option("--threads", f.threads, "worker threads, 0 = all cores");
  sub->add_option("--seed", f.seed, "master seed (overrides engine.master_seed)");
  sub->add_option("--format", f.format, "csv, json or both")->check(CLI::IsMember({"csv", "json", "both"}));
}

int run(const std::string& command, const Flags& flags, const CLI::App& sub) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto rx = warnlab::load_experiment(flags.config, to_options(flags, sub));
  const double resolve = std::chrono::duration<double>(Clock::now() - t0).count();
  spdlog::debug("resolved p* = {}, {} sweep points", rx.p_star, rx.p_grid.size());

  if (command == "validate") {
    std::cout << warnlab::describe(rx);
    return 0;
  }
  warnlab::RunReport report;
  if (command == "analytic") {
    report = warnlab::cmd_analytic(rx, resolve);
  } else if (command == "simulate") {
    report = warnlab::cmd_simulate(rx, resolve);
  } else {
    report = warnlab::cmd_weyl(rx, resolve);
  }
  for (const auto& w : report.warnings) spdlog::warn("{}", w);
  for (const auto& r : report.json["results"]) {
    if (!r.contains("verdict")) continue;
    spdlog::info("{}: {} (exponent {})", r["quantity"].get<std::string>(),
                 r["verdict"]["classification"].get<std::string>(), r["verdict"]["fitted_exponent"].get<double>());
  }
  for (const auto& f : report.files) spdlog::debug("wrote {}", f.string());
  spdlog::info("output in {}", rx.output_dir.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Covariance-based early-warning signs near bifurcations of linear SPDEs"};
  app.require_subcommand(1);
  Flags flags;
  std::string command;
  for (const char* name : {"analytic", "simulate", "weyl", "validate"}) {
    auto* sub = app.add_subcommand(name);
    add_flags(sub, flags);
    sub->callback([&command, name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const CLI::App* sub = app.get_subcommands().front();
  try {
    return run(command, flags, *sub);
  } catch (const warnlab::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const warnlab::NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumeric;
  } catch (const warnlab::DomainError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
