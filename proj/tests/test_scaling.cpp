#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "warnlab/scaling.hpp"

using namespace warnlab;

namespace {

SpectralModel critical_mode(Complex offset = {0.0, 0.0}, std::size_t m = 1) {
  SpectralModel model;
  model.curves.push_back(polynomial_curve(0, {offset, {1.0, 0.0}}));
  model.curves.push_back(polynomial_curve(1, {{-3.0, 0.0}, {1.0, 0.0}}));
  model.jordan_sizes = {m, 1};
  const auto n = static_cast<Eigen::Index>(m + 1);
  model.noise_matrix = CMatrix::Identity(n, n);
  return model;
}

std::vector<double> dyadic(int first, int last) {
  std::vector<double> ps;
  for (int i = first; i <= last; ++i) ps.push_back(-std::ldexp(1.0, -i));
  return ps;
}

std::vector<double> decades(int first, int last, int per_decade) {
  std::vector<double> ps;
  for (int i = first * per_decade; i <= last * per_decade; ++i) ps.push_back(-std::pow(10.0, -i / static_cast<double>(per_decade)));
  return ps;
}

const std::vector<QuantitySpec> kDiagonal{QuantitySpec::critical_diagonal()};

}  // namespace

TEST(FitPowerLaw, ExactLawRecovery) {
  std::vector<double> d;
  for (int i = 0; i < 8; ++i) d.push_back(std::ldexp(1.0, -i));
  for (double alpha : {-3.0, -2.0, -1.0, 0.0, 1.0}) {
    std::vector<double> v;
    for (double x : d) v.push_back(1.7 * std::pow(x, alpha));
    const auto fit = fit_power_law(d, v);
    EXPECT_NEAR(fit.exponent, alpha, 1e-12);
    EXPECT_NEAR(fit.log_prefactor, std::log(1.7), 1e-12);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(fit.residual_sd));
  }
}

TEST(FitPowerLaw, TwoOverCube) {
  const std::vector<double> d{1.0, 0.5, 0.25, 0.125};
  std::vector<double> v;
  for (double x : d) v.push_back(2.0 / (x * x * x));
  const auto fit = fit_power_law(d, v);
  EXPECT_NEAR(fit.exponent, -3.0, 1e-12);
  EXPECT_NEAR(fit.log_prefactor, std::log(2.0), 1e-12);
  EXPECT_EQ(fit.r_squared, 1.0);
}

TEST(FitPowerLaw, RejectsBadInput) {
  const std::vector<double> d{1.0, 0.5, 0.25};
  EXPECT_THROW(fit_power_law(d, std::vector<double>{1.0, 0.0, 2.0}), DomainError);
  EXPECT_THROW(fit_power_law(d, std::vector<double>{1.0, 2.0}), DomainError);
  EXPECT_THROW(fit_power_law(std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{1.0, 2.0, 3.0}), DomainError);
  EXPECT_THROW(fit_power_law(std::vector<double>{1.0, 0.5}, std::vector<double>{1.0, 2.0}), DomainError);
}

TEST(FitWindow, LastDecade) {
  const std::vector<double> d{1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
  const auto idx = select_window(d, FitWindow::last_decade());
  EXPECT_EQ(idx, (std::vector<std::size_t>{2, 3, 4, 5}));
  const std::vector<double> sparse{1.0, 0.01, 0.0001};
  EXPECT_EQ(select_window(sparse, FitWindow::last_decade()).size(), 3u);
  EXPECT_EQ(select_window(d, FitWindow::all()).size(), 6u);
  FitWindow band = FitWindow::all();
  band.max_distance = 0.3;
  band.min_distance = 0.1;
  EXPECT_EQ(select_window(d, band), (std::vector<std::size_t>{2, 3}));
}

TEST(Sweep, RealSpectrumInverseDistance) {
  const auto ps = dyadic(1, 10);
  const auto sweep = run_parameter_sweep(critical_mode(), 0.0, ps, kDiagonal);
  const auto fit = fit_power_law(sweep.distances(), sweep.quantity("critical_diagonal").values, FitWindow::all());
  EXPECT_NEAR(fit.exponent, -1.0, 1e-10);
  EXPECT_NEAR(std::exp(fit.log_prefactor), 0.5, 1e-10);
  const auto verdict = classify_warning_sign(sweep, "critical_diagonal");
  EXPECT_EQ(verdict.classification, Classification::diverging);
  EXPECT_EQ(sweep.reports.size(), ps.size());
}

TEST(Sweep, ImaginaryPartLeavesExponent) {
  const auto ps = dyadic(1, 10);
  const auto base = run_parameter_sweep(critical_mode(), 0.0, ps, kDiagonal);
  const double e0 = fit_power_law(base.distances(), base.quantities[0].values).exponent;
  for (double omega : {1.0, 10.0}) {
    const auto s = run_parameter_sweep(critical_mode({0.0, omega}), 0.0, ps, kDiagonal);
    EXPECT_NEAR(fit_power_law(s.distances(), s.quantities[0].values).exponent, e0, 1e-10);
  }
}

TEST(Sweep, JordanTwoExponentMultiset) {
  const auto ps = dyadic(0, 6);
  const std::vector<QuantitySpec> specs{QuantitySpec::jordan_block()};
  const auto sweep = run_parameter_sweep(critical_mode({0.0, 0.0}, 2), 0.0, ps, specs);
  ASSERT_EQ(sweep.quantities.size(), 3u);
  std::vector<double> exps;
  for (const auto& q : sweep.quantities) exps.push_back(classify_warning_sign(sweep, q.name).fitted_exponent);
  std::sort(exps.begin(), exps.end());
  EXPECT_NEAR(exps[0], -3.0, 0.05);
  EXPECT_NEAR(exps[1], -2.0, 0.05);
  EXPECT_NEAR(exps[2], -1.0, 0.05);
  EXPECT_EQ(sweep.quantities[0].name, "jordan_0_0");
}

TEST(Sweep, JordanThreeDiagonals) {
  const auto ps = dyadic(0, 10);
  const std::vector<QuantitySpec> specs{QuantitySpec::entry(0, 0), QuantitySpec::entry(1, 1), QuantitySpec::entry(2, 2)};
  const auto sweep = run_parameter_sweep(critical_mode({0.0, 0.0}, 3), 0.0, ps, specs);
  EXPECT_NEAR(classify_warning_sign(sweep, "entry_0_0").fitted_exponent, -5.0, 0.1);
  EXPECT_NEAR(classify_warning_sign(sweep, "entry_1_1").fitted_exponent, -3.0, 0.1);
  EXPECT_NEAR(classify_warning_sign(sweep, "entry_2_2").fitted_exponent, -1.0, 0.1);
}

TEST(Sweep, DegenerateNoise) {
  const auto ps = dyadic(1, 10);
  auto model = critical_mode();
  model.sigma = NoiseLaw::power(1.0, 1.0);
  auto sweep = run_parameter_sweep(model, 0.0, ps, kDiagonal);
  const auto xi = noise_limit_xi(model, ps);
  const auto verdict = classify_warning_sign(sweep, "critical_diagonal", xi);
  EXPECT_EQ(verdict.classification, Classification::finite_limit);
  EXPECT_NEAR(sweep.quantities[0].values.back(), 0.5, 1e-8);
  EXPECT_NEAR(verdict.xi->value.real(), -0.5, 1e-10);

  model.sigma = NoiseLaw::power(1.0, 2.0);
  sweep = run_parameter_sweep(model, 0.0, ps, kDiagonal);
  EXPECT_EQ(classify_warning_sign(sweep, "critical_diagonal").classification, Classification::vanishing);
}

TEST(Sweep, NonConvergedXiIsNotFiniteLimit) {
  const auto ps = dyadic(1, 10);
  auto model = critical_mode();
  model.sigma = NoiseLaw::power(1.0, 1.0);
  const auto sweep = run_parameter_sweep(model, 0.0, ps, kDiagonal);
  XiEstimate xi = noise_limit_xi(model, ps);
  xi.converged = false;
  EXPECT_EQ(classify_warning_sign(sweep, "critical_diagonal", xi).classification, Classification::inconclusive);
}

TEST(Sweep, GridMustStayBelowPStar) {
  const std::vector<double> ps{-0.5, 0.0};
  EXPECT_THROW(run_parameter_sweep(critical_mode(), 0.0, ps, kDiagonal), DomainError);
  const std::vector<double> unordered{-0.1, -0.5};
  EXPECT_THROW(run_parameter_sweep(critical_mode(), 0.0, unordered, kDiagonal), DomainError);
}

TEST(Sweep, QuantityKindMustMatchModel) {
  const auto ps = dyadic(1, 3);
  const std::vector<QuantitySpec> weyl{QuantitySpec::weyl_pairing(2)};
  EXPECT_THROW(run_parameter_sweep(critical_mode(), 0.0, ps, weyl), DomainError);
  EXPECT_THROW(run_parameter_sweep(make_neg_square_symbol(), ps, kDiagonal), DomainError);
}

TEST(Sweep, NumericalFailureNamesP) {
  // p* given wrongly: the model is unstable at p = -0.25 once the offset makes Re lambda > 0.
  const auto model = critical_mode({0.5, 0.0});
  const std::vector<double> ps{-1.0, -0.25};
  try {
    run_parameter_sweep(model, 0.0, ps, kDiagonal);
    FAIL();
  } catch (const SweepError& e) {
    EXPECT_EQ(e.p(), -0.25);
  }
}

TEST(Sweep, EmpiricalIsSeededPerPoint) {
  const auto ps = dyadic(1, 3);
  EnsembleConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 40.0;
  cfg.n_trajectories = 50;
  cfg.master_seed = 5;
  const auto a = run_parameter_sweep(critical_mode(), 0.0, ps, kDiagonal, SweepEngine::empirical(cfg, 1));
  const auto b = run_parameter_sweep(critical_mode(), 0.0, ps, kDiagonal, SweepEngine::empirical(cfg, 3));
  EXPECT_EQ(a.quantities[0].values, b.quantities[0].values);
  EXPECT_EQ(a.quantities[0].standard_errors, b.quantities[0].standard_errors);
  EXPECT_EQ(a.quantities[0].provenance, Provenance::empirical);
  EXPECT_EQ(a.quantities[0].standard_errors.size(), ps.size());
}

TEST(Sweep, MixingWarningsCollected) {
  const auto ps = dyadic(1, 6);
  EnsembleConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 50.0;
  cfg.n_trajectories = 4;
  const auto s = run_parameter_sweep(critical_mode(), 0.0, ps, kDiagonal, SweepEngine::empirical(cfg));
  EXPECT_EQ(s.warnings.size(), 3u);  // |p| = 1/16, 1/32, 1/64
}

TEST(Laplacian, NormSurrogateAndGaussianPairing) {
  const auto model = make_neg_square_symbol();
  const auto ps = decades(1, 4, 1);
  const std::vector<QuantitySpec> specs{QuantitySpec::multiplication_norm(), QuantitySpec::gaussian_pairing()};
  const auto sweep = run_parameter_sweep(model, ps, specs);
  EXPECT_NEAR(classify_warning_sign(sweep, "multiplication_norm").fitted_exponent, -1.0, 1e-6);
  const auto g = classify_warning_sign(sweep, "gaussian_pairing");
  EXPECT_NEAR(g.fitted_exponent, -1.5, 0.05);
  EXPECT_EQ(g.classification, Classification::diverging);
}

TEST(Laplacian, WeylSeriesDiverge) {
  const auto model = make_neg_square_symbol();
  const std::vector<std::size_t> ks{2, 5, 10};
  const auto ps = decades(2, 5, 4);
  const auto sweep = weyl_divergence_probe(model, ks, ps, 0.0);
  ASSERT_EQ(sweep.quantities.size(), 3u);
  for (const auto& q : sweep.quantities) {
    EXPECT_TRUE(std::is_sorted(q.values.begin(), q.values.end())) << q.name;
    const auto v = classify_warning_sign(sweep, q.name);
    EXPECT_LT(v.fitted_exponent, -0.4) << q.name;
  }
}

TEST(Laplacian, WeylKTooLarge) {
  const auto model = make_neg_square_symbol();
  const std::vector<std::size_t> ks{5000};
  const auto ps = dyadic(1, 3);
  EXPECT_THROW(weyl_divergence_probe(model, ks, ps, 0.0), NumericalError);
}

TEST(Verdict, InconclusiveForShallowNoisyData) {
  SweepResult s;
  s.p_values = {-1.0, -0.5, -0.25, -0.125};
  s.quantities.push_back({"q", {1.0, 1.3, 1.1, 1.5}, {}, Provenance::analytic});
  EXPECT_EQ(classify_warning_sign(s, "q", std::nullopt, FitWindow::all()).classification,
            Classification::inconclusive);
  EXPECT_THROW(classify_warning_sign(s, "missing"), DomainError);
}
