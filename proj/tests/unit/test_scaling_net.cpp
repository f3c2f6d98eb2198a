#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "smolnn/integrator.hpp"
#include "smolnn/scaling_net.hpp"

using namespace smolnn;

namespace {

const TransformConfig kCfg{};

std::vector<double> synth_profile(const ScalingParams1& p, std::size_t n) {
  std::vector<double> y(n);
  for (std::size_t k = 1; k <= n; ++k) y[k - 1] = eval_family(static_cast<const ReluProfile<1>&>(p), k, kCfg);
  return y;
}

// Integer breakpoint scan with an independently written least-squares slope.
double oracle_loss(std::span<const double> profile) {
  const double floor = kCfg.log_floor();
  const std::size_t n = profile.size();
  double best = 0.0;
  for (double r : profile) best += (r - floor) * (r - floor);
  best /= static_cast<double>(n);
  for (std::size_t m = 2; m <= n + 1; ++m) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 1; k < m; ++k) {
      const double x = static_cast<double>(m - k);
      num += x * (profile[k - 1] - floor);
      den += x * x;
    }
    const double w = num / den;
    double loss = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double e = floor + w * std::max(static_cast<double>(m) - static_cast<double>(k), 0.0) - profile[k - 1];
      loss += e * e;
    }
    best = std::min(best, loss / static_cast<double>(n));
  }
  return best;
}

const DensitySeries& const_kernel_series() {
  static const DensitySeries s = integrate(SolverConfig{1024, 0.01, 800, Method::RK4, true, RhsMode::Fast, 1},
                                           KernelSpec::constant(), monodisperse(1024));
  return s;
}

}  // namespace

TEST(EvalFamily, OneNeuronExamples) {
  const ScalingParams1 p(1.0, 5.0);
  const auto& base = static_cast<const ReluProfile<1>&>(p);
  EXPECT_EQ(eval_family(base, 5, kCfg), std::log(1e-7));
  EXPECT_NEAR(eval_family(base, 3, kCfg), std::log(1e-7) + 2.0, 1e-14);
  EXPECT_EQ(eval_family(base, 1000000, kCfg), std::log(1e-7));
  EXPECT_THROW(eval_family(base, 0, kCfg), ConfigError);
}

TEST(EvalFamily, TwoNeuronWithZeroSecondSlopeNests) {
  const ScalingParams1 p(0.7, 40.0);
  const auto q = nest(p, 13.0);
  for (std::size_t k = 1; k <= 60; ++k) {
    EXPECT_EQ(eval_family(q, k, kCfg), eval_family(static_cast<const ReluProfile<1>&>(p), k, kCfg));
  }
}

TEST(EvalFamily, ThreeSegments) {
  const ScalingParams2 q{{0.5, 2.0}, {20.0, 5.0}};
  const double f = kCfg.log_floor();
  EXPECT_NEAR(eval_family(q, 2, kCfg), f + 0.5 * 18 + 2.0 * 3, 1e-12);
  EXPECT_NEAR(eval_family(q, 10, kCfg), f + 0.5 * 10, 1e-12);
  EXPECT_EQ(eval_family(q, 25, kCfg), f);
}

TEST(EvalFamily, MonotoneInSizeForPositiveSlope) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> w(0.01, 3.0), b(1.0, 500.0);
  for (int draw = 0; draw < 50; ++draw) {
    const ReluProfile<1> p{{w(rng)}, {b(rng)}};
    for (std::size_t k = 1; k < 600; ++k) ASSERT_GE(eval_family(p, k, kCfg), eval_family(p, k + 1, kCfg));
  }
}

TEST(ProfileLoss, MomentsMatchDirectSum) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> profile(300);
  for (auto& v : profile) v = kCfg.log_floor() + 10.0 * u(rng);
  const ProfileMoments mom(profile, kCfg.log_floor());
  for (int draw = 0; draw < 50; ++draw) {
    const ReluProfile<1> p1{{u(rng)}, {-10.0 + 400.0 * u(rng)}};
    EXPECT_NEAR(profile_loss(p1, mom), profile_mse(p1, profile, kCfg.log_floor()), 1e-9);
    const ReluProfile<2> p2{{u(rng), -0.5 + u(rng)}, {400.0 * u(rng), 400.0 * u(rng)}};
    EXPECT_NEAR(profile_loss(p2, mom), profile_mse(p2, profile, kCfg.log_floor()), 1e-9);
  }
}

TEST(ProfileLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> profile(200);
  for (std::size_t k = 0; k < profile.size(); ++k) profile[k] = kCfg.log_floor() + std::max(0.0, 12.0 - 0.1 * k) + u(rng);
  const ProfileMoments mom(profile, kCfg.log_floor());
  for (int draw = 0; draw < 20; ++draw) {
    // Breakpoints at half-integers keep the finite-difference stencil off the kinks.
    ReluProfile<2> p{{0.05 + u(rng), 0.05 + u(rng)}, {std::floor(150 * u(rng)) + 20.5, std::floor(150 * u(rng)) + 10.5}};
    std::array<double, 4> g{};
    profile_loss(p, mom, &g);
    auto x = p.to_array();
    for (std::size_t i = 0; i < 4; ++i) {
      const double h = 1e-5;
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (profile_loss(ReluProfile<2>::from_array(xp), mom) -
                         profile_loss(ReluProfile<2>::from_array(xm), mom)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "component " << i;
    }
  }
}

TEST(FitProfile, RecoversSyntheticParameters) {
  const auto profile = synth_profile(ScalingParams1(2.0, 100.0), 400);
  const auto fit = fit_profile<1>(profile, ReluProfile<1>{{1.96}, {98.0}}, FitConfig{}, kCfg);
  EXPECT_NEAR(fit.params.w[0], 2.0, 2e-3);
  EXPECT_NEAR(fit.params.b[0], 100.0, 0.1);
  EXPECT_LT(fit.rmse, 1e-6);
}

TEST(FitProfile, InitialGuessIsExactOnSyntheticProfile) {
  const auto profile = synth_profile(ScalingParams1(2.0, 100.0), 400);
  const auto g = initial_guess(profile, kCfg);
  EXPECT_EQ(g.breakpoint(), 100.0);
  EXPECT_NEAR(g.slope(), 2.0, 1e-12);
}

TEST(FitProfile, FlatProfileFitsExactly) {
  const std::vector<double> profile(256, kCfg.log_floor());
  const auto start = initial_guess(profile, kCfg);
  EXPECT_LE(start.breakpoint(), 1.0);
  const auto fit = fit_profile<1>(profile, start, FitConfig{}, kCfg);
  EXPECT_LT(fit.rmse, 1e-9);
  const auto exact = fit_profile_exact(profile, kCfg);
  EXPECT_LT(exact.rmse, 1e-9);
}

TEST(FitProfile, RejectsProfilesBelowCutoff) {
  std::vector<double> profile(10, 0.0);
  profile[3] = kCfg.log_floor() - 1.0;
  EXPECT_THROW(fit_profile<1>(profile, ReluProfile<1>{{1.0}, {5.0}}, FitConfig{}, kCfg), ConfigError);
  EXPECT_THROW(fit_profile_exact(profile, kCfg), ConfigError);
}

TEST(FitProfile, DivergenceIsReported) {
  FitConfig opt;
  // Momentum this heavy carries the iterate past the minimum and keeps going.
  opt.beta1 = 0.999;
  opt.lr_start = opt.lr_end = 0.2;
  opt.iterations = 400;
  const auto profile = synth_profile(ScalingParams1(0.3, 60.0), 100);
  EXPECT_THROW(fit_profile<1>(profile, ReluProfile<1>{{0.29}, {61.0}}, opt, kCfg), NumericalError);
}

TEST(FitProfile, ConstantKernelProfileMatchesOracle) {
  const auto& s = const_kernel_series();
  for (std::size_t row : {200u, 400u, 800u}) {
    const auto profile = log_profile(s.row(row), kCfg);
    const auto fit = fit_profile<1>(profile, initial_guess(profile, kCfg), FitConfig{}, kCfg);
    const double oracle = oracle_loss(profile);
    EXPECT_LE(fit.rmse * fit.rmse, 1.05 * oracle) << "row " << row;
    EXPECT_LT(fit.rmse, 0.5);
    const auto exact = fit_profile_exact(profile, kCfg);
    EXPECT_NEAR(exact.rmse * exact.rmse, oracle, 1e-9 * std::max(1.0, oracle));
  }
}

TEST(FitProfile, ExactScanFindsIntegerBreakpoint) {
  const double f = kCfg.log_floor();
  const std::vector<double> profile{f + 3, f + 2, f + 1, f, f, f, f};
  const auto fit = fit_profile_exact(profile, kCfg);
  EXPECT_EQ(fit.params.b[0], 4.0);
  EXPECT_NEAR(fit.params.w[0], 1.0, 1e-12);
  EXPECT_LT(fit.rmse, 1e-12);
}

TEST(FitProfile, ExactScanTieGoesToSmallestBreakpoint) {
  // Every candidate fits a flat profile equally well.
  const std::vector<double> profile(9, kCfg.log_floor());
  EXPECT_EQ(fit_profile_exact(profile, kCfg).params.b[0], 1.0);
}

TEST(FitProfile, TwoNeuronNeverWorseThanNestedStart) {
  const auto& s = const_kernel_series();
  for (std::size_t row : {300u, 600u, 800u}) {
    const auto profile = log_profile(s.row(row), kCfg);
    const auto one = fit_profile<1>(profile, initial_guess(profile, kCfg), FitConfig{}, kCfg);
    const auto two = fit_profile<2>(profile, nest(ScalingParams1(one.params), 0.5 * one.params.b[0]), FitConfig{}, kCfg);
    EXPECT_LE(two.rmse, one.rmse);
  }
}

TEST(FitTrajectory, SampleCounts) {
  DensitySeries s;
  s.n = 4;
  s.dt = 0.01;
  for (std::size_t i = 0; i <= 8000; ++i) s.append(std::vector<double>{0.5, 0.1, 1e-3, 0.0});
  FitConfig quick;
  quick.iterations = 5;
  EXPECT_EQ(fit_trajectory<1>(s, 20, kCfg, quick).size(), 400u);
  EXPECT_EQ(fit_trajectory<1>(s, 1, kCfg, quick).size(), 8000u);
  const auto late = fit_trajectory<1>(s, 20, kCfg, quick, 40.0);
  EXPECT_EQ(late.size(), 201u);
  EXPECT_NEAR(late.times.front(), 40.0, 1e-12);
  EXPECT_THROW(fit_trajectory<1>(s, 0, kCfg, quick), ConfigError);
  EXPECT_THROW(fit_trajectory<1>(s, 20, kCfg, quick, 100.0), ConfigError);
}

TEST(FitTrajectory, TimeInvariantSeriesGivesEqualSamples) {
  DensitySeries s;
  s.n = 64;
  s.dt = 0.1;
  std::vector<double> row(64);
  for (std::size_t k = 1; k <= 64; ++k) row[k - 1] = std::exp(-0.3 * static_cast<double>(k));
  for (int i = 0; i <= 100; ++i) s.append(row);
  const auto traj = fit_trajectory<1>(s, 10, kCfg, FitConfig{});
  ASSERT_EQ(traj.size(), 10u);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    EXPECT_NEAR(traj.params[i].w[0], traj.params[0].w[0], 1e-6 * traj.params[0].w[0]);
    EXPECT_NEAR(traj.params[i].b[0], traj.params[0].b[0], 1e-6 * traj.params[0].b[0]);
  }
}

TEST(FitTrajectory, SplinePassesThroughSamples) {
  const auto traj = fit_trajectory<1>(const_kernel_series(), 40, kCfg, FitConfig{}, 2.0);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto p = traj.interpolate(traj.times[i]);
    EXPECT_NEAR(p.w[0], traj.params[i].w[0], 1e-12);
    EXPECT_NEAR(p.b[0], traj.params[i].b[0], 1e-9);
  }
}

TEST(FitTrajectory, ConstantKernelShapes) {
  const auto traj = fit_trajectory<1>(const_kernel_series(), 20, kCfg, FitConfig{}, 4.0);
  std::size_t ok = 0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    ok += (traj.params[i].w[0] <= traj.params[i - 1].w[0] && traj.params[i].b[0] >= traj.params[i - 1].b[0]) ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(ok), 0.95 * static_cast<double>(traj.size() - 1));
}

TEST(FitTrajectory, TwoNeuronFamilyDominatesPerSample) {
  const auto traj = fit_trajectory<2>(const_kernel_series(), 40, kCfg, FitConfig{}, 4.0);
  ASSERT_EQ(traj.baseline_rmse.size(), traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) EXPECT_LE(traj.fit_rmse[i], traj.baseline_rmse[i]);
}

TEST(FitTrajectory, ExactModeOnlyForOneNeuron) {
  FitConfig exact;
  exact.method = FitMethod::Exact;
  EXPECT_THROW(fit_trajectory<2>(const_kernel_series(), 100, kCfg, exact), ConfigError);
  const auto traj = fit_trajectory<1>(const_kernel_series(), 100, kCfg, exact);
  EXPECT_EQ(traj.size(), 8u);
}
