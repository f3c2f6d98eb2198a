#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "smolnn/fft_convolution.hpp"
#include "smolnn/integrator.hpp"
#include "smolnn/series_io.hpp"

using namespace smolnn;

namespace {

// Constant-kernel solution from a monodisperse start without source.
double analytic_const(std::size_t k, double t) {
  return std::pow(t / 2.0, static_cast<double>(k) - 1.0) * std::pow(1.0 + t / 2.0, -(static_cast<double>(k) + 1.0));
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::vector<KernelSpec> all_forms() {
  return {KernelSpec::constant(), KernelSpec::product(0.3), KernelSpec::sum(0.5), KernelSpec::homogeneous(0.7, -0.4)};
}

}  // namespace

TEST(AnalyticOracle, MatchesInitialConditionAndUnitMass) {
  EXPECT_EQ(analytic_const(1, 0.0), 1.0);
  EXPECT_EQ(analytic_const(2, 0.0), 0.0);
  double m = 0.0;
  for (std::size_t k = 1; k <= 4000; ++k) m += static_cast<double>(k) * analytic_const(k, 1.5);
  EXPECT_NEAR(m, 1.0, 1e-12);
}

TEST(RhsDirect, TwoSizeHandExpansion) {
  const std::vector<double> state{1.0, 0.0};
  const auto d = rhs_direct(state, KernelSpec::constant(), true);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.5);
}

TEST(RhsDirect, GainCountsOrderedPairsHalved) {
  const std::vector<double> state{0.5, 0.25, 0.0};
  const auto d = rhs_direct(state, KernelSpec::constant(), false);
  EXPECT_DOUBLE_EQ(d[2], 0.125);
}

TEST(RhsDirect, ZeroStateGivesZero) {
  for (const auto& k : all_forms()) {
    const auto d = rhs_direct(std::vector<double>(17, 0.0), k, false);
    EXPECT_EQ(max_abs(d), 0.0);
  }
}

TEST(RhsDirect, RejectsNonFinite) {
  std::vector<double> state{1.0, std::nan(""), 0.0};
  EXPECT_THROW(rhs_direct(state, KernelSpec::constant(), false), NumericalError);
  state[1] = INFINITY;
  EXPECT_THROW(rhs_direct(state, KernelSpec::constant(), false), NumericalError);
}

TEST(RhsFast, TwoSizeMatchesDirect) {
  const std::vector<double> state{1.0, 0.0};
  const auto f = rhs_fast(state, factorize(KernelSpec::constant(), 2), true);
  EXPECT_NEAR(f[0], 0.0, 1e-13);
  EXPECT_NEAR(f[1], 0.5, 1e-13);
}

TEST(RhsFast, ZeroStateGivesZero) {
  for (const auto& k : all_forms()) {
    const auto f = rhs_fast(std::vector<double>(33, 0.0), factorize(k, 33), false);
    EXPECT_EQ(max_abs(f), 0.0);
  }
}

TEST(RhsFast, SizeMismatchThrows) {
  EXPECT_THROW(rhs_fast(std::vector<double>(10, 0.1), factorize(KernelSpec::constant(), 12), false), ConfigError);
}

TEST(RhsFast, AgreesWithDirectOnRandomStates) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n : {64u, 256u}) {
    for (const auto& kernel : all_forms()) {
      FastRhs fast(factorize(kernel, n));
      std::vector<double> out(n);
      for (int draw = 0; draw < 50; ++draw) {
        std::vector<double> state(n);
        for (auto& v : state) v = u(rng);
        const auto ref = rhs_direct(state, kernel, draw % 2 == 0);
        fast(state, draw % 2 == 0, out);
        double dev = 0.0;
        for (std::size_t k = 0; k < n; ++k) dev = std::max(dev, std::abs(out[k] - ref[k]));
        ASSERT_LE(dev, 1e-10 * max_abs(ref)) << to_string(kernel) << " n=" << n;
      }
    }
  }
}

TEST(FftConvolver, MatchesSchoolbookConvolution) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{0.5, -1, 2, 0, 1};
  FftConvolver conv(5);
  EXPECT_EQ(conv.fft_length(), 16u);
  std::vector<double> out(5);
  conv.convolve(x, y, out);
  for (std::size_t m = 0; m < 5; ++m) {
    double want = 0.0;
    for (std::size_t i = 0; i <= m; ++i) want += x[i] * y[m - i];
    EXPECT_NEAR(out[m], want, 1e-12);
  }
}

TEST(Integrate, MatchesAnalyticConstantKernel) {
  const SolverConfig cfg{512, 1e-3, 1000, Method::RK4, false, RhsMode::Fast, 1};
  const auto s = integrate(cfg, KernelSpec::constant(), monodisperse(512));
  ASSERT_EQ(s.rows(), 1001u);
  EXPECT_DOUBLE_EQ(s.time(1000), 1.0);
  for (std::size_t k = 1; k <= 10; ++k) {
    const double want = analytic_const(k, 1.0);
    EXPECT_LE(std::abs(s.at(1000, k) - want), 1e-4 * want) << "k=" << k;
  }
}

TEST(Integrate, ConvergenceOrders) {
  auto error_at_one = [](Method m, double dt) {
    const SolverConfig cfg{128, dt, static_cast<std::size_t>(std::llround(1.0 / dt)), m, false, RhsMode::Fast, 1};
    const auto s = integrate(cfg, KernelSpec::constant(), monodisperse(128));
    double e = 0.0;
    for (std::size_t k = 1; k <= 10; ++k) e = std::max(e, std::abs(s.at(s.rows() - 1, k) - analytic_const(k, 1.0)));
    return e;
  };
  const double r1 = std::log2(error_at_one(Method::RK4, 0.1) / error_at_one(Method::RK4, 0.05));
  const double r2 = std::log2(error_at_one(Method::RK4, 0.05) / error_at_one(Method::RK4, 0.025));
  EXPECT_NEAR(r1, 4.0, 0.3);
  EXPECT_NEAR(r2, 4.0, 0.3);
  const double e1 = std::log2(error_at_one(Method::Euler, 0.01) / error_at_one(Method::Euler, 0.005));
  const double e2 = std::log2(error_at_one(Method::Euler, 0.005) / error_at_one(Method::Euler, 0.0025));
  EXPECT_NEAR(e1, 1.0, 0.3);
  EXPECT_NEAR(e2, 1.0, 0.3);
}

TEST(Integrate, MassConservedWithoutSource) {
  for (const auto& kernel : {KernelSpec::constant(), KernelSpec::sum(0.5), KernelSpec::homogeneous(0.2, 0.2)}) {
    const SolverConfig cfg{512, 0.01, 300, Method::RK4, false, RhsMode::Fast, 1};
    const auto s = integrate(cfg, kernel, monodisperse(512));
    ASSERT_LT(s.tail(s.rows() - 1), 1e-12) << to_string(kernel);
    for (std::size_t i = 0; i < s.rows(); i += 50) EXPECT_NEAR(mass(s, i), 1.0, 1e-6) << to_string(kernel);
  }
}

TEST(Integrate, MassGrowsLinearlyWithSource) {
  const SolverConfig cfg{1024, 0.01, 500, Method::RK4, true, RhsMode::Fast, 1};
  const auto s = integrate(cfg, KernelSpec::constant(), monodisperse(1024));
  ASSERT_LT(s.tail(s.rows() - 1), 1e-12);
  for (std::size_t i = 0; i < s.rows(); i += 25) EXPECT_NEAR(mass(s, i), s.time(i) + 1.0, 1e-4);
  EXPECT_NEAR(mass(s, 200), 3.0, 1e-4);
}

TEST(Integrate, DirectAndFastModesAgree) {
  SolverConfig cfg{64, 0.01, 100, Method::RK4, true, RhsMode::Direct, 1};
  const auto kernel = KernelSpec::sum(0.5);
  const auto d = integrate(cfg, kernel, monodisperse(64));
  cfg.rhs_mode = RhsMode::Fast;
  const auto f = integrate(cfg, kernel, monodisperse(64));
  for (std::size_t i = 0; i < d.data.size(); ++i) ASSERT_NEAR(d.data[i], f.data[i], 1e-12);
}

TEST(Integrate, DeterministicAndNonNegative) {
  const SolverConfig cfg{200, 0.05, 100, Method::Euler, true, RhsMode::Fast, 1};
  const auto a = integrate(cfg, KernelSpec::homogeneous(0.3, -0.2), monodisperse(200));
  const auto b = integrate(cfg, KernelSpec::homogeneous(0.3, -0.2), monodisperse(200));
  EXPECT_EQ(a.data, b.data);
  for (double v : a.data) ASSERT_GE(v, 0.0);
}

TEST(Integrate, StoreStrideThinsRows) {
  SolverConfig cfg{32, 0.01, 100, Method::RK4, true, RhsMode::Fast, 1};
  const auto full = integrate(cfg, KernelSpec::constant(), monodisperse(32));
  cfg.store_stride = 20;
  const auto thin = integrate(cfg, KernelSpec::constant(), monodisperse(32));
  ASSERT_EQ(thin.rows(), 6u);
  EXPECT_DOUBLE_EQ(thin.dt, 0.2);
  for (std::size_t i = 0; i < thin.rows(); ++i) {
    for (std::size_t k = 1; k <= 32; ++k) ASSERT_EQ(thin.at(i, k), full.at(20 * i, k));
  }
}

TEST(Integrate, BlowUpReportsStep) {
  const SolverConfig cfg{64, 1.0, 10, Method::Euler, false, RhsMode::Fast, 1};
  try {
    integrate(cfg, KernelSpec::product(1.0), std::vector<double>(64, 1e200));
    FAIL() << "expected blow-up";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Integrate, RejectsBadConfig) {
  EXPECT_THROW(integrate(SolverConfig{0, 0.1, 10}, KernelSpec::constant(), {}), ConfigError);
  EXPECT_THROW(integrate(SolverConfig{4, 0.0, 10}, KernelSpec::constant(), monodisperse(4)), ConfigError);
  EXPECT_THROW(integrate(SolverConfig{4, 0.1, 0}, KernelSpec::constant(), monodisperse(4)), ConfigError);
  EXPECT_THROW(integrate(SolverConfig{4, 0.1, 10}, KernelSpec::constant(), monodisperse(5)), ConfigError);
  EXPECT_THROW(integrate(SolverConfig{2, 0.1, 10}, KernelSpec::constant(), std::vector<double>{1.0, -1.0}),
               ConfigError);
}

TEST(Mass, SimpleStates) {
  EXPECT_EQ(mass(monodisperse(10)), 1.0);
  EXPECT_EQ(mass(std::vector<double>{0.0, 0.5, 0.0, 0.0}), 1.0);
}

TEST(SeriesIo, RoundTripIsBitExact) {
  const SolverConfig cfg{16, 0.1, 7, Method::RK4, true, RhsMode::Fast, 1};
  const auto s = integrate(cfg, KernelSpec::sum(0.5), monodisperse(16));
  const auto path = std::filesystem::temp_directory_path() / "smolnn_roundtrip.smol";
  write_series(s, path);
  const auto r = read_series(path);
  EXPECT_EQ(r.n, s.n);
  EXPECT_EQ(r.dt, s.dt);
  EXPECT_EQ(r.data, s.data);
  std::filesystem::remove(path);
}

TEST(SeriesIo, RejectsCorruptFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto bad_magic = dir / "smolnn_bad_magic.smol";
  {
    std::ofstream(bad_magic, std::ios::binary) << "SMOL2 and some more bytes here...";
  }
  EXPECT_THROW(read_series(bad_magic), IoError);
  std::filesystem::remove(bad_magic);

  const SolverConfig cfg{8, 0.1, 3, Method::RK4, false, RhsMode::Fast, 1};
  const auto s = integrate(cfg, KernelSpec::constant(), monodisperse(8));
  const auto truncated = dir / "smolnn_truncated.smol";
  write_series(s, truncated);
  std::filesystem::resize_file(truncated, std::filesystem::file_size(truncated) - 8);
  EXPECT_THROW(read_series(truncated), IoError);
  std::filesystem::remove(truncated);

  EXPECT_THROW(read_series(dir / "smolnn_does_not_exist.smol"), IoError);
}

TEST(SeriesIo, CsvHasMassAndSelectedSizes) {
  const SolverConfig cfg{8, 0.5, 2, Method::RK4, true, RhsMode::Fast, 1};
  const auto s = integrate(cfg, KernelSpec::constant(), monodisperse(8));
  std::ostringstream os;
  const std::vector<std::size_t> sizes{1, 3};
  write_series_csv(s, sizes, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,M,c_1,c_3");
  std::getline(is, line);
  EXPECT_EQ(line, "0,1,1,0");
  const std::vector<std::size_t> bad{9};
  EXPECT_THROW(write_series_csv(s, bad, os), ConfigError);
}
