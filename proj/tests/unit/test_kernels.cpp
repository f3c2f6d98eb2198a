#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "smolnn/kernels.hpp"

using namespace smolnn;

TEST(Kernels, EvaluateClosedForms) {
  EXPECT_EQ(evaluate(KernelSpec::constant(), 7, 3), 1.0);
  EXPECT_DOUBLE_EQ(evaluate(KernelSpec::sum(0.5), 4, 9), 5.0);
  EXPECT_EQ(evaluate(KernelSpec::product(0.2), 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(evaluate(KernelSpec::product(0.5), 4, 9), 6.0);
  EXPECT_DOUBLE_EQ(evaluate(KernelSpec::homogeneous(1.0, 0.0), 2, 3), 5.0);
}

TEST(Kernels, HomogeneousZeroExponentsIsTwo) {
  EXPECT_EQ(evaluate(KernelSpec::homogeneous(0.0, 0.0), 5, 11), 2.0);
}

TEST(Kernels, RejectsZeroSize) {
  EXPECT_THROW(evaluate(KernelSpec::constant(), 0, 3), ConfigError);
  EXPECT_THROW(evaluate(KernelSpec::sum(0.5), 3, 0), ConfigError);
}

TEST(Kernels, SymmetricAndPositive) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int draw = 0; draw < 20; ++draw) {
    const KernelSpec specs[] = {KernelSpec::constant(), KernelSpec::product(u(rng)), KernelSpec::sum(u(rng)),
                                KernelSpec::homogeneous(u(rng), u(rng))};
    for (const auto& s : specs) {
      for (std::size_t i = 1; i <= 40; ++i) {
        for (std::size_t j = 1; j <= 40; ++j) {
          ASSERT_EQ(evaluate(s, i, j), evaluate(s, j, i));
          ASSERT_GT(evaluate(s, i, j), 0.0);
        }
      }
    }
  }
}

TEST(Kernels, FactorizeConstant) {
  const auto sk = factorize(KernelSpec::constant(), 3);
  ASSERT_EQ(sk.rank(), 1u);
  EXPECT_EQ(sk.factors[0].a, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(sk.factors[0].b, (std::vector<double>{1, 1, 1}));
}

TEST(Kernels, FactorizeSumReconstructsEntry) {
  const auto sk = factorize(KernelSpec::sum(0.5), 2);
  ASSERT_EQ(sk.rank(), 2u);
  EXPECT_NEAR(sk.reconstruct(1, 2), 1.0 + std::sqrt(2.0), 1e-15);
}

TEST(Kernels, FactorizeEqualExponentsCollapsesToRankOne) {
  const auto sk = factorize(KernelSpec::homogeneous(0.2, 0.2), 4);
  ASSERT_EQ(sk.rank(), 1u);
  for (std::size_t k = 1; k <= 4; ++k) {
    EXPECT_NEAR(sk.factors[0].a[k - 1], std::sqrt(2.0) * std::pow(static_cast<double>(k), 0.2), 1e-15);
  }
  for (std::size_t i = 1; i <= 4; ++i) {
    for (std::size_t j = 1; j <= 4; ++j) {
      const double want = 2.0 * std::pow(static_cast<double>(i * j), 0.2);
      EXPECT_NEAR(sk.reconstruct(i, j), want, 1e-12 * want);
    }
  }
}

TEST(Kernels, FactorizationIsExactForRandomExponents) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int draw = 0; draw < 25; ++draw) {
    const double nu = u(rng), mu = u(rng);
    const KernelSpec specs[] = {KernelSpec::constant(), KernelSpec::product(mu), KernelSpec::sum(nu),
                                KernelSpec::homogeneous(nu, mu)};
    for (const auto& s : specs) {
      const auto sk = factorize(s, 64);
      ASSERT_LE(sk.rank(), 2u);
      for (std::size_t i = 1; i <= 64; ++i) {
        for (std::size_t j = 1; j <= 64; ++j) {
          const double k = evaluate(s, i, j);
          ASSERT_LE(std::abs(sk.reconstruct(i, j) - k), 1e-12 * k) << to_string(s) << " " << i << "," << j;
        }
      }
    }
  }
}

TEST(Kernels, ParseRoundTrip) {
  for (const char* text : {"const", "product:0.2", "sum:0.5", "hom:0.25:-0.5"}) {
    const auto s = parse_kernel(text);
    const auto again = parse_kernel(to_string(s));
    EXPECT_EQ(s.form, again.form);
    EXPECT_EQ(s.nu, again.nu);
    EXPECT_EQ(s.mu, again.mu);
  }
  const auto h = parse_kernel("hom:0.25:-0.5");
  EXPECT_EQ(h.form, KernelForm::GeneralHomogeneous);
  EXPECT_EQ(h.nu, 0.25);
  EXPECT_EQ(h.mu, -0.5);
}

TEST(Kernels, ParseRejectsMalformed) {
  for (const char* text : {"", "cosnt", "sum", "sum:", "sum:x", "hom:1", "product:1:2", "sum:nan", "const:1"}) {
    EXPECT_THROW(parse_kernel(text), ConfigError) << text;
  }
}
