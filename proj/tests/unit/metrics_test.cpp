#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "essayfb/errors.hpp"
#include "essayfb/metrics.hpp"
#include "support/oracles.hpp"

using namespace essayfb;
using metrics::RatingVector;

namespace {

RatingVector rv(std::vector<int> v, int lo, int hi) { return {std::move(v), lo, hi}; }

}  // namespace

TEST(Qwk, IdenticalVectorsScoreOne) {
  EXPECT_DOUBLE_EQ(metrics::qwk(rv({1, 2, 3, 4}, 1, 6), rv({1, 2, 3, 4}, 1, 6)), 1.0);
}

TEST(Qwk, ReversedOrderIsNegative) {
  const double k = metrics::qwk(rv({1, 2, 3}, 1, 3), rv({3, 2, 1}, 1, 3));
  EXPECT_LT(k, 0.0);
  EXPECT_NEAR(k, oracle::qwk({1, 2, 3}, {3, 2, 1}), 1e-12);
}

TEST(Qwk, ConstantAgreementHasNoExpectedDisagreement) {
  EXPECT_DOUBLE_EQ(metrics::qwk(rv({2, 2, 2}, 0, 3), rv({2, 2, 2}, 0, 3)), 1.0);
}

TEST(Qwk, RejectsBadInput) {
  EXPECT_THROW(metrics::qwk(rv({1, 2}, 1, 3), rv({1}, 1, 3)), MetricError);
  EXPECT_THROW(metrics::qwk(rv({1}, 1, 3), rv({1}, 1, 3)), MetricError);
  EXPECT_THROW(metrics::qwk(rv({1, 7}, 1, 6), rv({1, 2}, 1, 6)), MetricError);
}

TEST(Qwk, MatchesPairwiseOracleOnRandomInstances) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int lo = static_cast<int>(gen() % 3);
    const int hi = lo + 1 + static_cast<int>(gen() % 10);
    const std::size_t n = 2 + gen() % 49;
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = lo + static_cast<int>(gen() % (hi - lo + 1));
      b[i] = lo + static_cast<int>(gen() % (hi - lo + 1));
    }
    EXPECT_NEAR(metrics::qwk(rv(a, lo, hi), rv(b, lo, hi)), oracle::qwk(a, b), 1e-12) << "trial " << trial;
  }
}

TEST(Qwk, SymmetricUnderSwapAndRelabelling) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int hi = 2 + static_cast<int>(gen() % 8);
    const std::size_t n = 2 + gen() % 40;
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(gen() % (hi + 1));
      b[i] = static_cast<int>(gen() % (hi + 1));
    }
    const double k = metrics::qwk(rv(a, 0, hi), rv(b, 0, hi));
    EXPECT_EQ(k, metrics::qwk(rv(b, 0, hi), rv(a, 0, hi)));
    // Reversing the label order keeps squared distances.
    std::vector<int> ra(n), rb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ra[i] = hi - a[i];
      rb[i] = hi - b[i];
    }
    EXPECT_EQ(k, metrics::qwk(rv(ra, 0, hi), rv(rb, 0, hi)));
    // So does shuffling the items jointly.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<int> pa(n), pb(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a[order[i]];
      pb[i] = b[order[i]];
    }
    EXPECT_EQ(k, metrics::qwk(rv(pa, 0, hi), rv(pb, 0, hi)));
  }
}

TEST(Pearson, PerfectAndAnti) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_NEAR(metrics::pearson(x, std::vector<double>{2, 4, 6, 8}), 1.0, 1e-15);
  EXPECT_NEAR(metrics::pearson(x, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
}

TEST(Pearson, ZeroVarianceThrows) {
  const std::vector<double> x{1, 2, 3};
  const std::vector<double> c{5, 5, 5};
  EXPECT_THROW(metrics::pearson(x, c), MetricError);
  EXPECT_THROW(metrics::pearson(x, std::vector<double>{1, 2}), MetricError);
}

TEST(Pearson, MatchesTwoPassOracle) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen() % 49;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(gen);
      y[i] = 0.3 * x[i] + u(gen);
    }
    EXPECT_NEAR(metrics::pearson(x, y), oracle::pearson(x, y), 1e-12);
  }
}

TEST(Alpha, IdenticalAnnotatorsGiveOne) {
  metrics::ReliabilityMatrix m{{{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}}};
  EXPECT_DOUBLE_EQ(metrics::krippendorff_alpha_interval(m), 1.0);
}

TEST(Alpha, TwoByTwoMatchesEnumeration) {
  metrics::ReliabilityMatrix m{{{1.0, 2.0}, {2.0, 1.0}}};
  const double expected = oracle::alpha_interval(m.rows);
  EXPECT_NEAR(metrics::krippendorff_alpha_interval(m), expected, 1e-12);
  EXPECT_NEAR(expected, -0.5, 1e-12);
}

TEST(Alpha, Preconditions) {
  EXPECT_THROW(metrics::krippendorff_alpha_interval({{{1.0, 2.0}}}), MetricError);
  metrics::ReliabilityMatrix unpaired{{{1.0, std::nullopt}, {std::nullopt, 2.0}}};
  EXPECT_THROW(metrics::krippendorff_alpha_interval(unpaired), MetricError);
}

TEST(Alpha, MatchesEnumerationWithMissingValues) {
  std::mt19937_64 gen(17);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = 2 + gen() % 5;
    const std::size_t c = 1 + gen() % 12;
    metrics::ReliabilityMatrix m;
    m.rows.assign(r, std::vector<std::optional<double>>(c));
    for (auto& row : m.rows) {
      for (auto& cell : row) {
        if (gen() % 5 != 0) cell = 1.0 + static_cast<double>(gen() % 7);
      }
    }
    double expected;
    try {
      expected = metrics::krippendorff_alpha_interval(m);
    } catch (const MetricError&) {
      continue;  // nothing pairable
    }
    EXPECT_NEAR(expected, oracle::alpha_interval(m.rows), 1e-12);
    EXPECT_LE(expected, 1.0);
    ++checked;
  }
  EXPECT_GT(checked, 200);
}

TEST(MeanStd, PopulationStd) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const auto ms = metrics::mean_std(v);
  EXPECT_DOUBLE_EQ(ms.mean, 5.0);
  EXPECT_DOUBLE_EQ(ms.std, 2.0);
  EXPECT_THROW(metrics::mean_std(std::vector<double>{}), MetricError);
}

TEST(MeanStd, MatchesTwoPassOracle) {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + gen() % 50);
    for (auto& x : v) x = u(gen);
    const auto ms = metrics::mean_std(v);
    const auto [m, s] = oracle::mean_std(v);
    EXPECT_NEAR(ms.mean, m, 1e-12);
    EXPECT_NEAR(ms.std, s, 1e-12);
  }
}
