#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "miso/errors.hpp"
#include "miso/sampling.hpp"
#include "test_support.hpp"

namespace {

using miso::Philox;
using miso::Sampling;
using miso::Subset;
using miso::WeightedSubset;
using miso::testing::subsets_of_size;

// ---------------------------------------------------------------------------
// Hand-rolled generators of proper uniform samplings
// ---------------------------------------------------------------------------

// Mixture of tau-nice samplings: a size t is chosen with weight w_t, then a
// uniform subset of that size. Inclusion probabilities are sum_t w_t t / n.
std::vector<WeightedSubset> random_size_mixture(std::size_t n, Philox& rng) {
  std::vector<double> w(n + 1, 0.0);
  double total = 0.0;
  for (std::size_t t = 1; t <= n; ++t) {
    w[t] = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    total += w[t];
  }
  if (total == 0.0) {
    w[n] = 1.0;
    total = 1.0;
  }
  std::vector<WeightedSubset> support;
  for (std::size_t t = 1; t <= n; ++t) {
    if (w[t] == 0.0) continue;
    const auto subsets = subsets_of_size(n, t);
    for (const auto& s : subsets) support.push_back({s, w[t] / total / static_cast<double>(subsets.size())});
  }
  return support;
}

// Uniformly chosen block of a random partition into equal-size blocks.
std::vector<WeightedSubset> random_partition(std::size_t n, Philox& rng) {
  std::vector<std::size_t> divisors;
  for (std::size_t b = 1; b <= n; ++b) {
    if (n % b == 0) divisors.push_back(b);
  }
  const std::size_t blocks = divisors[rng.uniform_index(divisors.size())];
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<WeightedSubset> support(blocks);
  for (std::size_t i = 0; i < n; ++i) support[i % blocks].indices.push_back(perm[i]);
  for (auto& s : support) s.probability = 1.0 / static_cast<double>(blocks);
  return support;
}

// Independent inclusion with a common probability q (the empty set included).
std::vector<WeightedSubset> independent_sampling(std::size_t n, double q) {
  std::vector<WeightedSubset> support;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    WeightedSubset s;
    double prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::uint64_t{1} << i)) {
        s.indices.push_back(i);
        prob *= q;
      } else {
        prob *= 1.0 - q;
      }
    }
    s.probability = prob;
    support.push_back(std::move(s));
  }
  return support;
}

// E || sum_{i in S} a_i / p ||^2 by direct summation over a support.
long double second_moment(const std::vector<WeightedSubset>& support, const miso::Matrix& a, double p) {
  long double total = 0.0L;
  for (const auto& s : support) {
    miso::Vector v = miso::Vector::Zero(a.rows());
    for (std::size_t i : s.indices) v += a.col(static_cast<Eigen::Index>(i)) / p;
    total += static_cast<long double>(s.probability) * miso::testing::sq_norm_ld(v);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Supports
// ---------------------------------------------------------------------------

TEST(TauNiceSupport, FullBatchIsDeterministic) {
  const auto support = Sampling::tau_nice(5, 5).enumerate_support();
  ASSERT_EQ(support.size(), 1u);
  EXPECT_EQ(support[0].indices, (Subset{0, 1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(support[0].probability, 1.0);
}

TEST(TauNiceSupport, SingletonsAreUniform) {
  const auto support = Sampling::tau_nice(5, 1).enumerate_support();
  ASSERT_EQ(support.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(support[i].indices, Subset{i});
    EXPECT_DOUBLE_EQ(support[i].probability, 0.2);
  }
}

TEST(TauNiceSupport, PairsOfFourMatchBitmaskEnumeration) {
  const auto support = Sampling::tau_nice(4, 2).enumerate_support();
  const auto reference = subsets_of_size(4, 2);
  ASSERT_EQ(support.size(), 6u);
  std::set<Subset> got, want(reference.begin(), reference.end());
  for (const auto& s : support) {
    got.insert(s.indices);
    EXPECT_DOUBLE_EQ(s.probability, 1.0 / 6.0);
  }
  EXPECT_EQ(got, want);
}

TEST(TauNiceSupport, LexicographicOrder) {
  const auto support = Sampling::tau_nice(3, 2).enumerate_support();
  ASSERT_EQ(support.size(), 3u);
  EXPECT_EQ(support[0].indices, (Subset{0, 1}));
  EXPECT_EQ(support[1].indices, (Subset{0, 2}));
  EXPECT_EQ(support[2].indices, (Subset{1, 2}));
  for (const auto& s : support) EXPECT_DOUBLE_EQ(s.probability, 1.0 / 3.0);
}

TEST(SingleElementSupport, TwoSingletons) {
  const auto support = Sampling::single_element(2).enumerate_support();
  ASSERT_EQ(support.size(), 2u);
  EXPECT_EQ(support[0].indices, Subset{0});
  EXPECT_EQ(support[1].indices, Subset{1});
  EXPECT_DOUBLE_EQ(support[0].probability, 0.5);
}

TEST(Support, CapIsEnforced) {
  EXPECT_EQ(miso::binomial(20, 10), 184756u);
  EXPECT_THROW(Sampling::tau_nice(20, 10).enumerate_support(100000), miso::SupportTooLarge);
  EXPECT_NO_THROW(Sampling::tau_nice(20, 10).enumerate_support(184756));
}

TEST(Support, SizesAgreeWithBitmaskCount) {
  for (std::size_t n = 1; n <= 10; ++n) {
    for (std::size_t t = 1; t <= n; ++t) {
      EXPECT_EQ(Sampling::tau_nice(n, t).support_size(), subsets_of_size(n, t).size());
      EXPECT_EQ(Sampling::tau_nice(n, t).enumerate_support().size(), subsets_of_size(n, t).size());
    }
  }
}

TEST(Binomial, SaturatesInsteadOfOverflowing) {
  EXPECT_EQ(miso::binomial(5, 7), 0u);
  EXPECT_EQ(miso::binomial(67, 33), 14226520737620288370ull);
  EXPECT_EQ(miso::binomial(200, 100), std::numeric_limits<std::size_t>::max());
}

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

TEST(Constants, TauNiceFiveTwo) {
  const auto c = Sampling::tau_nice(5, 2).constants();
  EXPECT_DOUBLE_EQ(c.A, 1.875);
  EXPECT_DOUBLE_EQ(c.B, 0.625);
  EXPECT_DOUBLE_EQ(c.tau, 2.0);
  EXPECT_DOUBLE_EQ(c.M, 2.0);
  EXPECT_DOUBLE_EQ(c.p, 0.4);
}

TEST(Constants, FullBatch) {
  const auto c = Sampling::tau_nice(5, 5).constants();
  EXPECT_EQ(c.A, 0.0);
  EXPECT_EQ(c.B, 1.0);
}

TEST(Constants, SingleElement) {
  const auto c = Sampling::single_element(7).constants();
  EXPECT_EQ(c.A, 7.0);
  EXPECT_EQ(c.B, 0.0);
  EXPECT_EQ(c.tau, 1.0);
}

TEST(Constants, SingleComponentProblem) {
  const auto c = Sampling::tau_nice(1, 1).constants();
  EXPECT_EQ(c.A, 0.0);
  EXPECT_EQ(c.B, 1.0);
}

TEST(Constants, ExplicitPartition) {
  // Two blocks of two: E^i|S| = 2, p_i = 1/2, so A = 4.
  const auto s = Sampling::explicit_distribution(4, {{{0, 1}, 0.5}, {{2, 3}, 0.5}});
  const auto c = s.constants();
  EXPECT_DOUBLE_EQ(c.A, 4.0);
  EXPECT_EQ(c.B, 0.0);
  EXPECT_DOUBLE_EQ(c.tau, 2.0);
  EXPECT_DOUBLE_EQ(c.M, 2.0);
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

TEST(SamplingProperty, TauNiceIdentityIsExact) {
  Philox rng(101);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (std::size_t tau = 1; tau <= n; ++tau) {
      const auto c = Sampling::tau_nice(n, tau).constants();
      std::vector<WeightedSubset> support;
      for (auto& s : subsets_of_size(n, tau)) {
        support.push_back({s, 1.0 / static_cast<double>(miso::binomial(n, tau))});
      }
      for (int trial = 0; trial < 5; ++trial) {
        const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(4));
        const miso::Matrix a = miso::testing::gaussian_matrix(d, static_cast<Eigen::Index>(n), rng);
        const long double lhs = second_moment(support, a, c.p);
        long double sum_sq = 0.0L;
        for (Eigen::Index i = 0; i < a.cols(); ++i) sum_sq += miso::testing::sq_norm_ld(a.col(i));
        const long double rhs = c.A * sum_sq + c.B * miso::testing::sq_norm_ld(a.rowwise().sum());
        EXPECT_LE(std::abs(static_cast<double>((lhs - rhs) / rhs)), 1e-12) << "n=" << n << " tau=" << tau;
      }
    }
  }
}

TEST(SamplingProperty, GeneralConstantsAreUpperBounds) {
  Philox rng(202);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(5);
    std::vector<WeightedSubset> support;
    switch (trial % 3) {
      case 0:
        support = random_size_mixture(n, rng);
        break;
      case 1:
        support = random_partition(n, rng);
        break;
      default:
        support = independent_sampling(n, 0.1 + 0.8 * rng.uniform());
        break;
    }
    const auto s = Sampling::explicit_distribution(n, support);
    const auto c = s.constants();
    const miso::Matrix a = miso::testing::gaussian_matrix(3, static_cast<Eigen::Index>(n), rng);
    const long double lhs = second_moment(s.explicit_support(), a, c.p);
    long double sum_sq = 0.0L;
    for (Eigen::Index i = 0; i < a.cols(); ++i) sum_sq += miso::testing::sq_norm_ld(a.col(i));
    const long double rhs = c.A * sum_sq + c.B * miso::testing::sq_norm_ld(a.rowwise().sum());
    EXPECT_LE(static_cast<double>(lhs), static_cast<double>(rhs) * (1 + 1e-12)) << "trial " << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(SamplingProperty, SingleElementBoundIsTightOnBasisVectors) {
  const auto s = Sampling::single_element(3);
  const auto c = s.constants();
  const miso::Matrix a = miso::Matrix::Identity(3, 3);
  const long double lhs = second_moment(s.enumerate_support(), a, c.p);
  EXPECT_NEAR(static_cast<double>(lhs), 9.0, 1e-12);
  EXPECT_NEAR(c.A * 3.0, 9.0, 1e-12);
}

TEST(SamplingProperty, InclusionProbabilitiesAreTauOverN) {
  for (std::size_t n = 1; n <= 9; ++n) {
    for (std::size_t tau = 1; tau <= n; ++tau) {
      const Sampling s = Sampling::tau_nice(n, tau);
      std::vector<double> p(n, 0.0);
      std::vector<double> size_given_i(n, 0.0);
      for (const auto& w : s.enumerate_support()) {
        for (std::size_t i : w.indices) {
          p[i] += w.probability;
          size_given_i[i] += w.probability * static_cast<double>(w.indices.size());
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(p[i], static_cast<double>(tau) / n, 1e-12);
        EXPECT_NEAR(size_given_i[i] / p[i], s.constants().M, 1e-12);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

TEST(Validation, RejectsBadTau) {
  EXPECT_THROW(Sampling::tau_nice(5, 0), miso::ConfigError);
  EXPECT_THROW(Sampling::tau_nice(5, 6), miso::ConfigError);
  EXPECT_THROW(Sampling::tau_nice(0, 1), miso::ConfigError);
}

TEST(Validation, RejectsNonUniformExplicit) {
  EXPECT_THROW(Sampling::explicit_distribution(3, {{{0}, 0.5}, {{0, 1, 2}, 0.5}}), miso::ConfigError);
  EXPECT_THROW(Sampling::explicit_distribution(3, {{{0, 1}, 1.0}}), miso::ConfigError);  // not proper
  EXPECT_THROW(Sampling::explicit_distribution(2, {{{0}, 0.5}, {{1}, 0.4}}), miso::ConfigError);
  EXPECT_THROW(Sampling::explicit_distribution(2, {{{0, 0}, 0.5}, {{1}, 0.5}}), miso::ConfigError);
  EXPECT_THROW(Sampling::explicit_distribution(2, {{{0}, 0.5}, {{2}, 0.5}}), miso::ConfigError);
  EXPECT_THROW(Sampling::explicit_distribution(2, {{{0}, 0.5}, {{0}, 0.5}}), miso::ConfigError);
}

TEST(Validation, AcceptsUniformExplicit) {
  EXPECT_NO_THROW(Sampling::explicit_distribution(3, {{{0, 1}, 1.0 / 3}, {{1, 2}, 1.0 / 3}, {{0, 2}, 1.0 / 3}}));
}

// ---------------------------------------------------------------------------
// Drawing
// ---------------------------------------------------------------------------

TEST(Sampler, FullBatchDraw) {
  miso::SubsetSampler sampler(Sampling::tau_nice(3, 3), Philox(99));
  for (int i = 0; i < 5; ++i) {
    auto s = sampler.draw();
    std::set<std::size_t> got(s.begin(), s.end());
    EXPECT_EQ(got, (std::set<std::size_t>{0, 1, 2}));
  }
}

TEST(Sampler, DrawsAreDistinctAndInRange) {
  miso::SubsetSampler sampler(Sampling::tau_nice(50, 17), Philox(1));
  for (int i = 0; i < 1000; ++i) {
    auto s = sampler.draw();
    ASSERT_EQ(s.size(), 17u);
    std::set<std::size_t> got(s.begin(), s.end());
    ASSERT_EQ(got.size(), 17u);
    ASSERT_LT(*got.rbegin(), 50u);
  }
}

TEST(Sampler, SingleElementFrequencies) {
  miso::SubsetSampler sampler(Sampling::single_element(2), Philox(5));
  const int draws = 100000;
  int zeros = 0;
  for (int i = 0; i < draws; ++i) zeros += sampler.draw()[0] == 0;
  EXPECT_NEAR(static_cast<double>(zeros) / draws, 0.5, 0.01);
}

TEST(Sampler, PairFrequenciesMatchEnumeration) {
  const Sampling s = Sampling::tau_nice(4, 2);
  miso::SubsetSampler sampler(s, Philox(6));
  std::map<Subset, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto d = sampler.draw();
    Subset key(d.begin(), d.end());
    std::sort(key.begin(), key.end());
    ++counts[key];
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& w : s.enumerate_support()) {
    EXPECT_NEAR(static_cast<double>(counts[w.indices]) / draws, w.probability, 0.01);
  }
}

TEST(Sampler, ExplicitFrequencies) {
  const Sampling s = Sampling::explicit_distribution(4, {{{0, 1}, 0.25}, {{2, 3}, 0.25}, {{2, 3, 0, 1}, 0.5}});
  miso::SubsetSampler sampler(s, Philox(8));
  std::map<std::size_t, int> by_size;
  const int draws = 100000;
  int first = 0;
  for (int i = 0; i < draws; ++i) {
    auto d = sampler.draw();
    ++by_size[d.size()];
    first += d.size() == 2 && d[0] == 0;
  }
  EXPECT_NEAR(static_cast<double>(first) / draws, 0.25, 0.01);
  EXPECT_NEAR(static_cast<double>(by_size[4]) / draws, 0.5, 0.01);
}

TEST(Sampler, SameSeedSameDraws) {
  miso::SubsetSampler a(Sampling::tau_nice(30, 4), Philox(77));
  miso::SubsetSampler b(Sampling::tau_nice(30, 4), Philox(77));
  for (int i = 0; i < 100; ++i) {
    auto x = a.draw();
    auto y = b.draw();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}

}  // namespace
